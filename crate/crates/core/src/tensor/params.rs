//! Named parameter storage with deterministic ordering.
//!
//! Parameters iterate in insertion order, which fixes checkpoint byte
//! layout and optimizer walk order. Binding a store onto a [`Tape`] creates
//! one leaf node per parameter and remembers the mapping so gradients can be
//! read back by name after `backward`.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{NodeId, Tape};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: IndexMap<String, Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::validation(format!("duplicate parameter {name:?}")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    /// Create a leaf node per parameter (in order) on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> TapeBinding {
        let mut ids = IndexMap::with_capacity(self.entries.len());
        for (name, value) in &self.entries {
            ids.insert(name.clone(), tape.leaf(value.clone()));
        }
        TapeBinding { ids }
    }
}

/// Mapping from parameter names to their leaf nodes on one tape.
#[derive(Debug, Clone)]
pub struct TapeBinding {
    ids: IndexMap<String, NodeId>,
}

impl TapeBinding {
    pub fn id(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} not bound on this tape"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Copy out the gradient of every bound parameter, in insertion order.
    pub fn grads(&self, tape: &Tape) -> Vec<(String, Array2<f64>)> {
        self.ids
            .iter()
            .map(|(name, &id)| (name.clone(), tape.grad(id).clone()))
            .collect()
    }
}

/// Linear-map initialization: uniform on `±√(1/fan_in)` where `fan_in` is
/// the row count (inputs multiply from the left as `1 × fan_in` rows).
pub fn linear_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let bound = (1.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..=bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store.insert("w", Array2::zeros((2, 2))).unwrap();
        assert!(store.insert("w", Array2::zeros((2, 2))).is_err());
    }

    #[test]
    fn iteration_preserves_insertion_order() {
        let mut store = ParamStore::new();
        for name in ["zeta", "alpha", "mid"] {
            store.insert(name, Array2::zeros((1, 1))).unwrap();
        }
        assert_eq!(store.names(), vec!["zeta", "alpha", "mid"]);
    }

    #[test]
    fn linear_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = linear_init(64, 32, &mut rng);
        let bound = (1.0f64 / 64.0).sqrt();
        assert!(w.iter().all(|&v| v.abs() <= bound));
        // Not degenerate: values actually vary.
        let distinct: std::collections::HashSet<u64> = w.iter().map(|v| v.to_bits()).collect();
        assert!(distinct.len() > 100);
    }

    #[test]
    fn binding_reads_gradients_back_by_name() {
        let mut store = ParamStore::new();
        store.insert("w", Array2::from_elem((2, 3), 2.0)).unwrap();
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        let w = binding.id("w");
        let s = tape.sum(w);
        tape.backward(s).unwrap();
        let grads = binding.grads(&tape);
        assert_eq!(grads.len(), 1);
        assert_eq!(grads[0].0, "w");
        assert!(grads[0].1.iter().all(|&v| v == 1.0));
    }
}
