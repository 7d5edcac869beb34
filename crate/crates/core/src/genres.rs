//! The fixed genre vocabulary and bitmask label sets.
//!
//! The ten genres are ordered once and for all; the bit position of a genre
//! never changes, so label masks, indicator vectors, and per-genre metric
//! columns all line up across files written at different times.

use std::fmt;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Genre names in canonical order. Index = bit position.
pub const GENRES: [&str; 10] = [
    "action",
    "adventure",
    "comedy",
    "crime",
    "drama",
    "fantasy",
    "horror",
    "romance",
    "science-fiction",
    "thriller",
];

pub const GENRE_COUNT: usize = GENRES.len();

/// Index of `name` in the canonical vocabulary.
pub fn genre_index(name: &str) -> Option<usize> {
    GENRES.iter().position(|g| *g == name)
}

/// A set of genres as a 10-bit mask over the canonical vocabulary.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GenreSet(u16);

impl GenreSet {
    pub const fn empty() -> Self {
        GenreSet(0)
    }

    /// Build from genre names; unknown names are rejected.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = GenreSet::empty();
        for name in names {
            let name = name.as_ref();
            let idx = genre_index(name)
                .ok_or_else(|| Error::validation(format!("unknown genre {name:?}")))?;
            set.insert(idx);
        }
        Ok(set)
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut set = GenreSet::empty();
        for &idx in indices {
            if idx >= GENRE_COUNT {
                return Err(Error::validation(format!("genre index {idx} out of range")));
            }
            set.insert(idx);
        }
        Ok(set)
    }

    /// Raw bitmask; bit i set ⇔ `GENRES[i]` present.
    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Result<Self> {
        if bits >> GENRE_COUNT != 0 {
            return Err(Error::validation(format!("genre bitmask {bits:#x} has bits beyond the vocabulary")));
        }
        Ok(GenreSet(bits))
    }

    pub fn insert(&mut self, idx: usize) {
        debug_assert!(idx < GENRE_COUNT);
        self.0 |= 1 << idx;
    }

    pub fn contains(self, idx: usize) -> bool {
        idx < GENRE_COUNT && self.0 & (1 << idx) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..GENRE_COUNT).filter(move |&i| self.contains(i))
    }

    pub fn names(self) -> Vec<&'static str> {
        self.indices().map(|i| GENRES[i]).collect()
    }

    /// 0/1 indicator vector in vocabulary order.
    pub fn indicator(self) -> [f64; GENRE_COUNT] {
        let mut y = [0.0; GENRE_COUNT];
        for i in self.indices() {
            y[i] = 1.0;
        }
        y
    }
}

impl fmt::Debug for GenreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GenreSet({:?})", self.names())
    }
}

impl fmt::Display for GenreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.names().join("+"))
    }
}

impl Serialize for GenreSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let names = self.names();
        let mut seq = serializer.serialize_seq(Some(names.len()))?;
        for name in names {
            seq.serialize_element(name)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for GenreSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct GenreSetVisitor;

        impl<'de> Visitor<'de> for GenreSetVisitor {
            type Value = GenreSet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of genre names")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<GenreSet, A::Error> {
                let mut set = GenreSet::empty();
                while let Some(name) = seq.next_element::<String>()? {
                    let idx = genre_index(&name).ok_or_else(|| {
                        serde::de::Error::custom(format!("unknown genre {name:?}"))
                    })?;
                    set.insert(idx);
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(GenreSetVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_fixed_and_ordered() {
        assert_eq!(GENRE_COUNT, 10);
        assert_eq!(GENRES[0], "action");
        assert_eq!(GENRES[4], "drama");
        assert_eq!(GENRES[8], "science-fiction");
        assert_eq!(GENRES[9], "thriller");
        // Bit positions follow vocabulary order exactly.
        for (i, name) in GENRES.iter().enumerate() {
            let set = GenreSet::from_names([*name]).unwrap();
            assert_eq!(set.bits(), 1 << i, "bit position drifted for {name}");
        }
    }

    #[test]
    fn from_names_builds_mask() {
        let set = GenreSet::from_names(["drama", "romance"]).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(4));
        assert!(set.contains(7));
        assert_eq!(set.names(), vec!["drama", "romance"]);
    }

    #[test]
    fn unknown_genre_is_rejected() {
        let err = GenreSet::from_names(["drama", "western"]).unwrap_err();
        assert!(err.to_string().contains("western"), "{err}");
    }

    #[test]
    fn indicator_matches_indices() {
        let set = GenreSet::from_names(["action", "thriller"]).unwrap();
        let y = set.indicator();
        assert_eq!(y[0], 1.0);
        assert_eq!(y[9], 1.0);
        assert_eq!(y.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn serde_round_trips_as_names() {
        let set = GenreSet::from_names(["comedy", "science-fiction"]).unwrap();
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"["comedy","science-fiction"]"#);
        let back: GenreSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn deserialize_rejects_unknown_names() {
        let err = serde_json::from_str::<GenreSet>(r#"["western"]"#).unwrap_err();
        assert!(err.to_string().contains("western"));
    }
}
