//! In-memory training data: one feature sequence and label set per trailer.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dvtf::read_features;
use crate::error::{Error, Result};
use crate::genres::GenreSet;
use crate::manifest::{read_manifest, TrailerRecord};

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub id: String,
    pub features: Array2<f64>,
    pub truth: GenreSet,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<DatasetItem>,
    index: HashMap<String, usize>,
    feature_width: usize,
}

impl Dataset {
    pub fn new(items: Vec<DatasetItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::validation("dataset has no items"));
        }
        let feature_width = items[0].features.ncols();
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.features.nrows() == 0 || item.features.ncols() != feature_width {
                return Err(Error::validation(format!(
                    "item {:?} has feature shape {:?}, expected nonempty x{feature_width}",
                    item.id,
                    item.features.dim()
                )));
            }
            if item.truth.is_empty() {
                return Err(Error::validation(format!("item {:?} has no genres", item.id)));
            }
            if index.insert(item.id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate trailer id {:?}", item.id)));
            }
        }
        Ok(Dataset { items, index, feature_width })
    }

    /// Load every record of a manifest through its `feature_path`. All
    /// sequences must come from the same backbone (same id and width).
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let records = read_manifest(manifest_path)?;
        Self::from_records(manifest_path, &records)
    }

    pub fn from_records(manifest_path: &Path, records: &[TrailerRecord]) -> Result<Self> {
        let mut items = Vec::with_capacity(records.len());
        let mut backbone: Option<String> = None;
        for record in records {
            let stored = record.feature_path.as_deref().ok_or_else(|| {
                Error::validation(format!("record {:?} has no feature_path", record.id))
            })?;
            let seq = read_features(&TrailerRecord::resolve(manifest_path, stored))?;
            match &backbone {
                None => backbone = Some(seq.backbone_id.clone()),
                Some(expected) if *expected != seq.backbone_id => {
                    return Err(Error::validation(format!(
                        "record {:?} uses backbone {:?}, manifest started with {:?}",
                        record.id, seq.backbone_id, expected
                    )));
                }
                Some(_) => {}
            }
            items.push(DatasetItem {
                id: record.id.clone(),
                features: seq.to_f64(),
                truth: record.genres,
            });
        }
        Dataset::new(items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&DatasetItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.id.as_str()).collect()
    }

    pub fn labelsets(&self) -> Vec<GenreSet> {
        self.items.iter().map(|i| i.truth).collect()
    }

    /// Same features, labels permuted across trailers — the chance-level
    /// control for training experiments.
    pub fn with_shuffled_labels<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let mut labels: Vec<GenreSet> = self.items.iter().map(|i| i.truth).collect();
        labels.shuffle(rng);
        let items = self
            .items
            .iter()
            .zip(labels)
            .map(|(item, truth)| DatasetItem { truth, ..item.clone() })
            .collect();
        Dataset::new(items).expect("shuffling labels preserves validity")
    }
}
