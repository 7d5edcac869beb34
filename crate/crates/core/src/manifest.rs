//! The trailer manifest: one JSON record per line.
//!
//! Each record names a trailer, where its data lives (a feature file, a raw
//! video, or both), its genre labels, and basic timing. Paths are stored as
//! written and resolved relative to the manifest's directory by consumers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genres::GenreSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailerRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_path: Option<String>,
    pub genres: GenreSet,
    pub fps: f64,
    pub duration_frames: u64,
}

impl TrailerRecord {
    /// Field-level checks shared by parsing and writing.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("record id is empty"));
        }
        if self.id.contains(',') || self.id.contains('\n') {
            return Err(Error::validation(format!(
                "record id {:?} contains a separator character",
                self.id
            )));
        }
        if self.feature_path.is_none() && self.video_path.is_none() {
            return Err(Error::validation(format!(
                "record {:?} has neither feature_path nor video_path",
                self.id
            )));
        }
        if self.genres.is_empty() {
            return Err(Error::validation(format!("record {:?} has no genres", self.id)));
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(Error::validation(format!(
                "record {:?} has invalid fps {}",
                self.id, self.fps
            )));
        }
        if self.duration_frames == 0 {
            return Err(Error::validation(format!(
                "record {:?} has zero duration_frames",
                self.id
            )));
        }
        Ok(())
    }

    /// Resolve `path` against the directory containing the manifest.
    pub fn resolve(manifest_path: &Path, stored: &str) -> std::path::PathBuf {
        let p = Path::new(stored);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(p)
        }
    }
}

/// Parse a whole manifest. Errors carry 1-based line numbers; blank lines
/// are ignored; duplicate ids are rejected.
pub fn parse_manifest(text: &str) -> Result<Vec<TrailerRecord>> {
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrailerRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        record
            .validate()
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::parse(lineno, format!("duplicate id {:?}", record.id)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::validation("manifest contains no records"));
    }
    Ok(records)
}

pub fn manifest_to_string(records: &[TrailerRecord]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        record.validate()?;
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<TrailerRecord>> {
    let text = fs::read_to_string(path)?;
    parse_manifest(&text)
}

pub fn write_manifest(path: &Path, records: &[TrailerRecord]) -> Result<()> {
    fs::write(path, manifest_to_string(records)?)?;
    Ok(())
}
