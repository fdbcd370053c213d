//! JSON Lines dataset manifests.
//!
//! One record per line. Relative artifact paths resolve against the
//! directory holding the manifest. Blank lines are skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{read_bytes, write_bytes};

/// File stem shared by every per-frame artifact: `<clip_id>_<frame:06>`.
pub fn frame_stem(clip_id: &str, frame_index: u32) -> String {
    format!("{clip_id}_{frame_index:06}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// One frame of one clip and the artifacts available for it.
///
/// `flow_fwd_path` and `flow_bwd_path` hold unit-step flow to frames
/// `t + 1` and `t - 1`. `flows` optionally maps a signed distance `k` to a
/// direct `t -> t + k` flow file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub clip_id: String,
    pub frame_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_fwd_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_bwd_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flows: BTreeMap<i32, PathBuf>,
    pub domain: Domain,
    pub split: Split,
}

impl ManifestRecord {
    pub fn new(clip_id: impl Into<String>, frame_index: u32, domain: Domain, split: Split) -> Self {
        ManifestRecord {
            clip_id: clip_id.into(),
            frame_index,
            image_path: None,
            label_path: None,
            flow_fwd_path: None,
            flow_bwd_path: None,
            flows: BTreeMap::new(),
            domain,
            split,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.clip_id.is_empty() {
            return Err("clip_id is empty".into());
        }
        let any_path = self.image_path.is_some()
            || self.label_path.is_some()
            || self.flow_fwd_path.is_some()
            || self.flow_bwd_path.is_some()
            || !self.flows.is_empty();
        if !any_path {
            return Err("record has no artifact path".into());
        }
        if self.flows.contains_key(&0) {
            return Err("flows entry for distance 0".into());
        }
        Ok(())
    }

    /// Flow file for `t -> t + k`, if the record names one directly.
    pub fn flow_path(&self, k: i32) -> Option<&Path> {
        if let Some(p) = self.flows.get(&k) {
            return Some(p);
        }
        match k {
            1 => self.flow_fwd_path.as_deref(),
            -1 => self.flow_bwd_path.as_deref(),
            _ => None,
        }
    }

    pub fn stem(&self) -> String {
        frame_stem(&self.clip_id, self.frame_index)
    }

    fn key(&self) -> (&str, u32) {
        (&self.clip_id, self.frame_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    base_dir: PathBuf,
    records: Vec<ManifestRecord>,
    clip_index: BTreeMap<String, Vec<u32>>,
}

impl DatasetManifest {
    /// Validates, sorts by `(clip_id, frame_index)` and indexes the records.
    pub fn from_records(mut records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        for r in &records {
            r.validate().map_err(|message| Error::Record { line: 0, message })?;
        }
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut clip_index: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for pair in records.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(Error::Duplicate {
                    clip_id: pair[0].clip_id.clone(),
                    frame_index: pair[0].frame_index,
                });
            }
        }
        for r in &records {
            clip_index.entry(r.clip_id.clone()).or_default().push(r.frame_index);
        }
        Ok(DatasetManifest {
            base_dir: base_dir.into(),
            records,
            clip_index,
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    /// Clip id to its sorted frame indices.
    pub fn clip_index(&self) -> &BTreeMap<String, Vec<u32>> {
        &self.clip_index
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, clip_id: &str, frame_index: u32) -> Option<&ManifestRecord> {
        self.records
            .binary_search_by(|r| r.key().cmp(&(clip_id, frame_index)))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Joins a relative artifact path onto the manifest directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// A manifest holding only the records accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&ManifestRecord) -> bool) -> DatasetManifest {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        DatasetManifest::from_records(records, self.base_dir.clone()).expect("subset of a valid manifest")
    }

    /// One JSON object per line in sorted record order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), self.to_jsonl()?.as_bytes())
    }
}

pub fn parse_manifest(text: &str, base_dir: impl Into<PathBuf>) -> Result<DatasetManifest> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        record.validate().map_err(|message| Error::Record { line, message })?;
        records.push(record);
    }
    DatasetManifest::from_records(records, base_dir)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("manifest is not UTF-8: {e}")).at(path))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(text, base).map_err(|e| e.at(path))
}
