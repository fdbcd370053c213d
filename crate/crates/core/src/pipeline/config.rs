use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{frame_stem, load_manifest, DatasetManifest, ManifestRecord, Split};
use crate::raster::ClassSpace;
use crate::refine::Strategy;

pub const DEFAULT_NUM_CLASSES: u8 = 19;
pub const DEFAULT_SEED: u64 = 1;

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Settings shared by every batch job. Field names double as the keys of
/// the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub manifest: PathBuf,
    /// Predictions named `<clip_id>_<frame:06>.png`.
    pub pred_dir: PathBuf,
    /// Top-1 confidences named `<clip_id>_<frame:06>.pfm`.
    pub conf_dir: Option<PathBuf>,
    pub strategy: Strategy,
    pub frame_distance: i32,
    pub num_classes: u8,
    /// Classes scored by evaluation; every class when absent.
    pub classes: Option<Vec<u8>>,
    /// Restricts the job to one split.
    pub split: Option<Split>,
    pub workers: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            manifest: PathBuf::new(),
            pred_dir: PathBuf::new(),
            conf_dir: None,
            strategy: Strategy::Consistency,
            frame_distance: 1,
            num_classes: DEFAULT_NUM_CLASSES,
            classes: None,
            split: None,
            workers: default_workers(),
            seed: DEFAULT_SEED,
            out_dir: None,
        }
    }
}

impl JobConfig {
    pub fn class_space(&self) -> Result<ClassSpace> {
        ClassSpace::new(self.num_classes)
    }

    /// The evaluated class IDs, checked against the class space.
    pub fn universe(&self) -> Result<Vec<u8>> {
        let space = self.class_space()?;
        match &self.classes {
            None => Ok((0..space.num_classes()).collect()),
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::Config("class universe is empty".into()));
                }
                if let Some(&c) = list.iter().find(|&&c| !space.is_class(c)) {
                    return Err(Error::Config(format!(
                        "class {c} is outside a class space of {} classes",
                        space.num_classes()
                    )));
                }
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                Ok(list)
            }
        }
    }

    /// Checks the settings shared by every job.
    pub fn validate(&self) -> Result<()> {
        self.universe()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.manifest.as_os_str().is_empty() {
            return Err(Error::Config("no manifest given".into()));
        }
        if self.pred_dir.as_os_str().is_empty() {
            return Err(Error::Config("no prediction directory given".into()));
        }
        Ok(())
    }

    /// Checks the settings a refinement job additionally needs.
    pub fn validate_refine(&self) -> Result<()> {
        self.validate()?;
        if self.strategy.uses_flow() && self.frame_distance == 0 {
            return Err(Error::Config(format!("strategy {} needs a nonzero frame distance", self.strategy)));
        }
        if self.strategy.needs_confidence() && self.conf_dir.is_none() {
            return Err(Error::Config(format!("strategy {} needs a confidence directory", self.strategy)));
        }
        if self.out_dir.is_none() {
            return Err(Error::Config("no output directory given".into()));
        }
        Ok(())
    }

    /// Loads the manifest and keeps only the configured split.
    pub fn load_manifest(&self) -> Result<DatasetManifest> {
        let manifest = load_manifest(&self.manifest)?;
        Ok(match self.split {
            Some(split) => manifest.filtered(|r| r.split == split),
            None => manifest,
        })
    }

    pub fn pred_path(&self, clip_id: &str, frame: u32) -> PathBuf {
        self.pred_dir.join(format!("{}.png", frame_stem(clip_id, frame)))
    }

    pub fn conf_path(&self, clip_id: &str, frame: u32) -> Option<PathBuf> {
        self.conf_dir
            .as_deref()
            .map(|d| d.join(format!("{}.pfm", frame_stem(clip_id, frame))))
    }

    pub fn out_path(&self, record: &ManifestRecord) -> Option<PathBuf> {
        self.out_dir.as_deref().map(|d| d.join(format!("{}.png", record.stem())))
    }

    pub fn from_json(text: &str) -> Result<JobConfig> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<JobConfig> {
        let path = path.as_ref();
        let bytes = crate::io::read_bytes(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::from(e).at(path))
    }
}
