//! The meta-dataset: per-(dataset, horizon) ground-truth score vectors over
//! a fixed model hub, plus the synthetic world that produces them.

mod dataset;
pub(crate) mod hub;
mod oracle;
mod scores;
mod split;
mod store;
mod tasks;
mod world;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dataset::{
    load_dataset, ConstantPolicy, DatasetSchema, LoadOptions, MissingPolicy, SplitRatio, TimeSeriesDataset,
};
pub(crate) use dataset::mean_std;
pub use hub::{least_squares, synthetic_hub, FamilySpec, ModelFamily, ModelMeta, SyntheticModel, Windows, PRETRAIN_HORIZON};
pub use oracle::{adapted_mse, oracle_ground_truth, OracleConfig, OracleOutcome};
pub use scores::{normalize_scores, ScoreNormalization};
pub use split::{split_meta, split_meta_ids, MetaSplit};
pub use tasks::{sample_tasks, Task, TaskStrategy};
pub use store::{load_world, save_world, DatasetEntry, StoredWorld, WorldIndex, WORLD_FORMAT_VERSION, WORLD_INDEX};
pub use world::{generate_synthetic_world, regime_dataset, synthetic_dataset, top1_models, world_regimes, Regime, World, WorldConfig};

use crate::error::{invalid, Error, Result};

pub const META_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Oracle,
    External,
}

/// Ground-truth scores of every hub model for one (dataset, horizon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaSample {
    pub dataset_id: String,
    pub horizon: usize,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub provenance: Provenance,
}

fn default_version() -> u32 {
    META_FORMAT_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    #[serde(default = "default_version")]
    pub format_version: u32,
    /// Model card ids, in score order.
    pub hub: Vec<String>,
    pub samples: Vec<MetaSample>,
}

impl MetaDataset {
    pub fn new(hub: Vec<String>, samples: Vec<MetaSample>) -> Result<Self> {
        let meta = MetaDataset {
            format_version: META_FORMAT_VERSION,
            hub,
            samples,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != META_FORMAT_VERSION {
            return Err(invalid!("unsupported meta-dataset format version {}", self.format_version));
        }
        let k = self.hub.len();
        let mut seen = BTreeSet::new();
        for s in &self.samples {
            if s.scores.len() != k {
                return Err(invalid!(
                    "sample {}@{} has {} scores for a hub of {k}",
                    s.dataset_id,
                    s.horizon,
                    s.scores.len()
                ));
            }
            if s.horizon == 0 {
                return Err(invalid!("sample {} has horizon 0", s.dataset_id));
            }
            if s.scores.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid!("sample {}@{} has scores outside [0, 1]", s.dataset_id, s.horizon));
            }
            if !seen.insert((s.dataset_id.as_str(), s.horizon)) {
                return Err(invalid!("duplicate sample {}@{}", s.dataset_id, s.horizon));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.hub.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.samples.iter().map(|s| s.dataset_id.as_str()).collect();
        ids.into_iter().map(String::from).collect()
    }

    pub fn horizons(&self) -> Vec<usize> {
        let hs: BTreeSet<usize> = self.samples.iter().map(|s| s.horizon).collect();
        hs.into_iter().collect()
    }

    /// Samples of the given datasets, in stored order.
    pub fn restrict(&self, ids: &[String]) -> MetaDataset {
        let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        MetaDataset {
            format_version: self.format_version,
            hub: self.hub.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(s.dataset_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: MetaDataset = serde_json::from_str(&text)?;
        meta.validate()?;
        Ok(meta)
    }
}
