use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsselect::diagnostics::GradcheckConfig;
use tsselect::meta_dataset::WorldConfig;
use tsselect::selector::SelectorConfig;
use tsselect::trainer::TrainConfig;

/// Every knob of a run. Loaded from JSON, then overridden by flags; the
/// resolved value is written into each manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; world, split and training substreams derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Datasets held out for testing.
    pub holdout: usize,
    pub world: WorldConfig,
    pub selector: SelectorConfig,
    pub train: TrainConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("tsselect-out"),
            holdout: 3,
            world: WorldConfig::default(),
            selector: SelectorConfig::default(),
            train: TrainConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Propagate the root seed into the module configs that carry one.
    pub fn resolve(mut self) -> Self {
        self.train.seed = self.seed;
        self.gradcheck.seed = self.seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "bogus": 2}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lamda": 0.5}}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "train": {"epochs": 3}}"#).unwrap();
        let c = c.resolve();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.train.lambda, 0.7);
        assert_eq!(c.world.n_datasets, 14);
    }
}
