use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model_encoder::DagGraph;

pub const CARD_FORMAT_VERSION: u32 = 1;

/// Pre-training domain vocabulary, in one-hot order.
pub const DOMAIN_VOCABULARY: [&str; 7] = [
    "electricity",
    "energy",
    "traffic",
    "environment",
    "nature",
    "economic",
    "general",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    EncoderOnly,
    DecoderOnly,
    EncoderDecoder,
}

impl Architecture {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Architecture::EncoderOnly => [1.0, 0.0, 0.0],
            Architecture::DecoderOnly => [0.0, 1.0, 0.0],
            Architecture::EncoderDecoder => [0.0, 0.0, 1.0],
        }
    }
}

fn default_version() -> u32 {
    CARD_FORMAT_VERSION
}

/// Serializable description of one hub model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub id: String,
    pub architecture: Architecture,
    pub param_count: u64,
    pub gmacs: f64,
    pub hidden_dim: u64,
    pub pretrain_domains: BTreeSet<String>,
    pub dag: DagGraph,
    /// Raw concatenated outputs of the model on the shared probe batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_signature: Option<Vec<f64>>,
}

impl ModelCard {
    pub fn validate(&self) -> Result<()> {
        if self.param_count == 0 || self.hidden_dim == 0 {
            return Err(invalid!("card `{}`: counts must be positive", self.id));
        }
        if !(self.gmacs.is_finite() && self.gmacs > 0.0) {
            return Err(invalid!("card `{}`: gmacs must be a positive number", self.id));
        }
        for d in &self.pretrain_domains {
            if !DOMAIN_VOCABULARY.contains(&d.as_str()) {
                return Err(invalid!(
                    "card `{}`: unknown domain `{d}`; expected one of {}",
                    self.id,
                    DOMAIN_VOCABULARY.join(", ")
                ));
            }
        }
        if let Some(sig) = &self.probe_signature {
            if sig.is_empty() || sig.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("card `{}`: probe signature must be finite and non-empty", self.id));
            }
        }
        self.dag.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let card: ModelCard = serde_json::from_str(&text)?;
        card.validate()?;
        Ok(card)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
