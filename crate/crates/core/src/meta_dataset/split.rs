use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::meta_dataset::MetaDataset;
use crate::rng::seeded;

/// Dataset ids assigned to each partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl MetaSplit {
    pub fn apply(&self, meta: &MetaDataset) -> (MetaDataset, MetaDataset, MetaDataset) {
        (meta.restrict(&self.train), meta.restrict(&self.val), meta.restrict(&self.test))
    }
}

/// Hold out `holdout` whole datasets for testing and split the rest 8:1
/// into training and validation datasets.
pub fn split_meta_ids(meta: &MetaDataset, holdout: usize, seed: u64) -> Result<MetaSplit> {
    let ids: BTreeSet<&str> = meta.samples.iter().map(|s| s.dataset_id.as_str()).collect();
    let mut ids: Vec<String> = ids.into_iter().map(String::from).collect();
    if ids.len() < holdout + 2 {
        return Err(invalid!(
            "{} datasets cannot hold out {holdout} and still train and validate",
            ids.len()
        ));
    }
    ids.shuffle(&mut seeded(seed));
    let test: Vec<String> = ids.drain(..holdout).collect();
    let n_val = ((ids.len() as f64 / 9.0).round() as usize).clamp(1, ids.len() - 1);
    let val: Vec<String> = ids.drain(ids.len() - n_val..).collect();
    let sorted = |mut v: Vec<String>| {
        v.sort();
        v
    };
    Ok(MetaSplit {
        train: sorted(ids),
        val: sorted(val),
        test: sorted(test),
    })
}

pub fn split_meta(meta: &MetaDataset, holdout: usize, seed: u64) -> Result<(MetaDataset, MetaDataset, MetaDataset)> {
    Ok(split_meta_ids(meta, holdout, seed)?.apply(meta))
}
