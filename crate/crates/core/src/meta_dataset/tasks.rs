use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::meta_dataset::{MetaDataset, MetaSample};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStrategy {
    CrossDataset,
    CrossHorizon,
}

impl TaskStrategy {
    /// Strict alternation, starting with cross-dataset.
    pub fn for_batch(index: usize) -> Self {
        if index % 2 == 0 {
            TaskStrategy::CrossDataset
        } else {
            TaskStrategy::CrossHorizon
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub support: Vec<MetaSample>,
    pub query: Vec<MetaSample>,
    pub strategy: TaskStrategy,
}

fn pick(pool: &[&MetaSample], n: usize, rng: &mut Rng) -> Vec<MetaSample> {
    let mut out: Vec<MetaSample> = pool.choose_multiple(rng, n).map(|s| (*s).clone()).collect();
    out.shuffle(rng);
    out
}

/// Draw `n_tasks` tasks. Cross-dataset tasks take their support set from
/// one dataset and their query set from the others; cross-horizon tasks fix
/// the support horizon and query the remaining horizons. Sets smaller than
/// requested are used whole.
pub fn sample_tasks(
    meta: &MetaDataset,
    strategy: TaskStrategy,
    n_tasks: usize,
    support_size: usize,
    query_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Task>> {
    if support_size == 0 || query_size == 0 {
        return Err(invalid!("support and query sizes must be positive"));
    }
    let key = |s: &MetaSample| match strategy {
        TaskStrategy::CrossDataset => s.dataset_id.clone(),
        TaskStrategy::CrossHorizon => format!("{:012}", s.horizon),
    };
    let mut groups: BTreeMap<String, Vec<&MetaSample>> = BTreeMap::new();
    for s in &meta.samples {
        groups.entry(key(s)).or_default().push(s);
    }
    if groups.len() < 2 {
        let what = match strategy {
            TaskStrategy::CrossDataset => "datasets",
            TaskStrategy::CrossHorizon => "horizons",
        };
        return Err(invalid!(
            "{strategy:?} sampling needs at least 2 distinct {what}, found {}",
            groups.len()
        ));
    }
    let keys: Vec<&String> = groups.keys().collect();
    let mut tasks = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let chosen = keys[rng.random_range(0..keys.len())];
        let rest: Vec<&MetaSample> = groups
            .iter()
            .filter(|(k, _)| *k != chosen)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let support = pick(&groups[chosen], support_size, rng);
        let query = pick(&rest, query_size, rng);
        tasks.push(Task {
            support,
            query,
            strategy,
        });
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta_dataset::Provenance;
    use crate::rng::seeded;

    fn meta(ids: &[&str], horizons: &[usize]) -> MetaDataset {
        let mut samples = Vec::new();
        for id in ids {
            for &h in horizons {
                samples.push(MetaSample {
                    dataset_id: id.to_string(),
                    horizon: h,
                    scores: vec![0.0, 1.0],
                    provenance: Provenance::Oracle,
                });
            }
        }
        MetaDataset::new(vec!["a".into(), "b".into()], samples).unwrap()
    }

    #[test]
    fn two_datasets_cross_dataset() {
        let m = meta(&["x", "y"], &[96, 192]);
        let t = &sample_tasks(&m, TaskStrategy::CrossDataset, 1, 4, 4, &mut seeded(1)).unwrap()[0];
        let s = &t.support[0].dataset_id;
        assert!(t.support.iter().all(|x| &x.dataset_id == s));
        assert!(t.query.iter().all(|x| &x.dataset_id != s));
    }

    #[test]
    fn cross_horizon_queries_other_horizons() {
        let m = meta(&["x", "y", "z"], &[96, 192, 336, 720]);
        let mut rng = seeded(2);
        let mut saw_96 = false;
        for t in sample_tasks(&m, TaskStrategy::CrossHorizon, 200, 4, 4, &mut rng).unwrap() {
            let h = t.support[0].horizon;
            assert!(t.support.iter().all(|s| s.horizon == h));
            assert!(t.query.iter().all(|s| s.horizon != h));
            if h == 96 {
                saw_96 = true;
                assert!(t.query.iter().all(|s| [192, 336, 720].contains(&s.horizon)));
            }
        }
        assert!(saw_96);
    }

    #[test]
    fn insufficient_diversity_is_named() {
        let m = meta(&["x"], &[96, 192]);
        let err = sample_tasks(&m, TaskStrategy::CrossDataset, 1, 1, 1, &mut seeded(0)).unwrap_err();
        assert!(err.to_string().contains("datasets"), "{err}");
        let m = meta(&["x", "y"], &[96]);
        let err = sample_tasks(&m, TaskStrategy::CrossHorizon, 1, 1, 1, &mut seeded(0)).unwrap_err();
        assert!(err.to_string().contains("horizons"), "{err}");
    }

    #[test]
    fn census_covers_every_dataset() {
        let ids = ["d0", "d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8"];
        let m = meta(&ids, &[96, 192, 336, 720]);
        let mut seen = std::collections::BTreeSet::new();
        let mut rng = seeded(3);
        for b in 0..1000 {
            let t = sample_tasks(&m, TaskStrategy::for_batch(b), 1, 4, 4, &mut rng).unwrap();
            for s in t[0].support.iter().chain(&t[0].query) {
                seen.insert(s.dataset_id.clone());
            }
        }
        assert_eq!(seen.len(), ids.len());
    }
}
