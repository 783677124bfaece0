//! Shared setup for the benchmarks.

use std::collections::BTreeMap;

use tsselect::meta_dataset::{generate_synthetic_world, MetaSample, TimeSeriesDataset, WorldConfig};
use tsselect::model_encoder::HubFeatures;
use tsselect::numerics::ParamStore;
use tsselect::rng::substream;
use tsselect::selector::{init_selector, SelectorConfig};

pub struct Setup {
    pub selector: SelectorConfig,
    pub params: ParamStore,
    pub hub: HubFeatures,
    pub datasets: BTreeMap<String, TimeSeriesDataset>,
    pub samples: Vec<MetaSample>,
}

/// Default selector over a four-dataset world with the default hub.
pub fn setup(seed: u64) -> Setup {
    let selector = SelectorConfig::default();
    let world = generate_synthetic_world(
        seed,
        &WorldConfig {
            n_datasets: 4,
            horizons: vec![96, 720],
            ..Default::default()
        },
    )
    .expect("world");
    let cards: Vec<_> = world
        .hub
        .iter()
        .map(|m| m.card(&selector.model_encoder.probe).expect("card"))
        .collect();
    let hub = HubFeatures::from_cards(&cards, &selector.model_encoder).expect("hub features");
    let params = init_selector(&selector, &mut substream(seed, "init")).expect("params");
    Setup {
        selector,
        params,
        hub,
        datasets: world.datasets.iter().map(|d| (d.id.clone(), d.clone())).collect(),
        samples: world.meta.samples.clone(),
    }
}
