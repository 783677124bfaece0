#![allow(dead_code)]

use std::collections::BTreeMap;

use tsselect::data_encoder::EncoderConfig;
use tsselect::meta_dataset::{generate_synthetic_world, TimeSeriesDataset, World, WorldConfig};
use tsselect::model_encoder::{HubFeatures, ModelCard, ModelEncoderConfig, ProbeConfig};
use tsselect::scorer::ScorerConfig;
use tsselect::selector::SelectorConfig;

pub fn small_selector() -> SelectorConfig {
    SelectorConfig {
        encoder: EncoderConfig {
            lookback: 32,
            patch: 8,
            d_model: 8,
            subset: 4,
            resamples: 2,
        },
        model_encoder: ModelEncoderConfig {
            meta_dim: 8,
            topo_dim: 8,
            wl_iterations: 2,
            probe: ProbeConfig {
                dim: 8,
                ..Default::default()
            },
        },
        scorer: ScorerConfig {
            n_experts: 2,
            router_hidden: 8,
            expert_hidden: 16,
            ..Default::default()
        },
    }
}

pub fn small_world_config() -> WorldConfig {
    WorldConfig {
        n_datasets: 6,
        k: 4,
        horizons: vec![8, 24],
        min_len: 900,
        max_len: 1100,
        family_size: 2,
        ..Default::default()
    }
}

pub struct Fixture {
    pub world: World,
    pub datasets: BTreeMap<String, TimeSeriesDataset>,
    pub cards: Vec<ModelCard>,
    pub hub: HubFeatures,
    pub selector: SelectorConfig,
}

pub fn fixture(seed: u64) -> Fixture {
    let selector = small_selector();
    let world = generate_synthetic_world(seed, &small_world_config()).unwrap();
    let datasets = world.datasets.iter().map(|d| (d.id.clone(), d.clone())).collect();
    let cards: Vec<ModelCard> = world
        .hub
        .iter()
        .map(|m| m.card(&selector.model_encoder.probe).unwrap())
        .collect();
    let hub = HubFeatures::from_cards(&cards, &selector.model_encoder).unwrap();
    Fixture {
        world,
        datasets,
        cards,
        hub,
        selector,
    }
}
