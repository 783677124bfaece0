//! On-disk layout of a world: `world.json` indexes dataset CSVs under
//! `datasets/`, model cards under `cards/`, and the meta-dataset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::meta_dataset::{load_dataset, DatasetSchema, LoadOptions, MetaDataset, SplitRatio, TimeSeriesDataset, World};
use crate::model_encoder::{ModelCard, ProbeConfig};

pub const WORLD_INDEX: &str = "world.json";
pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    pub domain: String,
    pub frequency: String,
    pub split: SplitRatio,
    /// Path relative to the world directory.
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldIndex {
    pub format_version: u32,
    pub datasets: Vec<DatasetEntry>,
    /// Card files in hub order, relative to the world directory.
    pub cards: Vec<String>,
    pub meta: String,
}

impl WorldIndex {
    /// Every file the index refers to, the index itself first.
    pub fn files(&self, dir: &Path) -> Vec<PathBuf> {
        let mut out = vec![dir.join(WORLD_INDEX)];
        out.extend(self.datasets.iter().map(|d| dir.join(&d.file)));
        out.extend(self.cards.iter().map(|c| dir.join(c)));
        out.push(dir.join(&self.meta));
        out
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write datasets, cards (with probe signatures under `probe`) and the
/// meta-dataset. Returns the written files, index first.
pub fn save_world(world: &World, probe: &ProbeConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(&dir.join("datasets"))?;
    create_dir(&dir.join("cards"))?;
    let mut index = WorldIndex {
        format_version: WORLD_FORMAT_VERSION,
        datasets: Vec::new(),
        cards: Vec::new(),
        meta: "meta.json".into(),
    };
    for d in &world.datasets {
        let file = format!("datasets/{}.csv", d.id);
        d.write_csv(&dir.join(&file))?;
        index.datasets.push(DatasetEntry {
            id: d.id.clone(),
            domain: d.domain.clone(),
            frequency: d.frequency.clone(),
            split: d.split,
            file,
        });
    }
    for m in &world.hub {
        let file = format!("cards/{}.json", m.id);
        m.card(probe)?.save(&dir.join(&file))?;
        index.cards.push(file);
    }
    world.meta.save(&dir.join(&index.meta))?;
    write_json(&dir.join(WORLD_INDEX), &index)?;
    Ok(index.files(dir))
}

pub struct StoredWorld {
    pub index: WorldIndex,
    pub datasets: BTreeMap<String, TimeSeriesDataset>,
    pub cards: Vec<ModelCard>,
    pub meta: MetaDataset,
}

/// Load a world written by [`save_world`]. Missing files are all reported
/// in one error.
pub fn load_world(dir: &Path) -> Result<StoredWorld> {
    let index_path = dir.join(WORLD_INDEX);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: WorldIndex = serde_json::from_str(&text)?;
    if index.format_version != WORLD_FORMAT_VERSION {
        return Err(invalid!(
            "world format version {} is not supported (expected {WORLD_FORMAT_VERSION})",
            index.format_version
        ));
    }
    let missing: Vec<String> = index
        .files(dir)
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(invalid!("world files are missing: {}", missing.join(", ")));
    }
    let mut datasets = BTreeMap::new();
    for e in &index.datasets {
        let opts = LoadOptions {
            split: e.split,
            domain: e.domain.clone(),
            frequency: e.frequency.clone(),
            ..Default::default()
        };
        let mut d = load_dataset(&dir.join(&e.file), DatasetSchema::WideCsv, &opts)?;
        d.id = e.id.clone();
        datasets.insert(e.id.clone(), d);
    }
    let cards = index
        .cards
        .iter()
        .map(|c| ModelCard::load(&dir.join(c)))
        .collect::<Result<Vec<_>>>()?;
    let meta = MetaDataset::load(&dir.join(&index.meta))?;
    let ids: Vec<&String> = cards.iter().map(|c| &c.id).collect();
    if meta.hub.iter().collect::<Vec<_>>() != ids {
        return Err(invalid!("meta-dataset hub {:?} does not match the cards {:?}", meta.hub, ids));
    }
    if let Some(s) = meta.samples.iter().find(|s| !datasets.contains_key(&s.dataset_id)) {
        return Err(invalid!("meta-sample refers to dataset `{}` which the world does not list", s.dataset_id));
    }
    Ok(StoredWorld {
        index,
        datasets,
        cards,
        meta,
    })
}
