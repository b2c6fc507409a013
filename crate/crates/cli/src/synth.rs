use attrflip_core::data::labels::{read_attribute_labels, write_attribute_labels};
use attrflip_core::data::pnm::write_image;
use attrflip_core::data::synth::{synth_dataset, SynthConfig};
use attrflip_core::data::{AttributeDataset, Split};
use log::info;
use serde::{Deserialize, Serialize};

use crate::{create_dir, write_file, ExperimentConfig, Layout, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config_hash: String,
    pub synth: SynthConfig,
    pub splits: Vec<SplitEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    pub count: usize,
    pub labels: String,
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let data = synth_dataset(&cfg.synth)?;
    let mut splits = Vec::new();
    for split in Split::ALL {
        let ds = data.split(split);
        let dir = layout.split_dir(split);
        create_dir(&dir)?;
        for item in ds.items() {
            write_image(&dir.join(&item.id), &item.image)?;
        }
        write_attribute_labels(&layout.labels(split), &ds.label_table())?;
        splits.push(SplitEntry {
            split,
            count: ds.len(),
            labels: format!("{}/labels.txt", split.as_str()),
        });
    }
    let manifest = DatasetManifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        synth: cfg.synth.clone(),
        splits,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    write_file(&layout.manifest(), &text)?;
    info!("wrote dataset to {}", layout.data().display());
    Ok(())
}

pub fn load_split(cfg: &ExperimentConfig, split: Split) -> Result<AttributeDataset> {
    let layout = Layout::new(cfg);
    let table = read_attribute_labels(&layout.labels(split))?;
    Ok(AttributeDataset::load(&table, &layout.split_dir(split), split)?)
}
