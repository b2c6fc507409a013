//! Where each command reads and writes, relative to `out`.

use std::path::{Path, PathBuf};

use attrflip_core::attack::AttackConfig;
use attrflip_core::data::Split;
use attrflip_core::model::{HeadKind, ModelSpec};

use crate::config::ExperimentConfig;

/// One trained network: either the joint model or a per-attribute one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub slug: String,
    pub attribute_names: Vec<String>,
    pub head: HeadKind,
}

impl ModelSet {
    pub fn spec(&self, cfg: &ExperimentConfig) -> ModelSpec {
        ModelSpec {
            input_shape: cfg.synth.shape(),
            hidden: cfg.model.hidden.clone(),
            head: self.head,
            attribute_names: self.attribute_names.clone(),
            channel_mean: cfg.model.channel_mean.clone(),
        }
    }
}

/// Joint first (when enabled), then separate networks in attribute order.
pub fn model_sets(cfg: &ExperimentConfig) -> Vec<ModelSet> {
    let names = cfg.synth.attribute_names();
    let mut sets = Vec::new();
    if cfg.model.joint {
        sets.push(ModelSet {
            slug: "joint".into(),
            attribute_names: names.clone(),
            head: cfg.model.head,
        });
    }
    if cfg.model.separate {
        let head = match cfg.model.head {
            HeadKind::SoftmaxLogits => HeadKind::SoftmaxLogits,
            _ => HeadKind::EuclideanSingle,
        };
        for name in names {
            sets.push(ModelSet {
                slug: format!("sep-{name}"),
                attribute_names: vec![name],
                head,
            });
        }
    }
    sets
}

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Layout { root: cfg.out.clone() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data().join("manifest.json")
    }

    pub fn split_dir(&self, split: Split) -> PathBuf {
        self.data().join(split.as_str())
    }

    pub fn labels(&self, split: Split) -> PathBuf {
        self.split_dir(split).join("labels.txt")
    }

    pub fn model_dir(&self, slug: &str) -> PathBuf {
        self.root.join("models").join(slug)
    }

    pub fn epoch_checkpoint(&self, slug: &str, epoch: u32) -> PathBuf {
        self.model_dir(slug).join(format!("epoch_{epoch:03}.afm"))
    }

    /// Best validation epoch.
    pub fn converged_checkpoint(&self, slug: &str) -> PathBuf {
        self.model_dir(slug).join("converged.afm")
    }

    pub fn metrics(&self, slug: &str) -> PathBuf {
        self.model_dir(slug).join("metrics.csv")
    }

    pub fn summary(&self, slug: &str) -> PathBuf {
        self.model_dir(slug).join("summary.json")
    }

    pub fn attacks(&self) -> PathBuf {
        self.root.join("attacks")
    }

    pub fn outcomes(&self, slug: &str, early: bool, attack: &AttackConfig) -> PathBuf {
        let tag = if early { "-early" } else { "" };
        self.attacks().join(format!("{slug}{tag}_{}.jsonl", attack.label()))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}
