//! Experiment configuration: one TOML file with a section per command.

use std::path::{Path, PathBuf};

use attrflip_core::analysis::FLIP_THRESHOLDS;
use attrflip_core::attack::{AttackConfig, Method, Mode};
use attrflip_core::data::synth::SynthConfig;
use attrflip_core::model::{Activation, HeadKind, LayerSpec, TrainConfig};
use attrflip_core::pass::PassConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Governs synthesis, initialization, shuffling and sampling.
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for attacks; 0 picks the number of cores.
    pub workers: usize,
    pub synth: SynthConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub stopping: StoppingSection,
    pub attack: AttackSection,
    pub pass: PassConfig,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub head: HeadKind,
    pub hidden: Vec<LayerSpec>,
    pub channel_mean: Option<Vec<f64>>,
    /// Train one joint network over all attributes.
    pub joint: bool,
    /// Also train one single-attribute network per attribute.
    pub separate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingSection {
    /// Epochs without a validation improvement before stopping.
    pub patience: u32,
    /// Checkpoint used as the "early" network in overlap reports.
    pub early_epoch: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Training images attacked per network.
    pub sample_size: usize,
    pub methods: Vec<Method>,
    pub modes: Vec<Mode>,
    /// Also attack the early checkpoint.
    pub early: bool,
    /// Search parameters; `method` and `mode` are overridden per run.
    pub search: AttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub thresholds: Vec<f64>,
    /// Pixels per matrix entry in heatmaps; 0 disables them.
    pub heatmap_cell: usize,
    /// Outcomes feeding the correlation and portability matrices.
    pub matrix_method: Method,
    pub matrix_mode: Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            out: PathBuf::from("run"),
            workers: 0,
            synth: SynthConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 32,
                max_epochs: 8,
                ..TrainConfig::default()
            },
            stopping: StoppingSection::default(),
            attack: AttackSection::default(),
            pass: PassConfig::default(),
            report: ReportSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            head: HeadKind::EuclideanMulti,
            hidden: vec![
                LayerSpec::conv(8, 5, Activation::Relu),
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::conv(8, 3, Activation::Relu),
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::dense(32, Activation::Relu),
            ],
            channel_mean: Some(vec![128.0; 3]),
            joint: true,
            separate: false,
        }
    }
}

impl Default for StoppingSection {
    fn default() -> Self {
        StoppingSection {
            patience: 3,
            early_epoch: 1,
        }
    }
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            sample_size: 200,
            methods: vec![Method::Fgs, Method::Ffa],
            modes: vec![Mode::LineSearch, Mode::Iterative],
            early: true,
            search: AttackConfig::default(),
        }
    }
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            thresholds: FLIP_THRESHOLDS.to_vec(),
            heatmap_cell: 16,
            matrix_method: Method::Ffa,
            matrix_mode: Mode::LineSearch,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Apply the seed to every seeded component and check invariants.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.synth.seed = self.seed;
        self.train.seed = self.seed.wrapping_add(2);
        self.synth.validate()?;
        self.train.validate()?;
        self.pass.validate()?;
        self.attack.search.validate()?;
        if !self.model.joint && !self.model.separate {
            return Err(CliError::Config("model: enable `joint`, `separate` or both".into()));
        }
        if self.model.joint && self.model.head == HeadKind::EuclideanSingle && self.synth.attributes.len() != 1 {
            return Err(CliError::Config(
                "model: a single-output head cannot be joint over several attributes".into(),
            ));
        }
        if let Some(mean) = &self.model.channel_mean {
            if mean.len() != self.synth.channels {
                return Err(CliError::Config(format!(
                    "model: channel_mean has {} entries for {} image channels",
                    mean.len(),
                    self.synth.channels
                )));
            }
        }
        if self.report.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(CliError::Config("report: thresholds must lie in [0, 1]".into()));
        }
        Ok(self)
    }

    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn sample_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        // where results go does not change them
        canonical.out = PathBuf::new();
        canonical.workers = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Attack configurations in a fixed order.
    pub fn attack_configs(&self) -> Vec<AttackConfig> {
        let mut out = Vec::new();
        for &method in &self.attack.methods {
            for &mode in &self.attack.modes {
                out.push(AttackConfig {
                    method,
                    mode,
                    ..self.attack.search.clone()
                });
            }
        }
        out
    }
}
