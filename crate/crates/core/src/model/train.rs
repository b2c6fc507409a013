//! Mini-batch RMSProp with an inverse learning-rate decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierModel, DatasetError};
use crate::data::AttributeDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Moving-average factor of the squared-gradient cache.
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    /// Effective rate is `learning_rate * (1 + gamma * iteration)^(-power)`.
    pub lr_gamma: f64,
    pub lr_power: f64,
    pub max_epochs: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 64,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            lr_gamma: 1e-4,
            lr_power: 0.75,
            max_epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.rms_decay) || self.rms_epsilon <= 0.0 {
            return Err(Error::Config("rms_decay must be in [0, 1) and rms_epsilon > 0".into()));
        }
        Ok(())
    }

    pub fn rate_at(&self, iteration: u64) -> f64 {
        self.learning_rate * (1.0 + self.lr_gamma * iteration as f64).powf(-self.lr_power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Epoch counter after this epoch finished (first epoch is 1).
    pub epoch: u32,
    /// Mean per-sample loss accumulated while the epoch ran.
    pub running_loss: f64,
    /// Training error measured with the weights at the end of the epoch.
    pub train_error: DatasetError,
}

/// Owns a model while it trains. The RMSProp cache lives here, not in the model.
pub struct Trainer {
    model: ClassifierModel,
    config: TrainConfig,
    cache: Vec<f64>,
}

impl Trainer {
    pub fn new(model: ClassifierModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let cache = vec![0.0; model.weights().len()];
        Ok(Trainer { model, config, cache })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn into_model(self) -> ClassifierModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Run one pass over `dataset` in a seed-determined order.
    pub fn train_epoch(&mut self, dataset: &AttributeDataset) -> Result<EpochRecord> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let columns = dataset.column_indices(self.model.attribute_names())?;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let epoch_seed = self
            .config
            .seed
            .wrapping_add(u64::from(self.model.epoch).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));

        let mut grad = vec![0.0; self.cache.len()];
        let mut labels = vec![0i8; columns.len()];
        let mut total_loss = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let item = &dataset.items()[i];
                for (l, &c) in labels.iter_mut().zip(&columns) {
                    *l = item.labels[c];
                }
                batch_loss += self
                    .model
                    .accumulate_param_gradient(&item.image, &labels, scale, &mut grad)?;
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch: self.model.epoch,
                    iteration: self.model.iteration,
                    loss: batch_loss,
                });
            }
            total_loss += batch_loss;
            self.step(&grad);
        }
        self.model.epoch += 1;
        if self.model.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                epoch: self.model.epoch,
                iteration: self.model.iteration,
                loss: f64::NAN,
            });
        }
        Ok(EpochRecord {
            epoch: self.model.epoch,
            running_loss: total_loss / dataset.len() as f64,
            train_error: self.model.dataset_error(dataset)?,
        })
    }

    fn step(&mut self, grad: &[f64]) {
        let rate = self.config.rate_at(self.model.iteration);
        let decay = self.config.rms_decay;
        let eps = self.config.rms_epsilon;
        for ((w, c), &g) in self.model.weights_mut().iter_mut().zip(&mut self.cache).zip(grad) {
            *c = decay * *c + (1.0 - decay) * g * g;
            *w -= rate * g / (c.sqrt() + eps);
        }
        self.model.iteration += 1;
    }
}

/// Mean per-sample training loss of `model` over `dataset`.
pub fn mean_loss(model: &ClassifierModel, dataset: &AttributeDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let columns = dataset.column_indices(model.attribute_names())?;
    let mut total = 0.0;
    for item in dataset.items() {
        let labels: Vec<i8> = columns.iter().map(|&c| item.labels[c]).collect();
        total += model.loss(&item.image, &labels)?;
    }
    Ok(total / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_decay_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.rate_at(0), 1e-5);
        let r = cfg.rate_at(10_000);
        assert!((r - 1e-5 * 2f64.powf(-0.75)).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
