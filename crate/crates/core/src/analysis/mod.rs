//! Aggregate experiments over attack outcomes.
//!
//! Everything here is a function of serialized [`AttackOutcome`] records plus
//! the models and images they refer to, so every reported number can be
//! recounted from disk.

pub mod matrix;
pub mod overlap;
pub mod report;
pub mod stats;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, AttackConfig, AttackOutcome};
use crate::data::AttributeDataset;
use crate::error::Result;
use crate::model::ClassifierModel;
use crate::pass::PassConfig;

pub use matrix::{correlation_matrix, flip_matrix, portability_matrix, FlipMatrix, FlipSource};
pub use overlap::{epoch_overlap, overlap_from_outcomes, OverlapStat};
pub use stats::{paired_t_test, trivial_baseline, TTest, TrivialBaseline};

/// PASS thresholds of the flippability table.
pub const FLIP_THRESHOLDS: [f64; 4] = [0.0, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvType {
    /// Correctly classified source; the attack tries to break it.
    Correct,
    /// Misclassified source; the attack tries to fix it.
    Misclassified,
}

impl AdvType {
    pub fn of(outcome: &AttackOutcome) -> Self {
        if outcome.natural {
            AdvType::Misclassified
        } else {
            AdvType::Correct
        }
    }

    pub fn sign(self) -> &'static str {
        match self {
            AdvType::Correct => "+",
            AdvType::Misclassified => "-",
        }
    }
}

/// Sorted sample of `k` indices out of `n` (all of them when `k >= n`).
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// One (image, model attribute) pair to attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackJob {
    pub item: usize,
    pub attribute: usize,
    pub ground_truth: i8,
}

/// All (image, attribute) pairs of `dataset` for the attributes `model` predicts.
pub fn attack_jobs(model: &ClassifierModel, dataset: &AttributeDataset) -> Result<Vec<AttackJob>> {
    let columns = dataset.column_indices(model.attribute_names())?;
    let mut jobs = Vec::with_capacity(dataset.len() * columns.len());
    for (item, it) in dataset.items().iter().enumerate() {
        for (attribute, &col) in columns.iter().enumerate() {
            jobs.push(AttackJob {
                item,
                attribute,
                ground_truth: it.labels[col],
            });
        }
    }
    Ok(jobs)
}

/// Run `jobs` in parallel; results come back sorted by (image id, attribute)
/// regardless of scheduling.
pub fn run_jobs(
    model: &ClassifierModel,
    dataset: &AttributeDataset,
    jobs: &[AttackJob],
    config: &AttackConfig,
    pass: &PassConfig,
) -> Result<Vec<AttackOutcome>> {
    let mut out = jobs
        .par_iter()
        .map(|job| {
            let it = &dataset.items()[job.item];
            run_attack(model, &it.id, &it.image, job.attribute, job.ground_truth, config, pass)
        })
        .collect::<Result<Vec<_>>>()?;
    sort_outcomes(&mut out);
    Ok(out)
}

pub fn run_attacks(
    model: &ClassifierModel,
    dataset: &AttributeDataset,
    config: &AttackConfig,
    pass: &PassConfig,
) -> Result<Vec<AttackOutcome>> {
    run_jobs(model, dataset, &attack_jobs(model, dataset)?, config, pass)
}

pub fn sort_outcomes(outcomes: &mut [AttackOutcome]) {
    outcomes.sort_by(|a, b| (&a.image_id, a.attribute).cmp(&(&b.image_id, b.attribute)));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlippabilityRow {
    /// `method_mode`, e.g. `ffa_line_search`.
    pub label: String,
    pub adv_type: AdvType,
    pub thresholds: Vec<f64>,
    /// Flipped outcomes with PASS at or above each threshold.
    pub counts: Vec<usize>,
    pub total: usize,
}

impl FlippabilityRow {
    pub fn fraction(&self, k: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[k] as f64 / self.total as f64
        }
    }
}

/// Tabulate one set of outcomes (a single method and mode) by source type.
/// Both rows are always present, possibly with total 0.
pub fn flippability_rows(label: &str, outcomes: &[AttackOutcome], thresholds: &[f64]) -> Vec<FlippabilityRow> {
    [AdvType::Correct, AdvType::Misclassified]
        .into_iter()
        .map(|adv_type| {
            let group: Vec<&AttackOutcome> = outcomes.iter().filter(|o| AdvType::of(o) == adv_type).collect();
            let counts = thresholds
                .iter()
                .map(|&tau| group.iter().filter(|o| o.adversarial_at(tau)).count())
                .collect();
            FlippabilityRow {
                label: label.to_string(),
                adv_type,
                thresholds: thresholds.to_vec(),
                counts,
                total: group.len(),
            }
        })
        .collect()
}

/// Attack every (image, attribute) pair with every configuration and
/// tabulate the flip proportions.
pub fn flippability_report(
    model: &ClassifierModel,
    dataset: &AttributeDataset,
    configs: &[AttackConfig],
    pass: &PassConfig,
    thresholds: &[f64],
) -> Result<Vec<FlippabilityRow>> {
    let mut rows = Vec::new();
    for config in configs {
        let outcomes = run_attacks(model, dataset, config, pass)?;
        rows.extend(flippability_rows(&config.label(), &outcomes, thresholds));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalScan {
    /// Corrected pairs with PASS at or above the threshold.
    pub records: Vec<AttackOutcome>,
    pub misclassified: usize,
}

impl NaturalScan {
    pub fn rate(&self) -> f64 {
        if self.misclassified == 0 {
            0.0
        } else {
            self.records.len() as f64 / self.misclassified as f64
        }
    }
}

/// Try to correct every misclassified (image, attribute) pair.
pub fn natural_adversarial_scan(
    model: &ClassifierModel,
    dataset: &AttributeDataset,
    config: &AttackConfig,
    pass: &PassConfig,
) -> Result<NaturalScan> {
    let jobs = attack_jobs(model, dataset)?;
    let predictions = dataset
        .items()
        .par_iter()
        .map(|it| model.predict(&it.image))
        .collect::<Result<Vec<_>>>()?;
    let wrong: Vec<AttackJob> = jobs
        .into_iter()
        .filter(|j| predictions[j.item][j.attribute] != j.ground_truth)
        .collect();
    let outcomes = run_jobs(model, dataset, &wrong, config, pass)?;
    Ok(NaturalScan {
        misclassified: wrong.len(),
        records: outcomes.into_iter().filter(|o| o.natural && o.is_adversarial).collect(),
    })
}
