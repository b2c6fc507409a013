//! Adversarial sources shared between two checkpoints.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{run_attacks, AdvType};
use crate::attack::{AttackConfig, AttackOutcome};
use crate::data::AttributeDataset;
use crate::error::{Error, Result};
use crate::model::ClassifierModel;
use crate::pass::PassConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapStat {
    pub label: String,
    pub adv_type: AdvType,
    pub count_early: usize,
    pub count_converged: usize,
    pub overlap_count: usize,
}

type Key<'a> = (&'a str, usize);

fn adversarial_keys(outcomes: &[AttackOutcome], adv_type: AdvType) -> BTreeSet<Key<'_>> {
    outcomes
        .iter()
        .filter(|o| o.is_adversarial && AdvType::of(o) == adv_type)
        .map(|o| (o.image_id.as_str(), o.attribute))
        .collect()
}

/// Count adversarial (image, attribute) pairs under each checkpoint and under
/// both, separately for correctly classified and misclassified sources. A
/// pair only overlaps when it is of the same type at both checkpoints.
pub fn overlap_from_outcomes(label: &str, early: &[AttackOutcome], converged: &[AttackOutcome]) -> Vec<OverlapStat> {
    [AdvType::Correct, AdvType::Misclassified]
        .into_iter()
        .map(|adv_type| {
            let a = adversarial_keys(early, adv_type);
            let b = adversarial_keys(converged, adv_type);
            OverlapStat {
                label: label.to_string(),
                adv_type,
                count_early: a.len(),
                count_converged: b.len(),
                overlap_count: a.intersection(&b).count(),
            }
        })
        .collect()
}

pub fn epoch_overlap(
    early: &ClassifierModel,
    converged: &ClassifierModel,
    dataset: &AttributeDataset,
    config: &AttackConfig,
    pass: &PassConfig,
) -> Result<Vec<OverlapStat>> {
    if !early.same_architecture(converged) {
        return Err(Error::Architecture(
            "the two checkpoints differ in layout or attributes".into(),
        ));
    }
    let a = run_attacks(early, dataset, config, pass)?;
    let b = run_attacks(converged, dataset, config, pass)?;
    Ok(overlap_from_outcomes(&config.label(), &a, &b))
}
