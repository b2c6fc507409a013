use attrflip_core::analysis::{run_attacks, sample_indices};
use attrflip_core::data::checkpoint::load_checkpoint;
use attrflip_core::data::outcomes::{save_outcomes, OutcomeRecord};
use attrflip_core::data::{AttributeDataset, Split};
use attrflip_core::model::ClassifierModel;
use log::{info, warn};

use crate::layout::model_sets;
use crate::synth::load_split;
use crate::{create_dir, CliError, ExperimentConfig, Layout, Result};

pub fn load_model(path: &std::path::Path) -> Result<ClassifierModel> {
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(path.to_path_buf()));
    }
    Ok(load_checkpoint(path)?)
}

/// The training images every network is attacked on.
pub fn attack_sample(cfg: &ExperimentConfig) -> Result<AttributeDataset> {
    let train = load_split(cfg, Split::Train)?;
    if cfg.attack.sample_size > train.len() {
        warn!(
            "sample size {} exceeds the {} training images; using all of them",
            cfg.attack.sample_size,
            train.len()
        );
    }
    let picked = sample_indices(train.len(), cfg.attack.sample_size, cfg.sample_seed());
    Ok(train.subset(&picked)?)
}

pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    create_dir(&layout.attacks())?;
    let images = attack_sample(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let hash = cfg.hash();

    for set in model_sets(cfg) {
        let mut checkpoints = vec![(false, layout.converged_checkpoint(&set.slug))];
        if cfg.attack.early {
            checkpoints.push((true, layout.epoch_checkpoint(&set.slug, cfg.stopping.early_epoch)));
        }
        for (early, path) in checkpoints {
            let model = load_model(&path)?;
            let model_id = path
                .strip_prefix(layout.root())
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            for attack in cfg.attack_configs() {
                let outcomes = pool.install(|| run_attacks(&model, &images, &attack, &cfg.pass))?;
                let records: Vec<OutcomeRecord> = outcomes
                    .into_iter()
                    .map(|outcome| OutcomeRecord {
                        model_id: model_id.clone(),
                        config_hash: hash.clone(),
                        outcome,
                    })
                    .collect();
                let adversarial = records.iter().filter(|r| r.outcome.is_adversarial).count();
                let out = layout.outcomes(&set.slug, early, &attack);
                save_outcomes(&out, &records)?;
                info!("{}: {adversarial}/{} adversarial", out.display(), records.len());
            }
        }
    }
    Ok(())
}
