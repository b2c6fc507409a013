use std::fs::OpenOptions;
use std::io::Write;

use attrflip_core::data::checkpoint::{load_checkpoint, save_checkpoint};
use attrflip_core::data::{AttributeDataset, Split};
use attrflip_core::model::{ClassifierModel, Trainer};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::layout::{model_sets, ModelSet};
use crate::synth::load_split;
use crate::{create_dir, write_file, CliError, ExperimentConfig, Layout, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: u32,
    pub best_val_error: f64,
    pub last_epoch: u32,
    pub stopped_early: bool,
}

pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let train = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    for (index, set) in model_sets(cfg).iter().enumerate() {
        let summary = train_set(cfg, set, index as u64, &train, &val, resume)?;
        info!(
            "{}: best epoch {} (val error {:.4}), stopped after {}",
            set.slug, summary.best_epoch, summary.best_val_error, summary.last_epoch
        );
    }
    Ok(())
}

fn newest_epoch(layout: &Layout, slug: &str) -> Option<u32> {
    let mut epoch = 0;
    while layout.epoch_checkpoint(slug, epoch + 1).exists() {
        epoch += 1;
    }
    (epoch > 0).then_some(epoch)
}

fn train_set(
    cfg: &ExperimentConfig,
    set: &ModelSet,
    index: u64,
    train: &AttributeDataset,
    val: &AttributeDataset,
    resume: bool,
) -> Result<TrainSummary> {
    let layout = Layout::new(cfg);
    let dir = layout.model_dir(&set.slug);
    create_dir(&dir)?;

    let resumed = if resume { newest_epoch(&layout, &set.slug) } else { None };
    let (model, mut summary) = match resumed {
        Some(epoch) => {
            let model = load_checkpoint(&layout.epoch_checkpoint(&set.slug, epoch))?;
            let text =
                std::fs::read(layout.summary(&set.slug)).map_err(|e| CliError::Io(layout.summary(&set.slug), e))?;
            let summary: TrainSummary = serde_json::from_slice(&text)?;
            info!("{}: resuming after epoch {epoch}", set.slug);
            (model, summary)
        }
        None => {
            if resume {
                warn!("{}: nothing to resume, starting fresh", set.slug);
            }
            let model = ClassifierModel::new(&set.spec(cfg), cfg.init_seed().wrapping_add(index))?;
            write_metrics_header(cfg, &layout, set)?;
            let summary = TrainSummary {
                best_epoch: 0,
                best_val_error: f64::INFINITY,
                last_epoch: 0,
                stopped_early: false,
            };
            (model, summary)
        }
    };

    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let mut stale = summary.last_epoch - summary.best_epoch.min(summary.last_epoch);
    summary.stopped_early = false;
    while trainer.model().epoch < cfg.train.max_epochs {
        let record = trainer.train_epoch(train)?;
        let val_error = trainer.model().dataset_error(val)?;
        save_checkpoint(trainer.model(), &layout.epoch_checkpoint(&set.slug, record.epoch))?;
        append_metrics(&layout, set, &record, &val_error)?;
        summary.last_epoch = record.epoch;
        if val_error.mean < summary.best_val_error {
            summary.best_val_error = val_error.mean;
            summary.best_epoch = record.epoch;
            save_checkpoint(trainer.model(), &layout.converged_checkpoint(&set.slug))?;
            stale = 0;
        } else {
            stale += 1;
        }
        write_summary(&layout, set, &summary)?;
        if stale >= cfg.stopping.patience {
            summary.stopped_early = true;
            break;
        }
    }
    write_summary(&layout, set, &summary)?;
    Ok(summary)
}

fn write_summary(layout: &Layout, set: &ModelSet, summary: &TrainSummary) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(summary)?;
    text.push(b'\n');
    write_file(&layout.summary(&set.slug), &text)
}

fn write_metrics_header(cfg: &ExperimentConfig, layout: &Layout, set: &ModelSet) -> Result<()> {
    let path = layout.metrics(&set.slug);
    let mut text = format!("# seed={}\n# config_hash={}\n", cfg.seed, cfg.hash());
    let mut cols = vec![
        "epoch".to_string(),
        "loss".into(),
        "train_error".into(),
        "val_error".into(),
    ];
    cols.extend(set.attribute_names.iter().map(|a| format!("train_{a}")));
    cols.extend(set.attribute_names.iter().map(|a| format!("val_{a}")));
    text.push_str(&cols.join(","));
    text.push('\n');
    write_file(&path, text.as_bytes())
}

fn append_metrics(
    layout: &Layout,
    set: &ModelSet,
    record: &attrflip_core::model::EpochRecord,
    val: &attrflip_core::model::DatasetError,
) -> Result<()> {
    let path = layout.metrics(&set.slug);
    let mut file = OpenOptions::new()
        .append(true)
        .open(&path)
        .map_err(|e| CliError::Io(path.clone(), e))?;
    let mut row = vec![
        record.epoch.to_string(),
        format!("{:.6}", record.running_loss),
        format!("{:.6}", record.train_error.mean),
        format!("{:.6}", val.mean),
    ];
    row.extend(record.train_error.per_attribute.iter().map(|e| format!("{e:.6}")));
    row.extend(val.per_attribute.iter().map(|e| format!("{e:.6}")));
    writeln!(file, "{}", row.join(",")).map_err(|e| CliError::Io(path, e))
}
