//! Aggregates the outcome files of `attack` into CSV tables and heatmaps.
//! Nothing here runs an attack; only the baseline comparison classifies
//! the test split again.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use attrflip_core::analysis::report::{
    heatmap, write_baseline_csv, write_flippability_csv, write_matrix_csv, write_natural_csv, write_overlap_csv,
    write_ttest_csv, NaturalRow, ReportHeader,
};
use attrflip_core::analysis::{
    correlation_matrix, flippability_rows, overlap_from_outcomes, paired_t_test, portability_matrix, trivial_baseline,
    AdvType, FlipMatrix, FlipSource, TTest,
};
use attrflip_core::attack::{AttackConfig, AttackOutcome};
use attrflip_core::data::outcomes::load_outcomes;
use attrflip_core::data::pnm::write_image;
use attrflip_core::data::{AttributeDataset, Split};
use attrflip_core::model::ClassifierModel;
use log::{info, warn};

use crate::attack::{attack_sample, load_model};
use crate::layout::{model_sets, ModelSet};
use crate::synth::load_split;
use crate::{create_dir, CliError, ExperimentConfig, Layout, Result};

/// Outcomes of one attack configuration against one checkpoint.
struct OutcomeSet {
    set: usize,
    early: bool,
    attack: AttackConfig,
    outcomes: Vec<AttackOutcome>,
}

impl OutcomeSet {
    fn label(&self, sets: &[ModelSet]) -> String {
        let tag = if self.early { "-early" } else { "" };
        format!("{}{tag}:{}", sets[self.set].slug, self.attack.label())
    }
}

fn expected_files(
    cfg: &ExperimentConfig,
    layout: &Layout,
    sets: &[ModelSet],
) -> Vec<(usize, bool, AttackConfig, PathBuf)> {
    let checkpoints: &[bool] = if cfg.attack.early { &[false, true] } else { &[false] };
    let mut files = Vec::new();
    for (s, set) in sets.iter().enumerate() {
        for &early in checkpoints {
            for attack in cfg.attack_configs() {
                let path = layout.outcomes(&set.slug, early, &attack);
                files.push((s, early, attack, path));
            }
        }
    }
    files
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn emit(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> attrflip_core::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w)?;
    w.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_report(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let sets = model_sets(cfg);

    let files = expected_files(cfg, &layout, &sets);
    if let Some((_, _, _, path)) = files.iter().find(|(_, _, _, p)| !p.exists()) {
        return Err(CliError::MissingOutcomes(path.clone()));
    }
    let mut loaded = Vec::new();
    for (set, early, attack, path) in files {
        let outcomes = load_outcomes(&path)?.into_iter().map(|r| r.outcome).collect();
        loaded.push(OutcomeSet {
            set,
            early,
            attack,
            outcomes,
        });
    }

    let reports = layout.reports();
    create_dir(&reports)?;
    let header = ReportHeader {
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };

    let flippability: Vec<_> = loaded
        .iter()
        .flat_map(|o| flippability_rows(&o.label(&sets), &o.outcomes, &cfg.report.thresholds))
        .collect();
    emit(&reports.join("flippability.csv"), |w| {
        write_flippability_csv(w, &header, &flippability)
    })?;

    let natural: Vec<NaturalRow> = loaded
        .iter()
        .map(|o| NaturalRow {
            label: o.label(&sets),
            misclassified: o
                .outcomes
                .iter()
                .filter(|x| AdvType::of(x) == AdvType::Misclassified)
                .count(),
            natural_adversarial: o.outcomes.iter().filter(|x| x.natural && x.is_adversarial).count(),
        })
        .collect();
    emit(&reports.join("natural.csv"), |w| {
        write_natural_csv(w, &header, &natural)
    })?;

    if cfg.attack.early {
        let mut stats = Vec::new();
        for late in loaded.iter().filter(|o| !o.early) {
            let early = loaded
                .iter()
                .find(|o| o.early && o.set == late.set && o.attack == late.attack)
                .expect("early outcomes are loaded alongside converged ones");
            stats.extend(overlap_from_outcomes(
                &late.label(&sets),
                &early.outcomes,
                &late.outcomes,
            ));
        }
        emit(&reports.join("overlap.csv"), |w| write_overlap_csv(w, &header, &stats))?;
    }

    matrices(cfg, &layout, &sets, &loaded, &header)?;
    baseline(cfg, &layout, &sets, &header)?;
    Ok(())
}

fn write_matrix(
    cfg: &ExperimentConfig,
    reports: &Path,
    name: &str,
    header: &ReportHeader,
    m: &FlipMatrix,
) -> Result<()> {
    emit(&reports.join(format!("{name}.csv")), |w| write_matrix_csv(w, header, m))?;
    if cfg.report.heatmap_cell > 0 {
        let path = reports.join(format!("{name}.pgm"));
        write_image(&path, &heatmap(m, cfg.report.heatmap_cell)?)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn matrices(
    cfg: &ExperimentConfig,
    layout: &Layout,
    sets: &[ModelSet],
    loaded: &[OutcomeSet],
    header: &ReportHeader,
) -> Result<()> {
    let matches = |o: &&OutcomeSet| {
        !o.early && o.attack.method == cfg.report.matrix_method && o.attack.mode == cfg.report.matrix_mode
    };
    if !loaded.iter().any(|o| matches(&o)) {
        warn!(
            "no {}_{} outcomes; skipping correlation and portability matrices",
            cfg.report.matrix_method.as_str(),
            cfg.report.matrix_mode.as_str()
        );
        return Ok(());
    }
    let images = attack_sample(cfg)?;
    let tau = cfg.pass.tau;
    let reports = layout.reports();

    if cfg.model.joint {
        let joint = loaded.iter().filter(matches).find(|o| sets[o.set].slug == "joint");
        if let Some(o) = joint {
            let model = load_model(&layout.converged_checkpoint("joint"))?;
            let sources = FlipSource::from_outcomes(&o.outcomes, &images, tau, |x| x.attribute)?;
            let m = correlation_matrix(&model, &sources)?;
            write_matrix(cfg, &reports, "correlation", header, &m)?;
        }
    }

    if cfg.model.separate {
        let separate: Vec<(usize, &ModelSet)> = sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.slug.starts_with("sep-"))
            .collect();
        let models = separate
            .iter()
            .map(|(_, s)| load_model(&layout.converged_checkpoint(&s.slug)))
            .collect::<Result<Vec<ClassifierModel>>>()?;
        let mut sources = Vec::new();
        for (row, (index, _)) in separate.iter().enumerate() {
            if let Some(o) = loaded.iter().filter(matches).find(|o| o.set == *index) {
                sources.extend(FlipSource::from_outcomes(&o.outcomes, &images, tau, |_| row)?);
            }
        }
        let m = portability_matrix(&sources, &models)?;
        write_matrix(cfg, &reports, "portability", header, &m)?;
    }
    Ok(())
}

fn label_rows(ds: &AttributeDataset) -> Vec<Vec<i8>> {
    ds.items().iter().map(|it| it.labels.clone()).collect()
}

fn baseline(cfg: &ExperimentConfig, layout: &Layout, sets: &[ModelSet], header: &ReportHeader) -> Result<()> {
    let train = load_split(cfg, Split::Train)?;
    let test = load_split(cfg, Split::Test)?;
    let names = train.attribute_names().to_vec();
    let base = trivial_baseline(&label_rows(&train), &label_rows(&test))?;

    let mut errors: Vec<(String, Vec<f64>)> = Vec::new();
    if cfg.model.joint {
        let model = load_model(&layout.converged_checkpoint("joint"))?;
        errors.push(("joint".into(), model.dataset_error(&test)?.per_attribute));
    }
    if cfg.model.separate {
        let mut per = Vec::new();
        for set in sets.iter().filter(|s| s.slug.starts_with("sep-")) {
            let model = load_model(&layout.converged_checkpoint(&set.slug))?;
            per.extend(model.dataset_error(&test)?.per_attribute);
        }
        errors.push(("separate".into(), per));
    }

    let reports = layout.reports();
    emit(&reports.join("baseline.csv"), |w| {
        write_baseline_csv(w, header, &names, &base, &errors[0].1)
    })?;

    if names.len() < 2 {
        warn!("a paired t-test needs two or more attributes; skipping ttest.csv");
        return Ok(());
    }
    let mut tests: Vec<(String, TTest)> = Vec::new();
    for (name, e) in &errors {
        tests.push((format!("{name}-vs-baseline"), paired_t_test(e, &base.errors)?));
    }
    if errors.len() == 2 {
        tests.push(("joint-vs-separate".into(), paired_t_test(&errors[0].1, &errors[1].1)?));
    }
    emit(&reports.join("ttest.csv"), |w| write_ttest_csv(w, header, &tests))
}
