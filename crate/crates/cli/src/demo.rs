//! One-off commands that work on single image files.

use std::path::{Path, PathBuf};

use attrflip_core::attack::{run_attack, AttackConfig, Method, Mode};
use attrflip_core::data::pnm::{read_image, write_image};
use attrflip_core::image::{ImageTensor, Shape};
use attrflip_core::pass::pass_score;
use log::info;
use serde::Serialize;

use crate::attack::load_model;
use crate::{create_dir, CliError, ExperimentConfig, Result};

/// Width of the white bar between the panels of a triptych.
const SEPARATOR: usize = 2;
/// Gain applied to the perturbation in the middle panel.
const MAGNIFY: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct DemoArgs {
    pub checkpoint: PathBuf,
    pub image: PathBuf,
    pub attribute: String,
    pub method: Method,
    pub mode: Mode,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PassReport {
    score: f64,
    ecc_converged: bool,
    tau: f64,
    adversarial: bool,
}

pub fn cmd_pass(cfg: &ExperimentConfig, original: &Path, perturbed: &Path, tau: Option<f64>) -> Result<()> {
    let tau = tau.unwrap_or(cfg.pass.tau);
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    let a = read_image(original)?;
    let b = read_image(perturbed)?;
    let r = pass_score(&a, &b, &cfg.pass)?;
    let report = PassReport {
        score: r.score,
        ecc_converged: r.ecc_converged,
        tau,
        adversarial: r.score >= tau,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

/// Original, magnified perturbation around mid-gray, perturbed; side by side.
pub fn triptych(original: &ImageTensor, perturbed: &ImageTensor) -> Result<ImageTensor> {
    original.ensure_same_shape(perturbed)?;
    let (h, w, c) = (original.height(), original.width(), original.channels());
    let mut out = ImageTensor::filled(Shape::new(h, 3 * w + 2 * SEPARATOR, c), 255.0);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let a = original.get(y, x, ch);
                let b = perturbed.get(y, x, ch);
                let eta = (128.0 + MAGNIFY * (b - a)).clamp(0.0, 255.0);
                out.set(y, x, ch, a);
                out.set(y, w + SEPARATOR + x, ch, eta);
                out.set(y, 2 * (w + SEPARATOR) + x, ch, b);
            }
        }
    }
    Ok(out)
}

pub fn cmd_demo(cfg: &ExperimentConfig, args: &DemoArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let image = read_image(&args.image)?;
    let attribute = model
        .attribute_names()
        .iter()
        .position(|a| *a == args.attribute)
        .ok_or_else(|| {
            CliError::Config(format!(
                "attribute `{}` not in checkpoint (has {})",
                args.attribute,
                model.attribute_names().join(", ")
            ))
        })?;
    // no label file here, so the network's own answer stands in for truth
    let truth = model.predict(&image)?[attribute];
    let config = AttackConfig {
        method: args.method,
        mode: args.mode,
        ..cfg.attack.search.clone()
    };
    let id = args
        .image
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let outcome = run_attack(&model, &id, &image, attribute, truth, &config, &cfg.pass)?;

    let output = args.output.clone().unwrap_or_else(|| cfg.out.join("demo.ppm"));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_image(&output, &triptych(&image, &outcome.perturbed)?)?;
    info!("wrote {}", output.display());
    println!("{}", serde_json::to_string(&DemoSummary::from(&outcome))?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct DemoSummary<'a> {
    attribute: &'a str,
    method: &'static str,
    mode: &'static str,
    flipped: bool,
    epsilon: Option<f64>,
    iterations: usize,
    pass_score: Option<f64>,
}

impl<'a> From<&'a attrflip_core::attack::AttackOutcome> for DemoSummary<'a> {
    fn from(o: &'a attrflip_core::attack::AttackOutcome) -> Self {
        DemoSummary {
            attribute: &o.attribute_name,
            method: o.method.as_str(),
            mode: o.mode.as_str(),
            flipped: o.flipped,
            epsilon: o.epsilon,
            iterations: o.iterations,
            pass_score: o.pass_score,
        }
    }
}
