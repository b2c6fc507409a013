//! FGS and FFA perturbation search.
//!
//! Two directions:
//!
//! * FGS: the elementwise sign of the training-loss gradient of the attacked
//!   attribute. The search descends the loss of the class it wants to reach,
//!   which for a correctly classified input is ascent on its own label.
//! * FFA: build a target score vector that zeros the attacked attribute
//!   (for softmax heads: zeros the larger of its two logits) and descend
//!   `0.5 * ||t - f(x)||^2`. No ground-truth label is needed.
//!
//! and two ways of following them:
//!
//! * line search: double `epsilon` along a fixed direction until the class
//!   flips, then bisect the last bracket;
//! * iterative: repeated `L_inf = 1` steps with the gradient recomputed at
//!   every temporary image.
//!
//! Every outcome is verified on the rounded, clamped image with a fresh
//! forward pass before it counts as flipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::{ClassifierModel, HeadKind, LossSpec, ScoreVector};
use crate::pass::{pass_score, PassConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fgs,
    Ffa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    LineSearch,
    Iterative,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fgs => "fgs",
            Method::Ffa => "ffa",
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LineSearch => "line_search",
            Mode::Iterative => "iterative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub method: Method,
    pub mode: Mode,
    pub epsilon_initial: f64,
    pub epsilon_max: f64,
    pub binary_search_iters: u32,
    /// Iteration budget of the iterative mode.
    pub max_iterations: usize,
    /// Half-pixel steps tried past the bisected epsilon when rounding the
    /// perturbed image undoes the flip. Zero disables the retry.
    pub quantization_repair_steps: usize,
    /// Follow `+grad` of the FFA target loss instead of descending it.
    pub ffa_literal_ascent: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            method: Method::Ffa,
            mode: Mode::LineSearch,
            epsilon_initial: 0.5,
            epsilon_max: 512.0,
            binary_search_iters: 20,
            max_iterations: 500,
            quantization_repair_steps: 8,
            ffa_literal_ascent: false,
        }
    }
}

impl AttackConfig {
    pub fn new(method: Method, mode: Mode) -> Self {
        AttackConfig {
            method,
            mode,
            ..AttackConfig::default()
        }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.method.as_str(), self.mode.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_initial.is_nan()
            || self.epsilon_initial <= 0.0
            || self.epsilon_max.is_nan()
            || self.epsilon_max < self.epsilon_initial
        {
            return Err(Error::Config("need 0 < epsilon_initial <= epsilon_max".into()));
        }
        Ok(())
    }
}

/// What counts as success for one attribute of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipGoal {
    pub attribute: usize,
    pub original_class: i8,
    pub ground_truth: i8,
    /// The source is misclassified and the attack tries to correct it.
    pub natural: bool,
    pub target_class: i8,
}

impl FlipGoal {
    pub fn from_scores(scores: &ScoreVector, attribute: usize, ground_truth: i8) -> Result<Self> {
        let count = scores.attribute_count();
        if attribute >= count {
            return Err(Error::AttributeIndex {
                index: attribute,
                count,
            });
        }
        let original_class = scores.class_of(attribute);
        let natural = original_class != ground_truth;
        Ok(FlipGoal {
            attribute,
            original_class,
            ground_truth,
            natural,
            // correctly classified: any change; misclassified: reach the truth
            target_class: if natural { ground_truth } else { -original_class },
        })
    }

    pub fn for_image(model: &ClassifierModel, image: &ImageTensor, attribute: usize, ground_truth: i8) -> Result<Self> {
        Self::from_scores(&model.forward(image)?, attribute, ground_truth)
    }

    pub fn satisfied_by(&self, scores: &ScoreVector) -> bool {
        scores.class_of(self.attribute) == self.target_class
    }

    pub fn check(&self, model: &ClassifierModel, image: &ImageTensor) -> Result<bool> {
        Ok(self.satisfied_by(&model.forward(image)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    /// No flip along the direction up to `epsilon_max`.
    NoFlip,
    /// The search flipped the class but the rounded image does not.
    QuantizationReverted,
    ZeroGradient,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub image_id: String,
    pub attribute: usize,
    pub attribute_name: String,
    pub method: Method,
    pub mode: Mode,
    pub original_class: i8,
    pub ground_truth: i8,
    pub natural: bool,
    /// Bisected epsilon along the (unrounded) direction; line search only.
    pub epsilon: Option<f64>,
    /// Epsilon actually used for the rounded image; line search only.
    pub epsilon_applied: Option<f64>,
    pub iterations: usize,
    pub gradient_evaluations: usize,
    pub flipped: bool,
    pub failure: Option<Failure>,
    /// Only computed for flipped outcomes.
    pub pass_score: Option<f64>,
    pub ecc_converged: Option<bool>,
    pub is_adversarial: bool,
    #[serde(with = "crate::data::outcomes::image_b64")]
    pub perturbed: ImageTensor,
}

impl AttackOutcome {
    /// `perturbed - original`, elementwise.
    pub fn eta(&self, original: &ImageTensor) -> Result<Vec<f64>> {
        self.perturbed.difference(original)
    }

    pub fn adversarial_at(&self, tau: f64) -> bool {
        self.flipped && self.pass_score.is_some_and(|s| s >= tau)
    }
}

/// Sign of the gradient of attribute `attribute`'s training loss against `label`.
pub fn fgs_direction(model: &ClassifierModel, image: &ImageTensor, attribute: usize, label: i8) -> Result<Vec<f64>> {
    let g = model.input_gradient(image, &LossSpec::AttributeLabel { attribute, label })?;
    Ok(g.into_iter().map(sign).collect())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Target score vector that zeros attribute `i` and keeps everything else.
pub fn ffa_target(scores: &ScoreVector, i: usize) -> Result<ScoreVector> {
    let count = scores.attribute_count();
    if i >= count {
        return Err(Error::AttributeIndex { index: i, count });
    }
    let mut t = scores.clone();
    match scores.head {
        HeadKind::SoftmaxLogits => {
            let (p, a) = (2 * i, 2 * i + 1);
            if t.scores[p] >= t.scores[a] {
                t.scores[p] = 0.0;
            } else {
                t.scores[a] = 0.0;
            }
        }
        _ => t.scores[i] = 0.0,
    }
    Ok(t)
}

/// Descent direction `-grad 0.5 ||t - f(x)||^2` towards a fixed target.
pub fn ffa_direction_to(model: &ClassifierModel, image: &ImageTensor, target: &ScoreVector) -> Result<Vec<f64>> {
    let g = model.input_gradient(image, &LossSpec::Target(&target.scores))?;
    Ok(g.into_iter().map(|v| -v).collect())
}

/// FFA descent direction for attribute `i`, target built from the current scores.
pub fn ffa_direction(model: &ClassifierModel, image: &ImageTensor, i: usize) -> Result<Vec<f64>> {
    let target = ffa_target(&model.forward(image)?, i)?;
    ffa_direction_to(model, image, &target)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Smallest flipping `epsilon` along `direction`, evaluated on clamped but
/// unrounded images. `None` when nothing up to `epsilon_max` flips.
pub fn line_search_along(
    model: &ClassifierModel,
    image: &ImageTensor,
    direction: &[f64],
    goal: &FlipGoal,
    config: &AttackConfig,
) -> Result<Option<f64>> {
    let flips = |eps: f64| goal.check(model, &image.offset(direction, eps).clamped());
    let mut lo = 0.0;
    let mut hi = config.epsilon_initial;
    loop {
        if hi > config.epsilon_max {
            return Ok(None);
        }
        if flips(hi)? {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..config.binary_search_iters {
        let mid = 0.5 * (lo + hi);
        if flips(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Verify a flip on the rounded image by a fresh forward pass.
///
/// Correctly classified source (`natural == false`): the class was the
/// ground truth and no longer is. Misclassified source: the class was wrong
/// and now equals the ground truth.
pub fn verify_flip(
    model: &ClassifierModel,
    original: &ImageTensor,
    perturbed: &ImageTensor,
    attribute: usize,
    ground_truth: i8,
    natural: bool,
) -> Result<bool> {
    let before = model.forward(original)?;
    let after = model.forward(perturbed)?;
    let count = before.attribute_count();
    if attribute >= count {
        return Err(Error::AttributeIndex {
            index: attribute,
            count,
        });
    }
    let (c0, c1) = (before.class_of(attribute), after.class_of(attribute));
    Ok(if natural {
        c0 != ground_truth && c1 == ground_truth
    } else {
        c0 == ground_truth && c1 != ground_truth
    })
}

struct Search {
    perturbed: ImageTensor,
    epsilon: Option<f64>,
    epsilon_applied: Option<f64>,
    iterations: usize,
    gradient_evaluations: usize,
    failure: Option<Failure>,
}

fn direction_for(
    model: &ClassifierModel,
    image: &ImageTensor,
    goal: &FlipGoal,
    target: &ScoreVector,
    config: &AttackConfig,
) -> Result<Vec<f64>> {
    Ok(match config.method {
        // descend the loss of the target class; matches ascent on the true
        // label while |f| < 1 and keeps working past it
        Method::Fgs => {
            let mut d = fgs_direction(model, image, goal.attribute, goal.target_class)?;
            d.iter_mut().for_each(|v| *v = -*v);
            d
        }
        Method::Ffa => {
            let mut d = ffa_direction_to(model, image, target)?;
            if config.ffa_literal_ascent {
                d.iter_mut().for_each(|v| *v = -*v);
            }
            d
        }
    })
}

fn run_line_search(
    model: &ClassifierModel,
    image: &ImageTensor,
    goal: &FlipGoal,
    target: &ScoreVector,
    config: &AttackConfig,
) -> Result<Search> {
    let mut direction = direction_for(model, image, goal, target, config)?;
    let scale = max_abs(&direction);
    let mut search = Search {
        perturbed: image.quantized(),
        epsilon: None,
        epsilon_applied: None,
        iterations: 0,
        gradient_evaluations: 1,
        failure: None,
    };
    if scale == 0.0 {
        search.failure = Some(Failure::ZeroGradient);
        return Ok(search);
    }
    // unit L_inf so epsilon is measured in pixel levels
    direction.iter_mut().for_each(|v| *v /= scale);

    let Some(eps) = line_search_along(model, image, &direction, goal, config)? else {
        search.perturbed = image.offset(&direction, config.epsilon_max).quantized();
        search.failure = Some(Failure::NoFlip);
        return Ok(search);
    };
    search.epsilon = Some(eps);
    let (perturbed, applied) = quantize_with_repair(model, image, &direction, eps, goal, config)?;
    search.perturbed = perturbed;
    match applied {
        Some(a) => search.epsilon_applied = Some(a),
        None => search.failure = Some(Failure::QuantizationReverted),
    }
    Ok(search)
}

/// Round `image + eps * direction`; if that loses the flip, walk forward in
/// half-pixel steps for a bounded number of tries.
fn quantize_with_repair(
    model: &ClassifierModel,
    image: &ImageTensor,
    direction: &[f64],
    eps: f64,
    goal: &FlipGoal,
    config: &AttackConfig,
) -> Result<(ImageTensor, Option<f64>)> {
    let step = 0.5 / max_abs(direction);
    let first = image.offset(direction, eps).quantized();
    if goal.check(model, &first)? {
        return Ok((first, Some(eps)));
    }
    for j in 1..=config.quantization_repair_steps {
        let e = eps + j as f64 * step;
        if e > config.epsilon_max {
            break;
        }
        let candidate = image.offset(direction, e).quantized();
        if goal.check(model, &candidate)? {
            return Ok((candidate, Some(e)));
        }
    }
    Ok((first, None))
}

fn run_iterative(
    model: &ClassifierModel,
    image: &ImageTensor,
    goal: &FlipGoal,
    target: &ScoreVector,
    config: &AttackConfig,
) -> Result<Search> {
    let mut search = Search {
        perturbed: image.quantized(),
        epsilon: None,
        epsilon_applied: None,
        iterations: 0,
        gradient_evaluations: 0,
        failure: None,
    };
    match config.method {
        Method::Fgs => {
            // discrete pixels throughout
            let mut current = image.quantized();
            while search.iterations < config.max_iterations {
                let d = direction_for(model, &current, goal, target, config)?;
                search.gradient_evaluations += 1;
                if d.iter().all(|&v| v == 0.0) {
                    search.failure = Some(Failure::ZeroGradient);
                    break;
                }
                current = current.offset(&d, 1.0).quantized();
                search.iterations += 1;
                if goal.check(model, &current)? {
                    break;
                }
            }
            search.perturbed = current;
        }
        Method::Ffa => {
            // unrounded working image; only the reported image is rounded
            let mut working = image.clone();
            let mut last: Option<Vec<f64>> = None;
            while search.iterations < config.max_iterations {
                let working_flipped = goal.check(model, &working)?;
                let d = match (&last, working_flipped) {
                    // past the boundary but rounding still reverts: keep going
                    (Some(prev), true) => prev.clone(),
                    _ => {
                        let mut d = direction_for(model, &working, goal, target, config)?;
                        search.gradient_evaluations += 1;
                        let m = max_abs(&d);
                        match (&last, m == 0.0) {
                            // sitting exactly on the target, still unflipped
                            (Some(prev), true) => prev.clone(),
                            (None, true) => {
                                search.failure = Some(Failure::ZeroGradient);
                                break;
                            }
                            _ => {
                                d.iter_mut().for_each(|v| *v /= m);
                                d
                            }
                        }
                    }
                };
                working = working.offset(&d, 1.0).clamped();
                last = Some(d);
                search.iterations += 1;
                if goal.check(model, &working.quantized())? {
                    break;
                }
            }
            search.perturbed = working.quantized();
        }
    }
    if search.failure.is_none() && !goal.check(model, &search.perturbed)? {
        search.failure = Some(Failure::MaxIterations);
    }
    Ok(search)
}

/// Attack attribute `attribute` of `image` and verify the result.
#[allow(clippy::too_many_arguments)]
pub fn run_attack(
    model: &ClassifierModel,
    image_id: &str,
    image: &ImageTensor,
    attribute: usize,
    ground_truth: i8,
    config: &AttackConfig,
    pass: &PassConfig,
) -> Result<AttackOutcome> {
    config.validate()?;
    let scores = model.forward(image)?;
    let goal = FlipGoal::from_scores(&scores, attribute, ground_truth)?;
    let target = ffa_target(&scores, attribute)?;

    let search = if goal.satisfied_by(&scores) {
        // nothing to do: the class is already where the goal wants it
        Search {
            perturbed: image.quantized(),
            epsilon: Some(0.0),
            epsilon_applied: Some(0.0),
            iterations: 0,
            gradient_evaluations: 0,
            failure: None,
        }
    } else {
        match config.mode {
            Mode::LineSearch => run_line_search(model, image, &goal, &target, config)?,
            Mode::Iterative => run_iterative(model, image, &goal, &target, config)?,
        }
    };

    let flipped = search.failure.is_none()
        && verify_flip(model, image, &search.perturbed, attribute, ground_truth, goal.natural)?;
    let (pass_score, ecc_converged) = if flipped {
        let r = pass_score(image, &search.perturbed, pass)?;
        (Some(r.score), Some(r.ecc_converged))
    } else {
        (None, None)
    };
    let is_adversarial = flipped && pass_score.is_some_and(|s| s >= pass.tau);
    Ok(AttackOutcome {
        image_id: image_id.to_string(),
        attribute,
        attribute_name: model.attribute_names().get(attribute).cloned().unwrap_or_default(),
        method: config.method,
        mode: config.mode,
        original_class: goal.original_class,
        ground_truth,
        natural: goal.natural,
        epsilon: search.epsilon,
        epsilon_applied: search.epsilon_applied,
        iterations: search.iterations,
        gradient_evaluations: search.gradient_evaluations,
        flipped,
        failure: search.failure,
        pass_score,
        ecc_converged,
        is_adversarial,
        perturbed: search.perturbed,
    })
}
