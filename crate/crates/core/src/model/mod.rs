//! Small differentiable attribute classifiers.
//!
//! A model is a stack of dense/conv/pool layers ending in one of three heads:
//!
//! * `EuclideanSingle`: one score per network, trained with `(f(x) - y)^2`.
//! * `EuclideanMulti`: one score per attribute, trained with the summed
//!   squared error over all attributes (a MOON-style joint network).
//! * `SoftmaxLogits`: two logits per attribute, ordered `(presence, absence)`,
//!   trained with per-attribute two-way cross-entropy.
//!
//! Gradients are exact and available with respect to both the weights
//! (for training) and the input pixels (for attacks).

pub mod layers;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use layers::{Activation, LayerSpec};
pub use train::{mean_loss, EpochRecord, TrainConfig, Trainer};

use crate::data::AttributeDataset;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape};
use layers::Layer;

/// Magnitude of raw pixel inputs; first-layer initial weights are divided by it.
const PIXEL_SCALE: f64 = 128.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    EuclideanSingle,
    EuclideanMulti,
    SoftmaxLogits,
}

impl HeadKind {
    pub fn output_dim(self, attributes: usize) -> usize {
        match self {
            HeadKind::EuclideanSingle => 1,
            HeadKind::EuclideanMulti => attributes,
            HeadKind::SoftmaxLogits => 2 * attributes,
        }
    }

    pub fn is_euclidean(self) -> bool {
        !matches!(self, HeadKind::SoftmaxLogits)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::EuclideanSingle => "euclidean_single",
            HeadKind::EuclideanMulti => "euclidean_multi",
            HeadKind::SoftmaxLogits => "softmax_logits",
        }
    }
}

/// Thresholding rule: strictly positive scores are `+1`, everything else `-1`.
#[inline]
pub fn threshold(score: f64) -> i8 {
    if score > 0.0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub head: HeadKind,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(head: HeadKind, scores: Vec<f64>) -> Self {
        ScoreVector { head, scores }
    }

    pub fn attribute_count(&self) -> usize {
        match self.head {
            HeadKind::SoftmaxLogits => self.scores.len() / 2,
            _ => self.scores.len(),
        }
    }

    /// Classification of attribute `i`.
    pub fn class_of(&self, i: usize) -> i8 {
        match self.head {
            HeadKind::SoftmaxLogits => {
                if self.scores[2 * i] > self.scores[2 * i + 1] {
                    1
                } else {
                    -1
                }
            }
            _ => threshold(self.scores[i]),
        }
    }

    pub fn classify(&self) -> Vec<i8> {
        (0..self.attribute_count()).map(|i| self.class_of(i)).collect()
    }

    /// Signed distance to the decision boundary for attribute `i`.
    pub fn margin(&self, i: usize) -> f64 {
        match self.head {
            HeadKind::SoftmaxLogits => self.scores[2 * i] - self.scores[2 * i + 1],
            _ => self.scores[i],
        }
    }
}

/// Which loss an input gradient is taken of.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    /// The head's training loss against a full label vector.
    Labels(&'a [i8]),
    /// The head's training loss restricted to one attribute.
    AttributeLabel { attribute: usize, label: i8 },
    /// `0.5 * ||t - f(x)||^2` against a fixed target score vector.
    Target(&'a [f64]),
}

/// Architecture description used to build a freshly initialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: Shape,
    /// Hidden layers; the output layer is appended from the head.
    pub hidden: Vec<LayerSpec>,
    pub head: HeadKind,
    pub attribute_names: Vec<String>,
    /// Per-channel value subtracted from pixels before the first layer.
    #[serde(default)]
    pub channel_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    input_shape: Shape,
    layer_specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    weights: Vec<f64>,
    head: HeadKind,
    attribute_names: Vec<String>,
    channel_mean: Option<Vec<f64>>,
    pub epoch: u32,
    pub iteration: u64,
    pub seed: u64,
}

struct Trace {
    inputs: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ClassifierModel {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let out_dim = spec.head.output_dim(spec.attribute_names.len());
        let mut layer_specs = spec.hidden.clone();
        layer_specs.push(LayerSpec::dense(out_dim, Activation::Identity));
        let (layers, count) = layers::compile(spec.input_shape, &layer_specs)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; count];
        for (index, layer) in layers.iter().enumerate() {
            let kernel_len = layer.kernel_len();
            if kernel_len == 0 {
                continue;
            }
            let mut bound = (6.0 / (layer.fan_in() + layer.fan_out()) as f64).sqrt();
            if index == 0 {
                bound /= PIXEL_SCALE;
            }
            for w in &mut weights[layer.offset..layer.offset + kernel_len] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Self::from_parts(
            spec.input_shape,
            layer_specs,
            spec.head,
            spec.attribute_names.clone(),
            spec.channel_mean.clone(),
            weights,
        )
        .map(|mut m| {
            m.seed = seed;
            m
        })
    }

    /// Assemble a model from a full layer list (including the output layer).
    pub fn from_parts(
        input_shape: Shape,
        layer_specs: Vec<LayerSpec>,
        head: HeadKind,
        attribute_names: Vec<String>,
        channel_mean: Option<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if attribute_names.is_empty() {
            return Err(Error::Architecture("model needs at least one attribute".into()));
        }
        if head == HeadKind::EuclideanSingle && attribute_names.len() != 1 {
            return Err(Error::Architecture(format!(
                "euclidean_single head takes exactly one attribute, got {}",
                attribute_names.len()
            )));
        }
        if let Some(mean) = &channel_mean {
            if mean.len() != input_shape.channels {
                return Err(Error::Architecture(format!(
                    "channel mean has {} entries for {} channels",
                    mean.len(),
                    input_shape.channels
                )));
            }
        }
        let (layers, count) = layers::compile(input_shape, &layer_specs)?;
        let out_dim = head.output_dim(attribute_names.len());
        match layers.last() {
            Some(last) if last.output.len() == out_dim => {}
            _ => {
                return Err(Error::Architecture(format!(
                    "{} head with {} attributes needs output dimension {out_dim}",
                    head.as_str(),
                    attribute_names.len()
                )))
            }
        }
        if weights.len() != count {
            return Err(Error::Dimension {
                expected: count,
                actual: weights.len(),
            });
        }
        Ok(ClassifierModel {
            input_shape,
            layer_specs,
            layers,
            weights,
            head,
            attribute_names,
            channel_mean,
            epoch: 0,
            iteration: 0,
            seed: 0,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.layer_specs
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute_count(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim(self.attribute_names.len())
    }

    pub fn channel_mean(&self) -> Option<&[f64]> {
        self.channel_mean.as_deref()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Weight and bias slices of the output layer.
    pub fn output_layer_mut(&mut self) -> &mut [f64] {
        let last = self.layers.last().expect("model has an output layer");
        &mut self.weights[last.offset..last.offset + last.weight_count]
    }

    /// Round every weight to single precision, matching what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for w in &mut self.weights {
            *w = f64::from(*w as f32);
        }
    }

    /// Same architecture, head and attribute list.
    pub fn same_architecture(&self, other: &ClassifierModel) -> bool {
        self.input_shape == other.input_shape
            && self.layer_specs == other.layer_specs
            && self.head == other.head
            && self.attribute_names == other.attribute_names
            && self.channel_mean == other.channel_mean
    }

    fn check_input(&self, image: &ImageTensor) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::Shape {
                expected: self.input_shape.to_string(),
                actual: image.shape().to_string(),
            });
        }
        Ok(())
    }

    fn preprocess(&self, image: &ImageTensor) -> Vec<f64> {
        match &self.channel_mean {
            None => image.pixels().to_vec(),
            Some(mean) => image
                .pixels()
                .chunks_exact(mean.len())
                .flat_map(|px| px.iter().zip(mean).map(|(p, m)| p - m))
                .collect(),
        }
    }

    fn trace(&self, image: &ImageTensor) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut current = self.preprocess(image);
        for layer in &self.layers {
            let (pre, out) = layers::forward(layer, &self.weights, &current);
            inputs.push(current);
            pres.push(pre);
            current = out;
        }
        Trace {
            inputs,
            pres,
            output: current,
        }
    }

    /// Back-propagate `grad_output` through a recorded trace.
    fn backprop(&self, trace: &Trace, grad_output: &[f64], mut param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let mut grad = grad_output.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let output = trace.inputs.get(k + 1).unwrap_or(&trace.output);
            grad = layers::backward(
                layer,
                &self.weights,
                &trace.inputs[k],
                &trace.pres[k],
                output,
                &grad,
                param_grad.as_deref_mut(),
            );
        }
        grad
    }

    pub fn forward(&self, image: &ImageTensor) -> Result<ScoreVector> {
        self.check_input(image)?;
        Ok(ScoreVector::new(self.head, self.trace(image).output))
    }

    /// Classification of every attribute on `image`.
    pub fn predict(&self, image: &ImageTensor) -> Result<Vec<i8>> {
        Ok(self.forward(image)?.classify())
    }

    pub fn loss(&self, image: &ImageTensor, labels: &[i8]) -> Result<f64> {
        let scores = self.forward(image)?;
        Ok(output_loss(self.head, &scores.scores, &LossSpec::Labels(labels))?.0)
    }

    /// Gradient of the selected loss with respect to the input pixels.
    pub fn input_gradient(&self, image: &ImageTensor, spec: &LossSpec<'_>) -> Result<Vec<f64>> {
        Ok(self.loss_and_input_gradient(image, spec)?.2)
    }

    /// `(scores, loss, dLoss/dx)` from a single forward/backward pass.
    pub fn loss_and_input_gradient(
        &self,
        image: &ImageTensor,
        spec: &LossSpec<'_>,
    ) -> Result<(ScoreVector, f64, Vec<f64>)> {
        self.check_input(image)?;
        let trace = self.trace(image);
        let (loss, grad_out) = output_loss(self.head, &trace.output, spec)?;
        let grad = self.backprop(&trace, &grad_out, None);
        Ok((ScoreVector::new(self.head, trace.output), loss, grad))
    }

    /// Accumulate the weight gradient of the training loss for one sample.
    pub(crate) fn accumulate_param_gradient(
        &self,
        image: &ImageTensor,
        labels: &[i8],
        scale: f64,
        param_grad: &mut [f64],
    ) -> Result<f64> {
        self.check_input(image)?;
        let trace = self.trace(image);
        let (loss, mut grad_out) = output_loss(self.head, &trace.output, &LossSpec::Labels(labels))?;
        for g in &mut grad_out {
            *g *= scale;
        }
        self.backprop(&trace, &grad_out, Some(param_grad));
        Ok(loss)
    }

    /// Classification error over a labelled dataset. Columns are matched to
    /// the model's attributes by name.
    pub fn dataset_error(&self, dataset: &AttributeDataset) -> Result<DatasetError> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let columns = dataset.column_indices(&self.attribute_names)?;
        let mut wrong = vec![0usize; columns.len()];
        for item in dataset.items() {
            let predicted = self.predict(&item.image)?;
            for (a, &col) in columns.iter().enumerate() {
                if predicted[a] * item.labels[col] <= 0 {
                    wrong[a] += 1;
                }
            }
        }
        let n = dataset.len() as f64;
        let per_attribute: Vec<f64> = wrong.iter().map(|&w| w as f64 / n).collect();
        let raw_sum = wrong.iter().sum::<usize>() as f64 / n;
        let mean = raw_sum / columns.len() as f64;
        Ok(DatasetError {
            per_attribute,
            mean,
            raw_sum,
        })
    }
}

/// Per-attribute error rates, their mean (normalized by `N * M`) and the
/// un-normalized `1/N` sum over attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetError {
    pub per_attribute: Vec<f64>,
    pub mean: f64,
    pub raw_sum: f64,
}

/// Loss value and its gradient with respect to the raw network output.
pub(crate) fn output_loss(head: HeadKind, out: &[f64], spec: &LossSpec<'_>) -> Result<(f64, Vec<f64>)> {
    let attributes = match head {
        HeadKind::SoftmaxLogits => out.len() / 2,
        _ => out.len(),
    };
    let mut grad = vec![0.0; out.len()];
    let mut loss = 0.0;
    match *spec {
        LossSpec::Labels(labels) => {
            if labels.len() != attributes {
                return Err(Error::Dimension {
                    expected: attributes,
                    actual: labels.len(),
                });
            }
            for (i, &y) in labels.iter().enumerate() {
                loss += attribute_loss(head, out, i, y, &mut grad);
            }
        }
        LossSpec::AttributeLabel { attribute, label } => {
            if attribute >= attributes {
                return Err(Error::AttributeIndex {
                    index: attribute,
                    count: attributes,
                });
            }
            loss = attribute_loss(head, out, attribute, label, &mut grad);
        }
        LossSpec::Target(target) => {
            if target.len() != out.len() {
                return Err(Error::Dimension {
                    expected: out.len(),
                    actual: target.len(),
                });
            }
            for ((g, &f), &t) in grad.iter_mut().zip(out).zip(target) {
                loss += 0.5 * (t - f) * (t - f);
                *g = f - t;
            }
        }
    }
    Ok((loss, grad))
}

fn attribute_loss(head: HeadKind, out: &[f64], i: usize, y: i8, grad: &mut [f64]) -> f64 {
    let y = f64::from(y);
    match head {
        HeadKind::EuclideanSingle | HeadKind::EuclideanMulti => {
            let r = out[i] - y;
            grad[i] += 2.0 * r;
            r * r
        }
        HeadKind::SoftmaxLogits => {
            let (p, a) = (out[2 * i], out[2 * i + 1]);
            let m = p.max(a);
            let lse = m + ((p - m).exp() + (a - m).exp()).ln();
            let prob_p = (p - lse).exp();
            let prob_a = (a - lse).exp();
            if y > 0.0 {
                grad[2 * i] += prob_p - 1.0;
                grad[2 * i + 1] += prob_a;
                lse - p
            } else {
                grad[2 * i] += prob_p;
                grad[2 * i + 1] += prob_a - 1.0;
                lse - a
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single dense identity layer over a 1x3x1 image.
    pub(crate) fn linear_model(w: [f64; 3], bias: f64) -> ClassifierModel {
        ClassifierModel::from_parts(
            Shape::new(1, 3, 1),
            vec![LayerSpec::dense(1, Activation::Identity)],
            HeadKind::EuclideanSingle,
            vec!["a".into()],
            None,
            vec![w[0], w[1], w[2], bias],
        )
        .unwrap()
    }

    fn image(px: [f64; 3]) -> ImageTensor {
        ImageTensor::new(Shape::new(1, 3, 1), px.to_vec()).unwrap()
    }

    #[test]
    fn linear_forward_by_hand() {
        let m = linear_model([1.0, -2.0, 0.0], 0.0);
        let s = m.forward(&image([1.0, 0.25, 9.0])).unwrap();
        assert_eq!(s.scores, vec![0.5]);
    }

    #[test]
    fn zero_weights_give_zero_score() {
        let m = linear_model([0.0; 3], 0.0);
        assert_eq!(m.forward(&image([17.0, 3.0, 255.0])).unwrap().scores, vec![0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = ModelSpec {
            input_shape: Shape::new(4, 4, 3),
            hidden: vec![
                LayerSpec::conv(2, 3, Activation::Tanh),
                LayerSpec::dense(3, Activation::Relu),
            ],
            head: HeadKind::EuclideanMulti,
            attribute_names: vec!["a".into(), "b".into()],
            channel_mean: None,
        };
        let m = ClassifierModel::new(&spec, 5).unwrap();
        let x = ImageTensor::filled(Shape::new(4, 4, 3), 77.0);
        let a = m.forward(&x).unwrap().scores;
        let b = m.forward(&x).unwrap().scores;
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = linear_model([1.0, 0.0, 0.0], 0.0);
        let bad = ImageTensor::filled(Shape::new(1, 4, 1), 0.0);
        assert!(matches!(m.forward(&bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn euclidean_losses() {
        let (l, _) = output_loss(HeadKind::EuclideanSingle, &[1.0], &LossSpec::Labels(&[1])).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = output_loss(HeadKind::EuclideanSingle, &[0.5], &LossSpec::Labels(&[1])).unwrap();
        assert_eq!(l, 0.25);
        let (l, _) = output_loss(HeadKind::EuclideanMulti, &[0.5, -1.0], &LossSpec::Labels(&[1, -1])).unwrap();
        assert_eq!(l, 0.25);
        assert!(output_loss(HeadKind::EuclideanMulti, &[0.5, -1.0], &LossSpec::Labels(&[1])).is_err());
    }

    #[test]
    fn softmax_loss_is_cross_entropy() {
        let (l, g) = output_loss(HeadKind::SoftmaxLogits, &[0.0, 0.0], &LossSpec::Labels(&[1])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_input_gradient() {
        let m = linear_model([1.0, -2.0, 0.0], 0.0);
        let g = m
            .input_gradient(&image([1.0, 0.25, 9.0]), &LossSpec::Labels(&[1]))
            .unwrap();
        assert_eq!(g, vec![-1.0, 2.0, 0.0]);
    }

    #[test]
    fn target_at_current_scores_has_zero_gradient() {
        let m = linear_model([1.0, -2.0, 0.5], 0.1);
        let x = image([3.0, 4.0, 5.0]);
        let f = m.forward(&x).unwrap().scores;
        let g = m.input_gradient(&x, &LossSpec::Target(&f)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classify_thresholds_at_zero() {
        let s = ScoreVector::new(HeadKind::EuclideanMulti, vec![0.3, -0.0001, 0.0]);
        assert_eq!(s.classify(), vec![1, -1, -1]);
        let s = ScoreVector::new(HeadKind::SoftmaxLogits, vec![2.1, 0.4, 0.4, 0.4]);
        assert_eq!(s.classify(), vec![1, -1]);
    }

    #[test]
    fn single_head_requires_one_attribute() {
        let r = ClassifierModel::from_parts(
            Shape::new(1, 3, 1),
            vec![LayerSpec::dense(1, Activation::Identity)],
            HeadKind::EuclideanSingle,
            vec!["a".into(), "b".into()],
            None,
            vec![0.0; 4],
        );
        assert!(r.is_err());
    }
}
