//! Layer definitions and the dense/conv/pool kernels with their backward passes.
//!
//! Activations are kept in `H x W x C` order throughout so a dense layer can
//! consume the output of a conv or pool layer by plain flattening.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// One entry of a model's layer list as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        outputs: usize,
        activation: Activation,
    },
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        activation: Activation,
    },
    /// Non-overlapping average pooling with a square window.
    AvgPool {
        size: usize,
    },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn dense(outputs: usize, activation: Activation) -> Self {
        LayerSpec::Dense { outputs, activation }
    }

    pub fn conv(filters: usize, kernel: usize, activation: Activation) -> Self {
        LayerSpec::Conv {
            filters,
            kernel,
            stride: 1,
            padding: kernel / 2,
            activation,
        }
    }
}

/// A layer resolved against its input shape, with its slice of the flat weight vector.
#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub offset: usize,
    pub weight_count: usize,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { .. } => self.input.len(),
            LayerSpec::Conv { kernel, .. } => kernel * kernel * self.input.channels,
            LayerSpec::AvgPool { .. } => 0,
        }
    }

    pub fn fan_out(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv { filters, kernel, .. } => kernel * kernel * filters,
            LayerSpec::AvgPool { .. } => 0,
        }
    }

    /// Number of multiplicative weights; biases follow them in the flat vector.
    pub fn kernel_len(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { outputs, .. } => outputs * self.input.len(),
            LayerSpec::Conv { filters, kernel, .. } => filters * kernel * kernel * self.input.channels,
            LayerSpec::AvgPool { .. } => 0,
        }
    }
}

/// Resolve every layer's shapes and weight offsets.
/// Number of parameters the layer stack needs on `input`.
pub fn weight_count(input: Shape, specs: &[LayerSpec]) -> Result<usize> {
    compile(input, specs).map(|(_, n)| n)
}

pub(crate) fn compile(input: Shape, specs: &[LayerSpec]) -> Result<(Vec<Layer>, usize)> {
    let mut layers = Vec::with_capacity(specs.len());
    let mut shape = input;
    let mut offset = 0;
    for (index, spec) in specs.iter().enumerate() {
        let (output, weight_count) = match *spec {
            LayerSpec::Dense { outputs, .. } => {
                if outputs == 0 {
                    return Err(Error::Architecture(format!("layer {index}: dense with 0 outputs")));
                }
                (Shape::new(1, 1, outputs), outputs * shape.len() + outputs)
            }
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                padding,
                ..
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::Architecture(format!(
                        "layer {index}: conv needs nonzero filters, kernel and stride"
                    )));
                }
                let h = shape.height + 2 * padding;
                let w = shape.width + 2 * padding;
                if h < kernel || w < kernel {
                    return Err(Error::Architecture(format!(
                        "layer {index}: kernel {kernel} larger than padded input {shape}"
                    )));
                }
                let out = Shape::new((h - kernel) / stride + 1, (w - kernel) / stride + 1, filters);
                (out, filters * kernel * kernel * shape.channels + filters)
            }
            LayerSpec::AvgPool { size } => {
                if size == 0 || shape.height < size || shape.width < size {
                    return Err(Error::Architecture(format!(
                        "layer {index}: pool size {size} does not fit input {shape}"
                    )));
                }
                (Shape::new(shape.height / size, shape.width / size, shape.channels), 0)
            }
        };
        layers.push(Layer {
            spec: spec.clone(),
            input: shape,
            output,
            offset,
            weight_count,
        });
        offset += weight_count;
        shape = output;
    }
    Ok((layers, offset))
}

/// Forward one layer. Returns `(pre_activation, output)`; pooling layers
/// return an empty pre-activation.
pub(crate) fn forward(layer: &Layer, weights: &[f64], input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = &weights[layer.offset..layer.offset + layer.weight_count];
    match layer.spec {
        LayerSpec::Dense { outputs, activation } => {
            let n_in = input.len();
            let (kernel, bias) = w.split_at(outputs * n_in);
            let pre: Vec<f64> = kernel
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b)
                .collect();
            let out = pre.iter().map(|&z| activation.apply(z)).collect();
            (pre, out)
        }
        LayerSpec::Conv {
            filters,
            kernel,
            stride,
            padding,
            activation,
        } => {
            let (ih, iw, ic) = (layer.input.height, layer.input.width, layer.input.channels);
            let (oh, ow) = (layer.output.height, layer.output.width);
            let (kernels, bias) = w.split_at(filters * kernel * kernel * ic);
            let mut pre = vec![0.0; layer.output.len()];
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = (oy * ow + ox) * filters;
                    pre[base..base + filters].copy_from_slice(bias);
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= ih as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= iw as isize {
                                continue;
                            }
                            let px = &input[(iy as usize * iw + ix as usize) * ic..][..ic];
                            for f in 0..filters {
                                let k = &kernels[((f * kernel + ky) * kernel + kx) * ic..][..ic];
                                pre[base + f] += k.iter().zip(px).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
            }
            let out = pre.iter().map(|&z| activation.apply(z)).collect();
            (pre, out)
        }
        LayerSpec::AvgPool { size } => {
            let (iw, c) = (layer.input.width, layer.input.channels);
            let (oh, ow) = (layer.output.height, layer.output.width);
            let scale = 1.0 / (size * size) as f64;
            let mut out = vec![0.0; layer.output.len()];
            for oy in 0..oh {
                for ox in 0..ow {
                    for dy in 0..size {
                        for dx in 0..size {
                            let src = ((oy * size + dy) * iw + ox * size + dx) * c;
                            let dst = (oy * ow + ox) * c;
                            for ch in 0..c {
                                out[dst + ch] += input[src + ch] * scale;
                            }
                        }
                    }
                }
            }
            (Vec::new(), out)
        }
    }
}

/// Backward one layer. `grad_out` is dL/d(output). Returns dL/d(input) and,
/// when `param_grad` is given, accumulates dL/d(weights) into it.
pub(crate) fn backward(
    layer: &Layer,
    weights: &[f64],
    input: &[f64],
    pre: &[f64],
    output: &[f64],
    grad_out: &[f64],
    mut param_grad: Option<&mut [f64]>,
) -> Vec<f64> {
    let w = &weights[layer.offset..layer.offset + layer.weight_count];
    match layer.spec {
        LayerSpec::Dense { outputs, activation } => {
            let n_in = input.len();
            let delta: Vec<f64> = grad_out
                .iter()
                .zip(pre.iter().zip(output))
                .map(|(g, (&z, &a))| g * activation.derivative(z, a))
                .collect();
            let kernel = &w[..outputs * n_in];
            let mut grad_in = vec![0.0; n_in];
            for (row, &d) in kernel.chunks_exact(n_in).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (gi, a) in grad_in.iter_mut().zip(row) {
                    *gi += d * a;
                }
            }
            if let Some(pg) = param_grad.as_deref_mut() {
                let pg = &mut pg[layer.offset..layer.offset + layer.weight_count];
                let (gk, gb) = pg.split_at_mut(outputs * n_in);
                for ((grow, gbias), &d) in gk.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                    if d == 0.0 {
                        continue;
                    }
                    for (g, x) in grow.iter_mut().zip(input) {
                        *g += d * x;
                    }
                    *gbias += d;
                }
            }
            grad_in
        }
        LayerSpec::Conv {
            filters,
            kernel,
            stride,
            padding,
            activation,
        } => {
            let (ih, iw, ic) = (layer.input.height, layer.input.width, layer.input.channels);
            let (oh, ow) = (layer.output.height, layer.output.width);
            let klen = filters * kernel * kernel * ic;
            let kernels = &w[..klen];
            let delta: Vec<f64> = grad_out
                .iter()
                .zip(pre.iter().zip(output))
                .map(|(g, (&z, &a))| g * activation.derivative(z, a))
                .collect();
            let mut grad_in = vec![0.0; input.len()];
            let mut pg = param_grad
                .as_mut()
                .map(|pg| &mut pg[layer.offset..layer.offset + layer.weight_count]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = (oy * ow + ox) * filters;
                    let d_here = &delta[base..base + filters];
                    if let Some(pg) = pg.as_deref_mut() {
                        for (gb, d) in pg[klen..].iter_mut().zip(d_here) {
                            *gb += d;
                        }
                    }
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= ih as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= iw as isize {
                                continue;
                            }
                            let pix = (iy as usize * iw + ix as usize) * ic;
                            for (f, &d) in d_here.iter().enumerate() {
                                if d == 0.0 {
                                    continue;
                                }
                                let koff = ((f * kernel + ky) * kernel + kx) * ic;
                                for ch in 0..ic {
                                    grad_in[pix + ch] += d * kernels[koff + ch];
                                }
                                if let Some(pg) = pg.as_deref_mut() {
                                    for ch in 0..ic {
                                        pg[koff + ch] += d * input[pix + ch];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            grad_in
        }
        LayerSpec::AvgPool { size } => {
            let (iw, c) = (layer.input.width, layer.input.channels);
            let (oh, ow) = (layer.output.height, layer.output.width);
            let scale = 1.0 / (size * size) as f64;
            let mut grad_in = vec![0.0; input.len()];
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = (oy * ow + ox) * c;
                    for dy in 0..size {
                        for dx in 0..size {
                            let dst = ((oy * size + dy) * iw + ox * size + dx) * c;
                            for ch in 0..c {
                                grad_in[dst + ch] += grad_out[src + ch] * scale;
                            }
                        }
                    }
                }
            }
            grad_in
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compile_resolves_shapes() {
        let specs = [
            LayerSpec::conv(4, 3, Activation::Relu),
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::dense(5, Activation::Tanh),
            LayerSpec::dense(1, Activation::Identity),
        ];
        let (layers, total) = compile(Shape::new(8, 8, 3), &specs).unwrap();
        assert_eq!(layers[0].output, Shape::new(8, 8, 4));
        assert_eq!(layers[1].output, Shape::new(4, 4, 4));
        assert_eq!(layers[2].input.len(), 64);
        assert_eq!(total, (4 * 27 + 4) + (5 * 64 + 5) + (5 + 1));
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let specs = [LayerSpec::Conv {
            filters: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
            activation: Activation::Identity,
        }];
        assert!(compile(Shape::new(3, 3, 1), &specs).is_err());
    }
}
