//! Homography alignment by maximizing the enhanced correlation coefficient.
//!
//! Forward-additive Gauss-Newton on the eight free homography entries. Each
//! iteration warps the moving image and its gradients into the reference
//! frame, builds the Jacobian over the pixels that land inside the moving
//! image, and takes the closed-form ECC step (with the photometric scale
//! `lambda`). Steps that lower the correlation are halved until they do not.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::{ImageTensor, Shape};

/// Minimum share of reference pixels that must map inside the moving image.
const MIN_OVERLAP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography(pub [[f64; 3]; 3]);

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub const fn identity() -> Self {
        Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Map reference coordinates `(x, y)` into the moving image.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let h = &self.0;
        let d = h[2][0] * x + h[2][1] * y + h[2][2];
        (
            (h[0][0] * x + h[0][1] * y + h[0][2]) / d,
            (h[1][0] * x + h[1][1] * y + h[1][2]) / d,
        )
    }

    pub fn inverse(&self) -> Option<Homography> {
        let m = Matrix3::from_fn(|r, c| self.0[r][c]);
        let inv = m.try_inverse()?;
        let s = inv[(2, 2)];
        if s.abs() < 1e-12 {
            return None;
        }
        Some(Homography(std::array::from_fn(|r| {
            std::array::from_fn(|c| inv[(r, c)] / s)
        })))
    }

    fn params(&self) -> [f64; 8] {
        let h = &self.0;
        [h[0][0], h[0][1], h[0][2], h[1][0], h[1][1], h[1][2], h[2][0], h[2][1]]
    }

    fn from_params(p: &[f64; 8]) -> Self {
        Homography([[p[0], p[1], p[2]], [p[3], p[4], p[5]], [p[6], p[7], 1.0]])
    }

    fn is_invertible(&self) -> bool {
        let m = Matrix3::from_fn(|r, c| self.0[r][c]);
        m.determinant().abs() > 1e-9
            && Vector3::new(self.0[2][0], self.0[2][1], 1.0)
                .iter()
                .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EccConfig {
    pub max_iters: usize,
    /// Stop once an accepted step raises the correlation by less than this.
    pub epsilon: f64,
    /// Below this final correlation the alignment is reported as failed.
    pub min_correlation: f64,
}

impl Default for EccConfig {
    fn default() -> Self {
        EccConfig {
            max_iters: 100,
            epsilon: 1e-6,
            min_correlation: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub homography: Homography,
    /// Moving image resampled into the reference frame.
    pub warped: ImageTensor,
    /// Per pixel position: did the warp land inside the moving image.
    pub valid: Vec<bool>,
    pub correlation: f64,
    /// Correlation under the identity warp.
    pub initial_correlation: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Correlation after each accepted step, starting with the identity.
    pub history: Vec<f64>,
}

/// Bilinear sample at a continuous location; `None` outside `[0, w-1] x [0, h-1]`.
#[inline]
fn sample(src: &[f64], h: usize, w: usize, channels: usize, channel: usize, x: f64, y: f64) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |yy: usize, xx: usize| src[(yy * w + xx) * channels + channel];
    let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
    let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
    Some(top + fy * (bottom - top))
}

/// Resample every channel of `moving` into the reference frame.
pub fn warp_image(moving: &ImageTensor, homography: &Homography) -> (ImageTensor, Vec<bool>) {
    let shape = moving.shape();
    if homography.is_identity() {
        return (moving.clone(), vec![true; shape.height * shape.width]);
    }
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let mut pixels = vec![0.0; shape.len()];
    let mut valid = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (mx, my) = homography.apply(x as f64, y as f64);
            if sample(moving.pixels(), h, w, c, 0, mx, my).is_none() {
                continue;
            }
            valid[y * w + x] = true;
            for ch in 0..c {
                pixels[(y * w + x) * c + ch] = sample(moving.pixels(), h, w, c, ch, mx, my).unwrap_or(0.0);
            }
        }
    }
    (ImageTensor::new(shape, pixels).expect("same shape"), valid)
}

/// Central-difference gradients (one-sided at the border).
fn gradients(img: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let at = |yy: usize, xx: usize| img[yy * w + xx];
            gx[y * w + x] = match (x, w) {
                (_, 1) => 0.0,
                (0, _) => at(y, 1) - at(y, 0),
                (x, w) if x == w - 1 => at(y, x) - at(y, x - 1),
                _ => 0.5 * (at(y, x + 1) - at(y, x - 1)),
            };
            gy[y * w + x] = match (y, h) {
                (_, 1) => 0.0,
                (0, _) => at(1, x) - at(0, x),
                (y, h) if y == h - 1 => at(y, x) - at(y - 1, x),
                _ => 0.5 * (at(y + 1, x) - at(y - 1, x)),
            };
        }
    }
    (gx, gy)
}

struct Evaluation {
    correlation: f64,
    /// Pixel indices (into the reference frame) that are valid.
    index: Vec<usize>,
    template_zm: DVector<f64>,
    image_zm: DVector<f64>,
    jacobian: DMatrix<f64>,
}

struct Problem<'a> {
    template: &'a [f64],
    image: &'a [f64],
    gx: Vec<f64>,
    gy: Vec<f64>,
    h: usize,
    w: usize,
}

impl Problem<'_> {
    fn evaluate(&self, warp: &Homography) -> Option<Evaluation> {
        let (h, w) = (self.h, self.w);
        let mut index = Vec::with_capacity(h * w);
        let mut t = Vec::with_capacity(h * w);
        let mut iw = Vec::with_capacity(h * w);
        let mut rows: Vec<[f64; 8]> = Vec::with_capacity(h * w);
        let hm = &warp.0;
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let den = hm[2][0] * xf + hm[2][1] * yf + 1.0;
                let (mx, my) = warp.apply(xf, yf);
                let Some(v) = sample(self.image, h, w, 1, 0, mx, my) else {
                    continue;
                };
                let gxv = sample(&self.gx, h, w, 1, 0, mx, my).unwrap_or(0.0);
                let gyv = sample(&self.gy, h, w, 1, 0, mx, my).unwrap_or(0.0);
                let inv = 1.0 / den;
                rows.push([
                    gxv * xf * inv,
                    gxv * yf * inv,
                    gxv * inv,
                    gyv * xf * inv,
                    gyv * yf * inv,
                    gyv * inv,
                    -(gxv * mx + gyv * my) * xf * inv,
                    -(gxv * mx + gyv * my) * yf * inv,
                ]);
                index.push(y * w + x);
                t.push(self.template[y * w + x]);
                iw.push(v);
            }
        }
        let n = index.len();
        if (n as f64) < MIN_OVERLAP * (h * w) as f64 || n < 9 {
            return None;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mt, mi) = (mean(&t), mean(&iw));
        let template_zm = DVector::from_iterator(n, t.iter().map(|v| v - mt));
        let image_zm = DVector::from_iterator(n, iw.iter().map(|v| v - mi));
        let tn = template_zm.norm_squared();
        let inn = image_zm.norm_squared();
        if tn == 0.0 || inn == 0.0 {
            return None;
        }
        let correlation = template_zm.dot(&image_zm) / (tn * inn).sqrt();
        let mut jacobian = DMatrix::from_fn(n, 8, |r, c| rows[r][c]);
        for mut col in jacobian.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        Some(Evaluation {
            correlation,
            index,
            template_zm,
            image_zm,
            jacobian,
        })
    }

    /// Closed-form ECC update; `None` when the step is undefined.
    fn step(ev: &Evaluation) -> Option<DVector<f64>> {
        let g = &ev.jacobian;
        let hessian = g.transpose() * g;
        let hinv = hessian.try_inverse()?;
        let image_proj = g.transpose() * &ev.image_zm;
        let template_proj = g.transpose() * &ev.template_zm;
        let ihp = &hinv * &image_proj;
        let lambda_n = ev.image_zm.norm_squared() - image_proj.dot(&ihp);
        let lambda_d = ev.template_zm.dot(&ev.image_zm) - template_proj.dot(&ihp);
        if lambda_d.is_nan() || lambda_d <= 0.0 {
            return None;
        }
        let lambda = lambda_n / lambda_d;
        let error = &ev.template_zm * lambda - &ev.image_zm;
        let delta = hinv * (g.transpose() * error);
        delta.iter().all(|v| v.is_finite()).then_some(delta)
    }
}

const MAX_HALVINGS: usize = 6;

/// Align `moving` to `reference`. On failure the identity warp is returned
/// with `converged == false`.
pub fn ecc_align(reference: &ImageTensor, moving: &ImageTensor, config: &EccConfig) -> Result<Alignment> {
    reference.ensure_same_shape(moving)?;
    let Shape {
        height: h, width: w, ..
    } = reference.shape();
    let template = reference.luma();
    let image = moving.luma();
    let (gx, gy) = gradients(image.pixels(), h, w);
    let problem = Problem {
        template: template.pixels(),
        image: image.pixels(),
        gx,
        gy,
        h,
        w,
    };

    let identity = Homography::identity();
    let failed = |initial: f64, iterations: usize, history: Vec<f64>| {
        let (warped, valid) = warp_image(moving, &identity);
        Alignment {
            homography: identity,
            warped,
            valid,
            correlation: initial,
            initial_correlation: initial,
            converged: false,
            iterations,
            history,
        }
    };

    let Some(mut current) = problem.evaluate(&identity) else {
        // flat or degenerate images: identical ones are trivially aligned
        let same = reference.pixels() == moving.pixels();
        let mut out = failed(if same { 1.0 } else { 0.0 }, 0, Vec::new());
        out.converged = same;
        return Ok(out);
    };
    let initial = current.correlation;
    let mut warp = identity;
    let mut history = vec![initial];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let Some(delta) = Problem::step(&current) else {
            break;
        };
        // backtrack by halving until the correlation stops falling
        let base = warp.params();
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let mut p = base;
            for (pi, d) in p.iter_mut().zip(delta.iter()) {
                *pi += scale * d;
            }
            let candidate = Homography::from_params(&p);
            if candidate.is_invertible() {
                if let Some(next) = problem.evaluate(&candidate) {
                    if next.correlation >= current.correlation {
                        accepted = Some((candidate, next));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            // no ascent along the update: a local maximum
            converged = true;
            break;
        };
        let gain = next.correlation - current.correlation;
        warp = candidate;
        current = next;
        history.push(current.correlation);
        if gain < config.epsilon {
            converged = true;
            break;
        }
    }

    if !converged || current.correlation < config.min_correlation {
        return Ok(failed(initial, iterations, history));
    }
    let (warped, valid) = warp_image(moving, &warp);
    debug_assert!(current.index.iter().all(|&i| valid[i]));
    Ok(Alignment {
        homography: warp,
        warped,
        valid,
        correlation: current.correlation,
        initial_correlation: initial,
        converged: true,
        iterations,
        history,
    })
}
