//! Gaussian-windowed SSIM.
//!
//! The local statistics are computed only at window positions that lie
//! entirely inside the image ("valid" filtering), optionally skipping
//! windows that touch masked-out pixels. Color images are scored per channel
//! and averaged.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::ImageTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimConfig {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian; the 2-D window is its outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let n = self.window_size;
        let center = (n as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let d = i as f64 - center;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

/// Combine local statistics into one SSIM value.
#[inline]
pub fn ssim_from_stats(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
    let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
    num / den
}

/// Mean SSIM between two equally shaped images.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, config: &SsimConfig) -> Result<f64> {
    ssim_masked(a, b, None, config)
}

/// Mean SSIM, ignoring any window that overlaps a pixel whose `valid`
/// entry is false. `valid` is indexed per pixel position (`row * width + col`).
pub fn ssim_masked(a: &ImageTensor, b: &ImageTensor, valid: Option<&[bool]>, config: &SsimConfig) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let channels = a.channels();
    let total: f64 = (0..channels)
        .map(|c| channel_ssim(&a.channel(c), &b.channel(c), valid, config))
        .sum();
    Ok(total / channels as f64)
}

fn channel_ssim(a: &ImageTensor, b: &ImageTensor, valid: Option<&[bool]>, config: &SsimConfig) -> f64 {
    let (h, w) = (a.height(), a.width());
    let n = config.window_size;
    let (c1, c2) = (config.c1(), config.c2());
    if h < n || w < n {
        return global_ssim(a.pixels(), b.pixels(), valid, c1, c2);
    }

    let g = config.kernel();
    let pa = a.pixels();
    let pb = b.pixels();
    let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(pa, h, w, &g);
    let mu_b = filter_valid(pb, h, w, &g);
    let e_aa = filter_valid(&aa, h, w, &g);
    let e_bb = filter_valid(&bb, h, w, &g);
    let e_ab = filter_valid(&ab, h, w, &g);

    let (oh, ow) = (h - n + 1, w - n + 1);
    let usable = window_usable(valid, h, w, n);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..oh * ow {
        if !usable.as_ref().is_none_or(|u| u[i]) {
            continue;
        }
        let (ma, mb) = (mu_a[i], mu_b[i]);
        sum += ssim_from_stats(ma, mb, e_aa[i] - ma * ma, e_bb[i] - mb * mb, e_ab[i] - ma * mb, c1, c2);
        count += 1;
    }
    if count == 0 {
        return global_ssim(pa, pb, valid, c1, c2);
    }
    sum / count as f64
}

/// Separable correlation with `g`, keeping only fully-inside positions.
fn filter_valid(src: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = g.iter().zip(&line[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(k, gk)| gk * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// For each valid window position, whether every covered pixel is usable.
fn window_usable(valid: Option<&[bool]>, h: usize, w: usize, n: usize) -> Option<Vec<bool>> {
    let valid = valid?;
    // summed-area table of invalid pixels
    let mut sat = vec![0usize; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            let bad = usize::from(!valid[y * w + x]);
            sat[(y + 1) * (w + 1) + x + 1] =
                bad + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut out = vec![false; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let bad = sat[(y + n) * (w + 1) + x + n] + sat[y * (w + 1) + x]
                - sat[y * (w + 1) + x + n]
                - sat[(y + n) * (w + 1) + x];
            out[y * ow + x] = bad == 0;
        }
    }
    Some(out)
}

/// Single-window SSIM over all usable pixels with uniform weights.
fn global_ssim(a: &[f64], b: &[f64], valid: Option<&[bool]>, c1: f64, c2: f64) -> f64 {
    let keep = |i: usize| valid.is_none_or(|v| v[i]);
    let idx: Vec<usize> = (0..a.len()).filter(|&i| keep(i)).collect();
    if idx.is_empty() {
        return 0.0;
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (da, db) = (a[i] - ma, b[i] - mb);
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    ssim_from_stats(ma, mb, va / n, vb / n, cov / n, c1, c2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, rng: &mut ChaCha8Rng) -> ImageTensor {
        ImageTensor::new(shape, (0..shape.len()).map(|_| rng.random_range(0.0..=255.0)).collect()).unwrap()
    }

    #[test]
    fn window_sums_to_one() {
        let g = SsimConfig::default().kernel();
        let total: f64 = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identical_images_score_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SsimConfig::default();
        for shape in [Shape::new(16, 16, 1), Shape::new(32, 20, 3), Shape::new(5, 7, 1)] {
            let a = random(shape, &mut rng);
            assert_eq!(ssim(&a, &a, &cfg).unwrap(), 1.0);
        }
    }

    #[test]
    fn constant_black_vs_white() {
        let cfg = SsimConfig::default();
        let a = ImageTensor::filled(Shape::new(16, 16, 1), 0.0);
        let b = ImageTensor::filled(Shape::new(16, 16, 1), 255.0);
        let expected = cfg.c1() / (255.0 * 255.0 + cfg.c1());
        assert!((ssim(&a, &b, &cfg).unwrap() - expected).abs() < 1e-10);
        assert!((expected - 1.0e-4).abs() < 1e-6);
    }

    #[test]
    fn symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SsimConfig::default();
        for _ in 0..10 {
            let a = random(Shape::new(16, 16, 3), &mut rng);
            let b = random(Shape::new(16, 16, 3), &mut rng);
            let ab = ssim(&a, &b, &cfg).unwrap();
            let ba = ssim(&b, &a, &cfg).unwrap();
            assert!((ab - ba).abs() < 1e-15);
            assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn masked_windows_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SsimConfig::default();
        let a = random(Shape::new(16, 16, 1), &mut rng);
        let mut b = a.clone();
        // corrupt the first row, then mask it out
        for x in 0..16 {
            b.set(0, x, 0, 255.0 - a.get(0, x, 0));
        }
        assert!(ssim(&a, &b, &cfg).unwrap() < 1.0);
        let mut valid = vec![true; 256];
        valid[..16].iter_mut().for_each(|v| *v = false);
        assert_eq!(ssim_masked(&a, &b, Some(&valid), &cfg).unwrap(), 1.0);
    }
}
