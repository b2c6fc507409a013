//! Procedural attribute images with controllable label co-occurrence.
//!
//! Labels come from thresholding a correlated Gaussian at zero. For a latent
//! correlation `r` the resulting +/-1 labels have Pearson correlation
//! `(2/pi) asin(r)`, so the requested label correlation `c` is mapped to the
//! latent value `sin(pi c / 2)` before factorization.
//!
//! Each attribute is rendered by one generator. Local generators (bar, disk,
//! checker) own a cell of a 3x3 grid; global generators (brightness, hue)
//! act on the whole image. The bottom-right cell is never drawn into and
//! serves as the reference patch for the global detectors.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AttributeDataset, DatasetItem, Split};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape};

const GRID: usize = 3;
const BASE_LEVEL: f64 = 128.0;
const BRIGHTNESS_OFFSET: f64 = 30.0;
const HUE_OFFSET: f64 = 20.0;
const BAR_CONTRAST: f64 = 50.0;
const DISK_CONTRAST: f64 = 50.0;
const CHECKER_CONTRAST: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Brightness,
    VerticalBar,
    Disk,
    Checker,
    HueShift,
}

impl GeneratorKind {
    fn is_local(self) -> bool {
        matches!(
            self,
            GeneratorKind::VerticalBar | GeneratorKind::Disk | GeneratorKind::Checker
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeGenerator {
    pub name: String,
    pub kind: GeneratorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub attributes: Vec<AttributeGenerator>,
    /// Requested pairwise label correlations; empty means independent.
    pub correlation: Vec<Vec<f64>>,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Amplitude of per-pixel uniform noise.
    pub noise_amplitude: f64,
    /// Amplitude of the smooth random background.
    pub texture_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let attr = |name: &str, kind| AttributeGenerator {
            name: name.to_string(),
            kind,
        };
        SynthConfig {
            height: 32,
            width: 32,
            channels: 3,
            attributes: vec![
                attr("Bright", GeneratorKind::Brightness),
                attr("Bar", GeneratorKind::VerticalBar),
                attr("Disk", GeneratorKind::Disk),
                attr("Checker", GeneratorKind::Checker),
                attr("Warm", GeneratorKind::HueShift),
            ],
            correlation: Vec::new(),
            train_count: 1000,
            val_count: 200,
            test_count: 200,
            noise_amplitude: 4.0,
            texture_amplitude: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDatasets {
    pub train: AttributeDataset,
    pub val: AttributeDataset,
    pub test: AttributeDataset,
}

impl SynthDatasets {
    pub fn split(&self, split: Split) -> &AttributeDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Where local generators draw: one grid cell per local attribute.
#[derive(Debug, Clone, Copy)]
struct Cell {
    top: usize,
    left: usize,
    size: usize,
}

impl SynthConfig {
    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, self.channels)
    }

    fn cell(&self, slot: usize) -> Cell {
        let size = self.height.min(self.width) / GRID;
        Cell {
            top: (slot / GRID) * size,
            left: (slot % GRID) * size,
            size,
        }
    }

    fn reference_cell(&self) -> Cell {
        self.cell(GRID * GRID - 1)
    }

    /// Grid slot of each attribute (`None` for global generators).
    fn slots(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.attributes
            .iter()
            .map(|a| {
                a.kind.is_local().then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.attributes.len();
        if m == 0 {
            return Err(Error::Config("at least one attribute is required".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.height.min(self.width) < 3 * GRID {
            return Err(Error::Config("image must be at least 9x9".into()));
        }
        if self.train_count == 0 || self.val_count == 0 || self.test_count == 0 {
            return Err(Error::Config("split counts must be positive".into()));
        }
        if !(self.noise_amplitude >= 0.0 && self.texture_amplitude >= 0.0) {
            return Err(Error::Config("noise and texture amplitudes must be >= 0".into()));
        }
        let locals = self.attributes.iter().filter(|a| a.kind.is_local()).count();
        if locals > GRID * GRID - 1 {
            return Err(Error::Config(format!(
                "at most {} local attributes fit the grid",
                GRID * GRID - 1
            )));
        }
        let globals = |k| self.attributes.iter().filter(|a| a.kind == k).count();
        if globals(GeneratorKind::Brightness) > 1 || globals(GeneratorKind::HueShift) > 1 {
            return Err(Error::Config(
                "brightness and hue generators may each appear once".into(),
            ));
        }
        if self.channels == 1 && globals(GeneratorKind::HueShift) > 0 {
            return Err(Error::Config("hue_shift needs 3 channels".into()));
        }
        let mut names: Vec<&str> = self.attributes.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("attribute names must be unique".into()));
        }
        if names.iter().any(|n| n.is_empty() || n.contains(char::is_whitespace)) {
            return Err(Error::Config(
                "attribute names must be non-empty without whitespace".into(),
            ));
        }
        self.latent_factor().map(|_| ())
    }

    fn correlation_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let m = self.attributes.len();
        if self.correlation.is_empty() {
            return Ok((0..m)
                .map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect())
                .collect());
        }
        if self.correlation.len() != m || self.correlation.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!("correlation matrix must be {m}x{m}")));
        }
        for i in 0..m {
            if self.correlation[i][i] != 1.0 {
                return Err(Error::Config(format!("correlation diagonal entry {i} must be 1")));
            }
            for j in 0..m {
                let c = self.correlation[i][j];
                if !(-1.0..=1.0).contains(&c) {
                    return Err(Error::Config(format!("correlation ({i},{j}) = {c} outside [-1, 1]")));
                }
                if c != self.correlation[j][i] {
                    return Err(Error::Config(format!("correlation matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(self.correlation.clone())
    }

    /// Lower-triangular factor of the latent Gaussian correlation.
    fn latent_factor(&self) -> Result<Vec<Vec<f64>>> {
        let latent: Vec<Vec<f64>> = self
            .correlation_matrix()?
            .iter()
            .map(|row| row.iter().map(|&c| (PI * c / 2.0).sin()).collect())
            .collect();
        semidefinite_cholesky(&latent)
            .ok_or_else(|| Error::Config("correlation matrix is not realizable by thresholded Gaussians".into()))
    }

    /// Recover labels from a rendered image (exact when noise is zero).
    pub fn detect_labels(&self, image: &ImageTensor) -> Vec<i8> {
        let slots = self.slots();
        self.attributes
            .iter()
            .zip(slots)
            .map(|(a, slot)| match (a.kind, slot) {
                (GeneratorKind::Brightness, _) => {
                    let r = self.reference_cell();
                    let mean = cell_mean(image, r, None);
                    sign(mean - BASE_LEVEL)
                }
                (GeneratorKind::HueShift, _) => {
                    let r = self.reference_cell();
                    sign(cell_mean(image, r, Some(0)) - cell_mean(image, r, Some(2)))
                }
                (GeneratorKind::VerticalBar, Some(s)) => {
                    let c = self.cell(s);
                    let (x, _) = bar_columns(c);
                    let mut diff = 0.0;
                    let mut n = 0.0;
                    for y in c.top + 1..c.top + c.size - 1 {
                        diff += mean_px(image, y, c.left + 1) - mean_px(image, y, x);
                        n += 1.0;
                    }
                    sign(diff / n - BAR_CONTRAST / 2.0)
                }
                (GeneratorKind::Disk, Some(s)) => {
                    let c = self.cell(s);
                    let (cy, cx) = (c.top + c.size / 2, c.left + c.size / 2);
                    let edge = mean_px(image, c.top, c.left) + mean_px(image, c.top, c.left + c.size - 1);
                    sign(edge / 2.0 - mean_px(image, cy, cx) - DISK_CONTRAST / 2.0)
                }
                (GeneratorKind::Checker, Some(s)) => {
                    let c = self.cell(s);
                    let mut total = 0.0;
                    let mut n = 0.0;
                    for y in c.top + 1..c.top + c.size - 1 {
                        for x in c.left + 1..c.left + c.size - 2 {
                            total += (mean_px(image, y, x) - mean_px(image, y, x + 1)).abs();
                            n += 1.0;
                        }
                    }
                    sign(total / n - CHECKER_CONTRAST)
                }
                _ => unreachable!("local generators always have a slot"),
            })
            .collect()
    }

    fn render(&self, labels: &[i8], rng: &mut ChaCha8Rng) -> ImageTensor {
        let shape = self.shape();
        let (h, w, ch) = (self.height, self.width, self.channels);

        // smooth background: a few random low-frequency waves
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let fy = rng.random_range(0.5..1.5) / h as f64;
                let fx = rng.random_range(0.5..1.5) / w as f64;
                (fy, fx, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let mut pixels = vec![0.0; shape.len()];
        for y in 0..h {
            for x in 0..w {
                let t: f64 = waves
                    .iter()
                    .map(|&(fy, fx, ph)| (2.0 * PI * (fy * y as f64 + fx * x as f64) + ph).cos())
                    .sum::<f64>()
                    / waves.len() as f64;
                for c in 0..ch {
                    pixels[(y * w + x) * ch + c] = BASE_LEVEL + self.texture_amplitude * t;
                }
            }
        }
        let mut image = ImageTensor::new(shape, pixels).expect("shape matches");

        let slots = self.slots();
        for ((attr, &label), slot) in self.attributes.iter().zip(labels).zip(slots) {
            let on = label > 0;
            match (attr.kind, slot) {
                (GeneratorKind::Brightness, _) => {
                    let delta = if on { BRIGHTNESS_OFFSET } else { -BRIGHTNESS_OFFSET };
                    image.pixels_mut().iter_mut().for_each(|p| *p += delta);
                }
                (GeneratorKind::HueShift, _) => {
                    let delta = if on { HUE_OFFSET } else { -HUE_OFFSET };
                    for px in image.pixels_mut().chunks_exact_mut(3) {
                        px[0] += delta;
                        px[2] -= delta;
                    }
                }
                (GeneratorKind::VerticalBar, Some(s)) if on => {
                    let c = self.cell(s);
                    let (x0, x1) = bar_columns(c);
                    for y in c.top + 1..c.top + c.size - 1 {
                        for x in x0..=x1 {
                            shade(&mut image, y, x, -BAR_CONTRAST);
                        }
                    }
                }
                (GeneratorKind::Disk, Some(s)) if on => {
                    let c = self.cell(s);
                    let (cy, cx) = ((c.top + c.size / 2) as f64, (c.left + c.size / 2) as f64);
                    let r = c.size as f64 / 3.0;
                    for y in c.top..c.top + c.size {
                        for x in c.left..c.left + c.size {
                            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                            if d <= r {
                                shade(&mut image, y, x, -DISK_CONTRAST);
                            }
                        }
                    }
                }
                (GeneratorKind::Checker, Some(s)) if on => {
                    let c = self.cell(s);
                    for y in c.top + 1..c.top + c.size - 1 {
                        for x in c.left + 1..c.left + c.size - 1 {
                            let delta = if (x + y) % 2 == 0 {
                                CHECKER_CONTRAST
                            } else {
                                -CHECKER_CONTRAST
                            };
                            shade(&mut image, y, x, delta);
                        }
                    }
                }
                _ => {}
            }
        }

        if self.noise_amplitude > 0.0 {
            let a = self.noise_amplitude;
            for p in image.pixels_mut() {
                *p += rng.random_range(-a..=a);
            }
        }
        image.quantized()
    }
}

/// Columns `x0..=x1` of a cell's 3-pixel wide bar, centred.
fn bar_columns(c: Cell) -> (usize, usize) {
    let mid = c.left + c.size / 2;
    (mid - 1, mid + 1)
}

fn shade(image: &mut ImageTensor, y: usize, x: usize, delta: f64) {
    for c in 0..image.channels() {
        let v = image.get(y, x, c);
        image.set(y, x, c, v + delta);
    }
}

fn mean_px(image: &ImageTensor, y: usize, x: usize) -> f64 {
    let c = image.channels();
    (0..c).map(|ch| image.get(y, x, ch)).sum::<f64>() / c as f64
}

fn cell_mean(image: &ImageTensor, cell: Cell, channel: Option<usize>) -> f64 {
    let mut total = 0.0;
    for y in cell.top..cell.top + cell.size {
        for x in cell.left..cell.left + cell.size {
            total += match channel {
                Some(c) => image.get(y, x, c),
                None => mean_px(image, y, x),
            };
        }
    }
    total / (cell.size * cell.size) as f64
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Cholesky factor of a positive semidefinite matrix; zero pivots produce
/// zero columns. Returns `None` when the matrix is not PSD.
fn semidefinite_cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    const TOL: f64 = 1e-10;
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -TOL {
            return None;
        }
        let pivot = d.max(0.0).sqrt();
        l[j][j] = pivot;
        for i in j + 1..n {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if pivot > TOL {
                l[i][j] = s / pivot;
            } else if s.abs() > 1e-8 {
                return None;
            }
        }
    }
    Some(l)
}

/// Labels drawn from the thresholded latent Gaussian.
fn sample_labels(factor: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<i8> {
    let n: Vec<f64> = (0..factor.len()).map(|_| rng.sample(StandardNormal)).collect();
    factor
        .iter()
        .map(|row| sign(row.iter().zip(&n).map(|(l, z)| l * z).sum()))
        .collect()
}

pub fn synth_dataset(config: &SynthConfig) -> Result<SynthDatasets> {
    config.validate()?;
    let factor = config.latent_factor()?;
    let names = config.attribute_names();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut build = |split: Split, count: usize| -> Result<AttributeDataset> {
        let mut ds = AttributeDataset::new(names.clone(), split);
        for i in 0..count {
            let labels = sample_labels(&factor, &mut rng);
            let image = config.render(&labels, &mut rng);
            ds.push(DatasetItem {
                id: format!(
                    "{}_{i:05}.{}",
                    split.as_str(),
                    if config.channels == 1 { "pgm" } else { "ppm" }
                ),
                image,
                labels,
            })?;
        }
        Ok(ds)
    };
    Ok(SynthDatasets {
        train: build(Split::Train, config.train_count)?,
        val: build(Split::Val, config.val_count)?,
        test: build(Split::Test, config.test_count)?,
    })
}

/// Pearson correlation between two +/-1 label columns.
pub fn label_correlation(a: &[i8], b: &[i8]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let mb = b.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (f64::from(x) - ma, f64::from(y) - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
