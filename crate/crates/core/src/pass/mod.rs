//! Perceptual adversarial similarity score (PASS).
//!
//! The perturbed image is first aligned to the original with an ECC
//! homography, so plausible small translations and rotations do not count as
//! differences. SSIM is then taken between the original and the aligned
//! image, skipping windows that touch pixels the warp could not fill.

pub mod ecc;
pub mod ssim;

use serde::{Deserialize, Serialize};

pub use ecc::{ecc_align, Alignment, EccConfig, Homography};
pub use ssim::{ssim, ssim_masked, SsimConfig};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub const DEFAULT_TAU: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassConfig {
    pub ecc: EccConfig,
    pub ssim: SsimConfig,
    pub tau: f64,
}

impl Default for PassConfig {
    fn default() -> Self {
        PassConfig {
            ecc: EccConfig::default(),
            ssim: SsimConfig::default(),
            tau: DEFAULT_TAU,
        }
    }
}

impl PassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.ssim.k1 <= 0.0 || self.ssim.k2 <= 0.0 || self.ssim.window_size == 0 || self.ssim.sigma <= 0.0 {
            return Err(Error::Config(
                "ssim needs k1, k2, sigma > 0 and a nonempty window".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassResult {
    pub score: f64,
    pub homography: Homography,
    pub ecc_converged: bool,
}

pub fn pass_score(original: &ImageTensor, perturbed: &ImageTensor, config: &PassConfig) -> Result<PassResult> {
    original.ensure_same_shape(perturbed)?;
    if original.pixels() == perturbed.pixels() {
        return Ok(PassResult {
            score: 1.0,
            homography: Homography::identity(),
            ecc_converged: true,
        });
    }
    let alignment = ecc_align(original, perturbed, &config.ecc)?;
    let score = ssim_masked(original, &alignment.warped, Some(&alignment.valid), &config.ssim)?;
    Ok(PassResult {
        score,
        homography: alignment.homography,
        ecc_converged: alignment.converged,
    })
}

/// `pass_score >= tau`.
pub fn is_adversarial_pair(
    original: &ImageTensor,
    perturbed: &ImageTensor,
    tau: f64,
    config: &PassConfig,
) -> Result<bool> {
    if tau <= 0.0 {
        return Ok(true);
    }
    Ok(pass_score(original, perturbed, config)?.score >= tau)
}
