//! Attribute classifiers and the tooling to probe their adversarial robustness:
//! FGS and FFA perturbation search, PASS similarity scoring, and the
//! flippability, portability and correlation analyses built on top.

pub mod analysis;
pub mod attack;
pub mod data;
pub mod error;
pub mod image;
pub mod model;
pub mod pass;

pub use error::{Error, Result};
pub use image::{ImageTensor, Shape};
