//! Row-major `H x W x C` pixel buffers in the nominal `[0, 255]` range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Luma weights used whenever a color image must be reduced to one channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(shape: Shape, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(Error::Shape {
                expected: format!("{} ({} values)", shape, shape.len()),
                actual: format!("{} values", pixels.len()),
            });
        }
        if shape.channels != 1 && shape.channels != 3 {
            return Err(Error::Shape {
                expected: "1 or 3 channels".into(),
                actual: format!("{} channels", shape.channels),
            });
        }
        Ok(ImageTensor { shape, pixels })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        ImageTensor {
            shape,
            pixels: vec![value; shape.len()],
        }
    }

    pub fn from_bytes(shape: Shape, bytes: &[u8]) -> Result<Self> {
        Self::new(shape, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.shape.width + col) * self.shape.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.pixels[i] = value;
    }

    /// True when every pixel is an integer in `[0, 255]`.
    pub fn is_quantized(&self) -> bool {
        self.pixels
            .iter()
            .all(|&p| (0.0..=255.0).contains(&p) && p.fract() == 0.0)
    }

    /// Round to the nearest integer and clamp into `[0, 255]`.
    pub fn quantized(&self) -> ImageTensor {
        ImageTensor {
            shape: self.shape,
            pixels: self.pixels.iter().map(|&p| quantize(p)).collect(),
        }
    }

    pub fn clamped(&self) -> ImageTensor {
        ImageTensor {
            shape: self.shape,
            pixels: self.pixels.iter().map(|&p| p.clamp(0.0, 255.0)).collect(),
        }
    }

    /// `self + scale * direction`, without clamping.
    pub fn offset(&self, direction: &[f64], scale: f64) -> ImageTensor {
        debug_assert_eq!(direction.len(), self.pixels.len());
        ImageTensor {
            shape: self.shape,
            pixels: self
                .pixels
                .iter()
                .zip(direction)
                .map(|(&p, &d)| p + scale * d)
                .collect(),
        }
    }

    /// Elementwise `self - other`.
    pub fn difference(&self, other: &ImageTensor) -> Result<Vec<f64>> {
        self.ensure_same_shape(other)?;
        Ok(self.pixels.iter().zip(&other.pixels).map(|(a, b)| a - b).collect())
    }

    /// Quantized pixels as bytes. Values are rounded and clamped first.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p) as u8).collect()
    }

    /// Single channel luma image. Grayscale input is returned as-is.
    pub fn luma(&self) -> ImageTensor {
        if self.shape.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
            .collect();
        ImageTensor {
            shape: Shape::new(self.shape.height, self.shape.width, 1),
            pixels,
        }
    }

    /// Extract one channel as a grayscale image.
    pub fn channel(&self, channel: usize) -> ImageTensor {
        let c = self.shape.channels;
        ImageTensor {
            shape: Shape::new(self.shape.height, self.shape.width, 1),
            pixels: self.pixels.iter().skip(channel).step_by(c).copied().collect(),
        }
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                expected: self.shape.to_string(),
                actual: other.shape.to_string(),
            });
        }
        Ok(())
    }
}

#[inline]
pub fn quantize(p: f64) -> f64 {
    p.round().clamp(0.0, 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(ImageTensor::new(Shape::new(2, 2, 1), vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(Shape::new(2, 2, 2), vec![0.0; 8]).is_err());
    }

    #[test]
    fn quantization_rounds_and_clamps() {
        let img = ImageTensor::new(Shape::new(1, 4, 1), vec![-3.0, 0.49, 127.5, 300.0]).unwrap();
        assert!(!img.is_quantized());
        let q = img.quantized();
        assert_eq!(q.pixels(), &[0.0, 0.0, 128.0, 255.0]);
        assert!(q.is_quantized());
    }

    #[test]
    fn luma_of_gray_rgb_is_gray() {
        let img = ImageTensor::filled(Shape::new(2, 2, 3), 100.0);
        let l = img.luma();
        assert_eq!(l.channels(), 1);
        for &p in l.pixels() {
            assert!((p - 100.0).abs() < 1e-12);
        }
    }
}
