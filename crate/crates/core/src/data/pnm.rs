//! 8-bit PGM/PPM (P2, P3, P5, P6) decoding and binary encoding.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    GrayAscii,
    RgbAscii,
    GrayBinary,
    RgbBinary,
}

impl Kind {
    fn channels(self) -> usize {
        match self {
            Kind::GrayAscii | Kind::GrayBinary => 1,
            Kind::RgbAscii | Kind::RgbBinary => 3,
        }
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedImage(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage(format!("{what} out of range")))
    }
}

pub fn decode(data: &[u8]) -> Result<ImageTensor> {
    let kind = match data.get(..2) {
        Some(b"P2") => Kind::GrayAscii,
        Some(b"P3") => Kind::RgbAscii,
        Some(b"P5") => Kind::GrayBinary,
        Some(b"P6") => Kind::RgbBinary,
        Some(m) => {
            return Err(Error::UnsupportedImage(format!(
                "magic `{}`",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(Error::MalformedImage("file too short".into())),
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedImage(format!(
            "maxval {maxval}, only 255 is supported"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage(format!("empty image {width}x{height}")));
    }
    let shape = Shape::new(height, width, kind.channels());
    let count = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(kind.channels()))
        .ok_or_else(|| Error::MalformedImage("dimensions overflow".into()))?;

    match kind {
        Kind::GrayBinary | Kind::RgbBinary => {
            // exactly one whitespace byte separates the header from the raster
            match data.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err(Error::MalformedImage("missing whitespace after maxval".into())),
            }
            let raster = &data[cur.pos..];
            if raster.len() < count {
                return Err(Error::MalformedImage(format!(
                    "raster has {} bytes, expected {count}",
                    raster.len()
                )));
            }
            ImageTensor::from_bytes(shape, &raster[..count])
        }
        Kind::GrayAscii | Kind::RgbAscii => {
            if data.len() - cur.pos < count {
                return Err(Error::MalformedImage("raster too short".into()));
            }
            let mut pixels = Vec::with_capacity(count);
            for _ in 0..count {
                let v = cur.number("sample")?;
                if v > 255 {
                    return Err(Error::MalformedImage(format!("sample {v} exceeds maxval")));
                }
                pixels.push(v as f64);
            }
            ImageTensor::new(shape, pixels)
        }
    }
}

/// Binary PGM (1 channel) or PPM (3 channels). Pixels are rounded and clamped.
pub fn encode(image: &ImageTensor) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn read_image(path: &Path) -> Result<ImageTensor> {
    let data = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&data)
}

pub fn write_image(path: &Path, image: &ImageTensor) -> Result<()> {
    std::fs::write(path, encode(image)).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_p5_fixture() {
        let data = b"P5\n2 2\n255\n\x00\x7f\x80\xff";
        let img = decode(data).unwrap();
        assert_eq!(img.shape(), Shape::new(2, 2, 1));
        assert_eq!(img.pixels(), &[0.0, 127.0, 128.0, 255.0]);
        assert_eq!(encode(&img), data.to_vec());
    }

    #[test]
    fn decodes_ascii_with_comments() {
        let img = decode(b"P3 # rgb\n1 2 # w h\n255\n1 2 3\n# mid\n4 5 6\n").unwrap();
        assert_eq!(img.shape(), Shape::new(2, 1, 3));
        assert_eq!(img.pixels(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn rejects_unsupported() {
        assert!(matches!(
            decode(b"P5\n1 1\n65535\n\x00\x00"),
            Err(Error::UnsupportedImage(_))
        ));
        assert!(matches!(decode(b"P4\n1 1\n\x00"), Err(Error::UnsupportedImage(_))));
        assert!(matches!(decode(b"P6\n2 2\n255\n\x00"), Err(Error::MalformedImage(_))));
        assert!(decode(b"P2\n1 1\n255\n256\n").is_err());
        assert!(decode(b"P5\n99999999999999999999 1\n255\n").is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(h in 1usize..6, w in 1usize..6, rgb: bool, seed: Vec<u8>) {
            let c = if rgb { 3 } else { 1 };
            let n = h * w * c;
            let bytes: Vec<u8> = (0..n).map(|i| seed.get(i).copied().unwrap_or((i * 37) as u8)).collect();
            let img = ImageTensor::from_bytes(Shape::new(h, w, c), &bytes).unwrap();
            let encoded = encode(&img);
            let back = decode(&encoded).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode(&back), encoded);
        }
    }
}
