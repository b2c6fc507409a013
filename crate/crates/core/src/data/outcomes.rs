//! JSON-lines storage for attack outcomes.
//!
//! One record per line. Perturbed images travel as base64 of their rounded
//! `u8` pixels next to the shape, so a file fully reproduces every reported
//! number without rerunning the attack.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::AttackOutcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub model_id: String,
    pub config_hash: String,
    #[serde(flatten)]
    pub outcome: AttackOutcome,
}

pub fn parse_outcome_line(line: &str) -> Result<OutcomeRecord> {
    serde_json::from_str(line).map_err(|e| Error::parse(1, e.to_string()))
}

/// Parse a whole file; blank lines are skipped.
pub fn parse_outcomes(text: &str) -> Result<Vec<OutcomeRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::parse(n + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Write records sorted by image id, then attribute.
pub fn write_outcomes(w: &mut impl Write, records: &[OutcomeRecord]) -> Result<()> {
    let mut order: Vec<&OutcomeRecord> = records.iter().collect();
    order.sort_by(|a, b| (&a.outcome.image_id, a.outcome.attribute).cmp(&(&b.outcome.image_id, b.outcome.attribute)));
    for rec in order {
        serde_json::to_writer(&mut *w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_outcomes(path: &Path, records: &[OutcomeRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_outcomes(&mut w, records)?;
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn load_outcomes(path: &Path) -> Result<Vec<OutcomeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(n + 1, e.to_string()))?);
    }
    Ok(out)
}

pub(crate) mod image_b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::image::{ImageTensor, Shape};

    #[derive(Serialize, Deserialize)]
    struct Encoded {
        shape: Shape,
        pixels: String,
    }

    pub fn serialize<S: Serializer>(image: &ImageTensor, s: S) -> Result<S::Ok, S::Error> {
        Encoded {
            shape: image.shape(),
            pixels: STANDARD.encode(image.to_bytes()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ImageTensor, D::Error> {
        let e = Encoded::deserialize(d)?;
        let bytes = STANDARD.decode(e.pixels.as_bytes()).map_err(D::Error::custom)?;
        if e.shape.len() != bytes.len() {
            return Err(D::Error::custom(format!(
                "shape {} needs {} pixels, found {}",
                e.shape,
                e.shape.len(),
                bytes.len()
            )));
        }
        ImageTensor::from_bytes(e.shape, &bytes).map_err(D::Error::custom)
    }
}
