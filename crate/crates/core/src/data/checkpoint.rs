//! AFM1 checkpoints: a one-line JSON manifest followed by little-endian `f32` weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Shape;
use crate::model::{ClassifierModel, HeadKind, LayerSpec};

pub const FORMAT_VERSION: &str = "AFM1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub input_shape: Shape,
    pub layer_spec: Vec<LayerSpec>,
    pub head_kind: HeadKind,
    pub attribute_names: Vec<String>,
    #[serde(default)]
    pub channel_mean: Option<Vec<f64>>,
    pub epoch_counter: u32,
    #[serde(default)]
    pub iteration: u64,
    pub seed: u64,
    pub weight_count: usize,
}

pub fn manifest_of(model: &ClassifierModel) -> Manifest {
    Manifest {
        format: FORMAT_VERSION.to_string(),
        input_shape: model.input_shape(),
        layer_spec: model.layer_specs().to_vec(),
        head_kind: model.head(),
        attribute_names: model.attribute_names().to_vec(),
        channel_mean: model.channel_mean().map(<[f64]>::to_vec),
        epoch_counter: model.epoch,
        iteration: model.iteration,
        seed: model.seed,
        weight_count: model.weights().len(),
    }
}

pub fn encode(model: &ClassifierModel) -> Vec<u8> {
    let mut out = serde_json::to_vec(&manifest_of(model)).expect("manifest serializes");
    out.push(b'\n');
    out.reserve(model.weights().len() * 4);
    for &w in model.weights() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    out
}

pub fn decode(data: &[u8]) -> Result<ClassifierModel> {
    let newline = data
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing manifest line".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&data[..newline])
        .map_err(|e| Error::Checkpoint(format!("manifest is not JSON: {e}")))?;
    match header.get("format").and_then(|v| v.as_str()) {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::CheckpointVersion(other.to_string())),
        None => return Err(Error::CheckpointVersion(String::new())),
    }
    let manifest: Manifest = serde_json::from_value(header).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;

    let blob = &data[newline + 1..];
    let expected = manifest.weight_count;
    if blob.len() < expected.saturating_mul(4) {
        return Err(Error::CheckpointTruncated {
            expected,
            found: blob.len(),
        });
    }
    if blob.len() != expected * 4 {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after {expected} weights",
            blob.len() - expected * 4
        )));
    }
    let weights: Vec<f64> = blob
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let mut model = ClassifierModel::from_parts(
        manifest.input_shape,
        manifest.layer_spec,
        manifest.head_kind,
        manifest.attribute_names,
        manifest.channel_mean,
        weights,
    )
    .map_err(|e| match e {
        Error::Dimension {
            expected: layer_count, ..
        } => Error::Checkpoint(format!(
            "manifest declares {expected} weights but the layer spec needs {layer_count}"
        )),
        other => other,
    })?;
    model.epoch = manifest.epoch_counter;
    model.iteration = manifest.iteration;
    model.seed = manifest.seed;
    Ok(model)
}

pub fn save_checkpoint(model: &ClassifierModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierModel> {
    let data = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;
    use crate::model::{Activation, ModelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> ClassifierModel {
        let spec = ModelSpec {
            input_shape: Shape::new(6, 6, 3),
            hidden: vec![
                LayerSpec::conv(3, 3, Activation::Relu),
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::dense(4, Activation::Tanh),
            ],
            head: HeadKind::SoftmaxLogits,
            attribute_names: vec!["a".into(), "b".into()],
            channel_mean: Some(vec![120.0, 110.0, 100.0]),
        };
        let mut m = ClassifierModel::new(&spec, 11).unwrap();
        m.epoch = 3;
        m
    }

    #[test]
    fn round_trip_reproduces_scores() {
        let m = model();
        let bytes = encode(&m);
        let loaded = decode(&bytes).unwrap();
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.seed, 11);
        assert_eq!(encode(&loaded), bytes);

        let mut rounded = m.clone();
        rounded.round_to_f32();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let px = (0..108).map(|_| rng.random_range(0.0..255.0)).collect();
            let x = ImageTensor::new(Shape::new(6, 6, 3), px).unwrap();
            let a = loaded.forward(&x).unwrap().scores;
            let b = rounded.forward(&x).unwrap().scores;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupted_magic_is_version_error() {
        let bytes = encode(&model());
        let text = String::from_utf8_lossy(&bytes).replacen("AFM1", "AFM9", 1);
        let mut corrupted = text.as_bytes()[..text.find('\n').unwrap() + 1].to_vec();
        corrupted.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(matches!(decode(&corrupted), Err(Error::CheckpointVersion(v)) if v == "AFM9"));
    }

    #[test]
    fn missing_weight_is_truncation() {
        let bytes = encode(&model());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 4]),
            Err(Error::CheckpointTruncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 4]);
        assert!(matches!(decode(&extra), Err(Error::Checkpoint(_))));
    }
}
