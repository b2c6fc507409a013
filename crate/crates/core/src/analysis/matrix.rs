//! Cross-attribute flip matrices.
//!
//! Entry `(i, j)` is the fraction of adversarial images made for attribute
//! `i` whose perturbed version also changes attribute `j`. A change is always
//! measured against the classification of the unperturbed image by the same
//! classifier, never against ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::AttackOutcome;
use crate::data::AttributeDataset;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::ClassifierModel;

#[derive(Debug, Clone, Copy)]
pub struct FlipSource<'a> {
    /// Matrix row, i.e. the attribute the image was attacked for.
    pub row: usize,
    pub original: &'a ImageTensor,
    pub perturbed: &'a ImageTensor,
}

impl<'a> FlipSource<'a> {
    /// Sources for every outcome adversarial at `tau`, paired with its
    /// original image from `dataset`.
    pub fn from_outcomes(
        outcomes: &'a [AttackOutcome],
        dataset: &'a AttributeDataset,
        tau: f64,
        row: impl Fn(&AttackOutcome) -> usize,
    ) -> Result<Vec<FlipSource<'a>>> {
        outcomes
            .iter()
            .filter(|o| o.adversarial_at(tau))
            .map(|o| {
                let item = dataset
                    .find(&o.image_id)
                    .ok_or_else(|| Error::Config(format!("image `{}` not in dataset", o.image_id)))?;
                Ok(FlipSource {
                    row: row(o),
                    original: &item.image,
                    perturbed: &o.perturbed,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipMatrix {
    pub names: Vec<String>,
    /// Row-major `M x M`; masked rows are all zero.
    pub values: Vec<Vec<f64>>,
    /// Adversarial images per row.
    pub counts: Vec<usize>,
    /// Raw flip counts behind `values`.
    pub hits: Vec<Vec<usize>>,
}

impl FlipMatrix {
    pub fn size(&self) -> usize {
        self.names.len()
    }

    /// Rows with at least one adversarial image.
    pub fn valid(&self, row: usize) -> bool {
        self.counts[row] > 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.valid(i).then(|| self.values[i][j])
    }
}

/// Build a matrix from adversarial sources and a classifier returning all
/// `names.len()` classes of an image.
pub fn flip_matrix<F>(names: Vec<String>, sources: &[FlipSource<'_>], classify: F) -> Result<FlipMatrix>
where
    F: Fn(&ImageTensor) -> Result<Vec<i8>> + Sync,
{
    let m = names.len();
    if let Some(s) = sources.iter().find(|s| s.row >= m) {
        return Err(Error::AttributeIndex { index: s.row, count: m });
    }
    let flips = sources
        .par_iter()
        .map(|s| {
            let before = classify(s.original)?;
            let after = classify(s.perturbed)?;
            if before.len() != m || after.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    actual: before.len().min(after.len()),
                });
            }
            Ok(before.iter().zip(&after).map(|(a, b)| a != b).collect::<Vec<bool>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![0usize; m];
    let mut hits = vec![vec![0usize; m]; m];
    for (s, f) in sources.iter().zip(&flips) {
        counts[s.row] += 1;
        for (j, &flipped) in f.iter().enumerate() {
            hits[s.row][j] += usize::from(flipped);
        }
    }
    let values = hits
        .iter()
        .zip(&counts)
        .map(|(row, &n)| {
            row.iter()
                .map(|&h| if n == 0 { 0.0 } else { h as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(FlipMatrix {
        names,
        values,
        counts,
        hits,
    })
}

/// Separate networks: column `j` is judged by `models[j]` alone (every
/// attribute of every model becomes one column, in order).
pub fn portability_matrix(sources: &[FlipSource<'_>], models: &[ClassifierModel]) -> Result<FlipMatrix> {
    let names = models
        .iter()
        .flat_map(|m| m.attribute_names().iter().cloned())
        .collect();
    flip_matrix(names, sources, |x| {
        let mut all = Vec::new();
        for m in models {
            all.extend(m.predict(x)?);
        }
        Ok(all)
    })
}

/// One multi-attribute network judging all columns.
pub fn correlation_matrix(model: &ClassifierModel, sources: &[FlipSource<'_>]) -> Result<FlipMatrix> {
    flip_matrix(model.attribute_names().to_vec(), sources, |x| model.predict(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;

    #[test]
    fn counts_and_masking() {
        let shape = Shape::new(1, 2, 1);
        let a = ImageTensor::new(shape, vec![10.0, 10.0]).unwrap();
        let b = ImageTensor::new(shape, vec![0.0, 10.0]).unwrap();
        let c = ImageTensor::new(shape, vec![0.0, 0.0]).unwrap();
        // class j is +1 iff pixel j > 5
        let classify = |x: &ImageTensor| Ok(x.pixels().iter().map(|&p| if p > 5.0 { 1 } else { -1 }).collect());
        let sources = [
            FlipSource {
                row: 0,
                original: &a,
                perturbed: &b,
            },
            FlipSource {
                row: 0,
                original: &a,
                perturbed: &c,
            },
        ];
        let m = flip_matrix(vec!["p".into(), "q".into()], &sources, classify).unwrap();
        assert_eq!(m.values[0], vec![1.0, 0.5]);
        assert_eq!(m.counts, vec![2, 0]);
        assert_eq!(m.get(1, 0), None);
        let bad = [FlipSource {
            row: 2,
            original: &a,
            perturbed: &b,
        }];
        assert!(flip_matrix(vec!["p".into(), "q".into()], &bad, classify).is_err());
    }
}
