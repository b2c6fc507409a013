//! CSV and heatmap output.
//!
//! Every CSV starts with `#` comment lines carrying the seed and config hash
//! of the run, followed by a header row. Floats are written with six
//! decimals so reruns are byte-identical.

use std::io::Write;

use super::{FlipMatrix, FlippabilityRow, OverlapStat, TTest, TrivialBaseline};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportHeader {
    pub seed: u64,
    pub config_hash: String,
}

impl ReportHeader {
    fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# config_hash={}", self.config_hash)?;
        Ok(())
    }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

fn with_csv<W: Write>(
    w: &mut W,
    header: &ReportHeader,
    body: impl FnOnce(&mut csv::Writer<&mut W>) -> csv::Result<()>,
) -> Result<()> {
    header.write(w)?;
    let mut out = csv::Writer::from_writer(&mut *w);
    body(&mut out).map_err(csv_err)?;
    out.flush()?;
    Ok(())
}

pub fn write_flippability_csv(w: &mut impl Write, header: &ReportHeader, rows: &[FlippabilityRow]) -> Result<()> {
    with_csv(w, header, |out| {
        out.write_record(["method", "adv_type", "tau", "flipped", "total", "fraction"])?;
        for r in rows {
            for (k, tau) in r.thresholds.iter().enumerate() {
                out.write_record([
                    r.label.clone(),
                    r.adv_type.sign().to_string(),
                    format!("{tau:.2}"),
                    r.counts[k].to_string(),
                    r.total.to_string(),
                    f6(r.fraction(k)),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn write_overlap_csv(w: &mut impl Write, header: &ReportHeader, stats: &[OverlapStat]) -> Result<()> {
    with_csv(w, header, |out| {
        out.write_record(["method", "adv_type", "count_early", "count_converged", "overlap"])?;
        for s in stats {
            out.write_record([
                s.label.clone(),
                s.adv_type.sign().to_string(),
                s.count_early.to_string(),
                s.count_converged.to_string(),
                s.overlap_count.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One row per source attribute; masked rows have empty cells.
pub fn write_matrix_csv(w: &mut impl Write, header: &ReportHeader, m: &FlipMatrix) -> Result<()> {
    with_csv(w, header, |out| {
        let mut head = vec!["source".to_string(), "count".to_string()];
        head.extend(m.names.iter().cloned());
        out.write_record(&head)?;
        for i in 0..m.size() {
            let mut rec = vec![m.names[i].clone(), m.counts[i].to_string()];
            rec.extend((0..m.size()).map(|j| m.get(i, j).map(f6).unwrap_or_default()));
            out.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn write_baseline_csv(
    w: &mut impl Write,
    header: &ReportHeader,
    names: &[String],
    baseline: &TrivialBaseline,
    model_errors: &[f64],
) -> Result<()> {
    with_csv(w, header, |out| {
        out.write_record(["attribute", "majority_class", "baseline_error", "model_error"])?;
        for (j, name) in names.iter().enumerate() {
            out.write_record([
                name.clone(),
                baseline.predictions[j].to_string(),
                f6(baseline.errors[j]),
                model_errors.get(j).map(|&e| f6(e)).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

pub fn write_ttest_csv(w: &mut impl Write, header: &ReportHeader, rows: &[(String, TTest)]) -> Result<()> {
    with_csv(w, header, |out| {
        out.write_record(["comparison", "t", "df", "p_two_sided"])?;
        for (name, r) in rows {
            out.write_record([name.clone(), f6(r.t), f6(r.df), format!("{:.6e}", r.p)])?;
        }
        Ok(())
    })
}

/// Misclassified pairs and how many of them were corrected imperceptibly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalRow {
    pub label: String,
    pub misclassified: usize,
    pub natural_adversarial: usize,
}

pub fn write_natural_csv(w: &mut impl Write, header: &ReportHeader, rows: &[NaturalRow]) -> Result<()> {
    with_csv(w, header, |out| {
        out.write_record(["method", "misclassified", "natural_adversarial", "rate"])?;
        for r in rows {
            let rate = if r.misclassified == 0 {
                0.0
            } else {
                r.natural_adversarial as f64 / r.misclassified as f64
            };
            out.write_record([
                r.label.clone(),
                r.misclassified.to_string(),
                r.natural_adversarial.to_string(),
                f6(rate),
            ])?;
        }
        Ok(())
    })
}

/// Grayscale rendering, `cell` pixels per entry, 0 black and 1 white.
/// Masked rows render black.
pub fn heatmap(m: &FlipMatrix, cell: usize) -> Result<ImageTensor> {
    let n = m.size() * cell.max(1);
    let cell = cell.max(1);
    let mut img = ImageTensor::filled(Shape::new(n.max(1), n.max(1), 1), 0.0);
    for y in 0..n {
        for x in 0..n {
            let v = m.get(y / cell, x / cell).unwrap_or(0.0).clamp(0.0, 1.0);
            img.set(y, x, 0, (v * 255.0).round());
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AdvType;

    fn header() -> ReportHeader {
        ReportHeader {
            seed: 7,
            config_hash: "ab12".into(),
        }
    }

    #[test]
    fn flippability_schema() {
        let rows = [FlippabilityRow {
            label: "ffa_line_search".into(),
            adv_type: AdvType::Correct,
            thresholds: vec![0.0, 0.95],
            counts: vec![3, 1],
            total: 4,
        }];
        let mut buf = Vec::new();
        write_flippability_csv(&mut buf, &header(), &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed=7\n# config_hash=ab12\nmethod,adv_type,tau,flipped,total,fraction\n\
             ffa_line_search,+,0.00,3,4,0.750000\nffa_line_search,+,0.95,1,4,0.250000\n"
        );
    }

    #[test]
    fn matrix_masks_and_heatmap() {
        let m = FlipMatrix {
            names: vec!["a".into(), "b".into()],
            values: vec![vec![1.0, 0.5], vec![0.0, 0.0]],
            counts: vec![2, 0],
            hits: vec![vec![2, 1], vec![0, 0]],
        };
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &header(), &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.ends_with("source,count,a,b\na,2,1.000000,0.500000\nb,0,,\n"),
            "{text}"
        );
        let img = heatmap(&m, 2).unwrap();
        assert_eq!(img.shape(), Shape::new(4, 4, 1));
        assert_eq!(
            (img.get(0, 0, 0), img.get(0, 3, 0), img.get(3, 0, 0)),
            (255.0, 128.0, 0.0)
        );
    }
}
