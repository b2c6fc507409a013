//! CelebA-style attribute list files.
//!
//! ```text
//! 2
//! Smiling Goatee
//! 000001.ppm  1 -1
//! 000002.ppm -1 -1
//! ```
//!
//! Line 1 is the image count, line 2 the attribute names, then one row per
//! image: file name followed by one `1`/`-1` per attribute.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    pub attribute_names: Vec<String>,
    pub rows: Vec<(String, Vec<i8>)>,
}

pub fn parse_attribute_labels(text: &str) -> Result<LabelTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (n, first) = lines.next().ok_or_else(|| Error::parse(1, "missing image count"))?;
    let count: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::parse(n, format!("invalid image count `{}`", first.trim())))?;

    let (n, second) = lines.next().ok_or_else(|| Error::parse(2, "missing attribute names"))?;
    let attribute_names: Vec<String> = second.split_whitespace().map(str::to_string).collect();
    if attribute_names.is_empty() {
        return Err(Error::parse(n, "no attribute names"));
    }

    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for (n, line) in lines {
        let mut fields = line.split_whitespace();
        let Some(name) = fields.next() else {
            continue;
        };
        let mut values = Vec::with_capacity(attribute_names.len());
        for token in fields {
            let v = match token {
                "1" | "+1" => 1,
                "-1" => -1,
                other => return Err(Error::parse(n, format!("invalid label `{other}`, expected 1 or -1"))),
            };
            values.push(v);
        }
        if values.len() != attribute_names.len() {
            return Err(Error::parse(
                n,
                format!("expected {} labels, found {}", attribute_names.len(), values.len()),
            ));
        }
        rows.push((name.to_string(), values));
    }
    if rows.len() != count {
        return Err(Error::parse(
            1,
            format!("header declares {count} images but {} rows follow", rows.len()),
        ));
    }
    Ok(LabelTable { attribute_names, rows })
}

pub fn format_attribute_labels(table: &LabelTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", table.rows.len());
    let _ = writeln!(out, "{}", table.attribute_names.join(" "));
    for (name, values) in &table.rows {
        out.push_str(name);
        for v in values {
            let _ = write!(out, " {v:>2}");
        }
        out.push('\n');
    }
    out
}

pub fn read_attribute_labels(path: &Path) -> Result<LabelTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_attribute_labels(&text)
}

pub fn write_attribute_labels(path: &Path, table: &LabelTable) -> Result<()> {
    std::fs::write(path, format_attribute_labels(table)).map_err(|e| Error::file(path, e))
}
