//! Datasets, file formats and synthetic data.

pub mod checkpoint;
pub mod labels;
pub mod outcomes;
pub mod pnm;
pub mod synth;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub use labels::LabelTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Checks that every entry is exactly `-1` or `+1`.
pub fn validate_labels(values: &[i8]) -> Result<()> {
    match values.iter().position(|&v| v != 1 && v != -1) {
        Some(i) => Err(Error::Config(format!("label {i} is {}, expected -1 or 1", values[i]))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub id: String,
    pub image: ImageTensor,
    pub labels: Vec<i8>,
}

#[derive(Debug, Clone)]
pub struct AttributeDataset {
    attribute_names: Vec<String>,
    split: Split,
    items: Vec<DatasetItem>,
    ids: HashSet<String>,
}

impl AttributeDataset {
    pub fn new(attribute_names: Vec<String>, split: Split) -> Self {
        AttributeDataset {
            attribute_names,
            split,
            items: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn push(&mut self, item: DatasetItem) -> Result<()> {
        if item.labels.len() != self.attribute_names.len() {
            return Err(Error::Dimension {
                expected: self.attribute_names.len(),
                actual: item.labels.len(),
            });
        }
        validate_labels(&item.labels)?;
        if let Some(first) = self.items.first() {
            first.image.ensure_same_shape(&item.image)?;
        }
        if !self.ids.insert(item.id.clone()) {
            return Err(Error::Config(format!("duplicate image id `{}`", item.id)));
        }
        self.items.push(item);
        Ok(())
    }

    /// Load every image named in `table` from `image_dir`.
    pub fn load(table: &LabelTable, image_dir: &Path, split: Split) -> Result<Self> {
        let mut ds = AttributeDataset::new(table.attribute_names.clone(), split);
        for (id, labels) in &table.rows {
            let image = pnm::read_image(&image_dir.join(id))?;
            ds.push(DatasetItem {
                id: id.clone(),
                image,
                labels: labels.clone(),
            })?;
        }
        Ok(ds)
    }

    pub fn label_table(&self) -> LabelTable {
        LabelTable {
            attribute_names: self.attribute_names.clone(),
            rows: self.items.iter().map(|it| (it.id.clone(), it.labels.clone())).collect(),
        }
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&DatasetItem> {
        self.items.get(index)
    }

    pub fn find(&self, id: &str) -> Option<&DatasetItem> {
        self.items.iter().find(|it| it.id == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attribute_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    /// Dataset column of each requested attribute name.
    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.attribute_index(n)).collect()
    }

    /// Label column for one attribute.
    pub fn column(&self, index: usize) -> Vec<i8> {
        self.items.iter().map(|it| it.labels[index]).collect()
    }

    /// A dataset holding only the items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut ds = AttributeDataset::new(self.attribute_names.clone(), self.split);
        for &i in indices {
            let item = self.items.get(i).ok_or(Error::AttributeIndex {
                index: i,
                count: self.items.len(),
            })?;
            ds.push(item.clone())?;
        }
        Ok(ds)
    }
}
