//! Pedestrian attribute schema and per-sample annotations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub name: String,
    pub kind: AttributeKind,
    pub cardinality: usize,
}

impl AttributeEntry {
    /// Number of logits the classifier head emits: one sigmoid logit for
    /// binary attributes, one softmax logit per class otherwise.
    pub fn head_width(&self) -> usize {
        match self.kind {
            AttributeKind::Binary => 1,
            AttributeKind::Categorical => self.cardinality,
        }
    }
}

/// Ordered list of attributes the model predicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AttributeEntry>", into = "Vec<AttributeEntry>")]
pub struct AttributeSchema {
    entries: Vec<AttributeEntry>,
}

impl AttributeSchema {
    pub fn new(entries: Vec<AttributeEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            ensure!(
                seen.insert(e.name.as_str()),
                Error::InvalidArgument(format!("duplicate attribute name `{}`", e.name))
            );
            match e.kind {
                AttributeKind::Binary => ensure!(
                    e.cardinality == 2,
                    Error::InvalidArgument(format!("binary attribute `{}` must have cardinality 2", e.name))
                ),
                AttributeKind::Categorical => ensure!(
                    e.cardinality >= 2,
                    Error::InvalidArgument(format!(
                        "categorical attribute `{}` needs at least 2 classes",
                        e.name
                    ))
                ),
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// The nine pedestrian attributes: gender, top/bottom color, top/bottom
    /// length, three bag types and hair length.
    pub fn pedestrian() -> Self {
        use AttributeKind::*;
        let e = |name: &str, kind, cardinality| AttributeEntry { name: name.to_string(), kind, cardinality };
        Self {
            entries: vec![
                e(GENDER, Binary, 2),
                e(TOP_COLOR, Categorical, TOP_COLORS.len()),
                e(BOTTOM_COLOR, Categorical, BOTTOM_COLORS.len()),
                e(TOP_LENGTH, Binary, 2),
                e(BOTTOM_LENGTH, Binary, 2),
                e(BACKPACK, Binary, 2),
                e(HAND_BAG, Binary, 2),
                e(OTHER_BAG, Binary, 2),
                e(HAIR_LENGTH, Binary, 2),
            ],
        }
    }

    pub fn entries(&self) -> &[AttributeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn head_widths(&self) -> Vec<usize> {
        self.entries.iter().map(AttributeEntry::head_width).collect()
    }
}

impl Default for AttributeSchema {
    fn default() -> Self {
        Self::pedestrian()
    }
}

impl TryFrom<Vec<AttributeEntry>> for AttributeSchema {
    type Error = Error;
    fn try_from(entries: Vec<AttributeEntry>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<AttributeSchema> for Vec<AttributeEntry> {
    fn from(s: AttributeSchema) -> Self {
        s.entries
    }
}

pub const GENDER: &str = "gender";
pub const TOP_COLOR: &str = "top_color";
pub const BOTTOM_COLOR: &str = "bottom_color";
pub const TOP_LENGTH: &str = "top_length";
pub const BOTTOM_LENGTH: &str = "bottom_length";
pub const BACKPACK: &str = "backpack";
pub const HAND_BAG: &str = "hand_bag";
pub const OTHER_BAG: &str = "other_bag";
pub const HAIR_LENGTH: &str = "hair_length";

pub const TOP_COLORS: [&str; 8] = ["black", "blue", "green", "grey", "purple", "red", "white", "yellow"];
pub const BOTTOM_COLORS: [&str; 9] =
    ["black", "blue", "brown", "grey", "green", "pink", "purple", "white", "yellow"];

/// Class index per schema entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeAnnotation {
    values: Vec<usize>,
}

impl AttributeAnnotation {
    pub fn new(values: Vec<usize>, schema: &AttributeSchema) -> Result<Self> {
        ensure!(
            values.len() == schema.len(),
            Error::Annotation(format!("{} values for {} attributes", values.len(), schema.len()))
        );
        for (v, e) in values.iter().zip(schema.entries()) {
            ensure!(
                *v < e.cardinality,
                Error::Annotation(format!("`{}` = {} outside [0, {})", e.name, v, e.cardinality))
            );
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        Self::new(self.values.clone(), schema).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pedestrian_schema_layout() {
        let s = AttributeSchema::pedestrian();
        assert_eq!(s.len(), 9);
        let cards: Vec<_> = s.entries().iter().map(|e| e.cardinality).collect();
        assert_eq!(cards, vec![2, 8, 9, 2, 2, 2, 2, 2, 2]);
        assert_eq!(s.head_widths(), vec![1, 8, 9, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn schema_rejects_bad_entries() {
        let e = |n: &str, k, c| AttributeEntry { name: n.into(), kind: k, cardinality: c };
        assert!(AttributeSchema::new(vec![e("a", AttributeKind::Binary, 3)]).is_err());
        assert!(AttributeSchema::new(vec![e("a", AttributeKind::Categorical, 1)]).is_err());
        assert!(AttributeSchema::new(vec![
            e("a", AttributeKind::Binary, 2),
            e("a", AttributeKind::Binary, 2)
        ])
        .is_err());
    }

    #[test]
    fn annotation_range_checked() {
        let s = AttributeSchema::pedestrian();
        assert!(AttributeAnnotation::new(vec![0; 9], &s).is_ok());
        assert!(AttributeAnnotation::new(vec![0; 8], &s).is_err());
        let mut v = vec![0; 9];
        v[1] = 8;
        assert!(AttributeAnnotation::new(v, &s).is_err());
    }

    #[test]
    fn schema_serde_validates() {
        let json = r#"[{"name":"x","kind":"binary","cardinality":3}]"#;
        assert!(serde_json::from_str::<AttributeSchema>(json).is_err());
        let s = AttributeSchema::pedestrian();
        let back: AttributeSchema = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
