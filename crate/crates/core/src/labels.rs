//! Detector class labels and the semantic color palette.
//!
//! The detector vocabulary is the 20-class Pascal VOC set. Class ids are the
//! zero-based positions in [`CLASS_NAMES`]; files always carry the names.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CLASS_NAMES: [&str; 20] = [
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

/// Pascal VOC segmentation palette, indexed like [`CLASS_NAMES`].
const PALETTE: [[u8; 3]; 20] = [
    [128, 0, 0],
    [0, 128, 0],
    [128, 128, 0],
    [0, 0, 128],
    [128, 0, 128],
    [0, 128, 128],
    [128, 128, 128],
    [64, 0, 0],
    [192, 0, 0],
    [64, 128, 0],
    [192, 128, 0],
    [64, 0, 128],
    [192, 0, 128],
    [64, 128, 128],
    [192, 128, 128],
    [0, 64, 0],
    [128, 64, 0],
    [0, 192, 0],
    [128, 192, 0],
    [0, 64, 128],
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown class label `{name}`; accepted labels: {}", CLASS_NAMES.join(", "))]
pub struct UnknownLabel {
    pub name: String,
}

/// A detector class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClassId(u8);

impl ClassId {
    pub const PERSON: ClassId = ClassId(14);
    pub const CAR: ClassId = ClassId(6);
    pub const CHAIR: ClassId = ClassId(8);

    pub fn from_index(index: usize) -> Option<ClassId> {
        (index < CLASS_NAMES.len()).then_some(ClassId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }

    /// Display color assigned to voxels carrying this label.
    pub fn color(self) -> [u8; 3] {
        PALETTE[self.index()]
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..CLASS_NAMES.len() as u8).map(ClassId)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassId {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CLASS_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| ClassId(i as u8))
            .ok_or_else(|| UnknownLabel { name: s.to_string() })
    }
}

impl TryFrom<String> for ClassId {
    type Error = UnknownLabel;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ClassId> for String {
    fn from(value: ClassId) -> Self {
        value.name().to_string()
    }
}

/// The set of classes treated as movable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovableClasses(BTreeSet<ClassId>);

impl MovableClasses {
    pub fn new(classes: impl IntoIterator<Item = ClassId>) -> Self {
        Self(classes.into_iter().collect())
    }

    /// Parses a comma-separated list such as `person,car`.
    pub fn parse_list(list: &str) -> Result<Self, UnknownLabel> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<_>, _>>()
            .map(Self)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.0.contains(&class)
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.0.iter().copied()
    }
}

impl Default for MovableClasses {
    fn default() -> Self {
        Self::new([ClassId::PERSON, ClassId::CAR])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for id in ClassId::all() {
            assert_eq!(id.name().parse::<ClassId>().unwrap(), id);
        }
        assert_eq!(ClassId::PERSON.name(), "person");
        assert_eq!(ClassId::CAR.name(), "car");
    }

    #[test]
    fn unknown_label_lists_vocabulary() {
        let err = "pedestrian".parse::<ClassId>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pedestrian"));
        assert!(msg.contains("tvmonitor"));
    }

    #[test]
    fn palette_is_distinct() {
        let colors: BTreeSet<[u8; 3]> = ClassId::all().map(ClassId::color).collect();
        assert_eq!(colors.len(), 20);
    }

    #[test]
    fn movable_list_parsing() {
        let m = MovableClasses::parse_list("person, car").unwrap();
        assert!(m.contains(ClassId::PERSON));
        assert!(m.contains(ClassId::CAR));
        assert!(!m.contains(ClassId::CHAIR));
        assert!(MovableClasses::parse_list("person,robot").is_err());
        assert_eq!(MovableClasses::default(), m);
    }
}
