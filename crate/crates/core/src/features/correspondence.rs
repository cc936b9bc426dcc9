use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, WeightedPair};

/// Origin of a correspondence set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Feat2d,
    Feat3d,
    Contact,
    Detector,
    Icp,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Feat2d => "feat2d",
            Tag::Feat3d => "feat3d",
            Tag::Contact => "contact",
            Tag::Detector => "detector",
            Tag::Icp => "icp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: Point3,
    pub target: Point3,
}

/// Pairs sharing one tag and one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub tag: Tag,
    pub weight: f64,
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(tag: Tag) -> Self {
        Self {
            tag,
            weight: 1.0,
            pairs: Vec::new(),
        }
    }

    pub fn from_pairs(tag: Tag, pairs: Vec<(Point3, Point3)>) -> Self {
        Self {
            tag,
            weight: 1.0,
            pairs: pairs
                .into_iter()
                .map(|(source, target)| Correspondence { source, target })
                .collect(),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn push(&mut self, source: Point3, target: Point3) {
        self.pairs.push(Correspondence { source, target });
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn weighted(&self) -> impl Iterator<Item = WeightedPair> + '_ {
        self.pairs
            .iter()
            .map(|c| WeightedPair::new(c.source, c.target, self.weight))
    }

    /// Pairs with source and target exchanged.
    pub fn reversed(&self) -> Self {
        Self {
            tag: self.tag,
            weight: self.weight,
            pairs: self
                .pairs
                .iter()
                .map(|c| Correspondence {
                    source: c.target,
                    target: c.source,
                })
                .collect(),
        }
    }
}
