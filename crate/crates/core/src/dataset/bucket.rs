use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::EvalInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectCount {
    #[serde(rename = "zero-object")]
    Zero,
    #[serde(rename = "single-object")]
    Single,
    #[serde(rename = "multi-objects")]
    Multi,
}

/// Description length `l` in whitespace tokens: short `l <= 5`,
/// normal `6 <= l <= 9`, long `l >= 10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthBucket {
    Short,
    Normal,
    Long,
}

/// Annotated entity count `n`: few `n = 1`, moderate `2 <= n <= 3`,
/// many `n >= 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityBucket {
    Few,
    Moderate,
    Many,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bucket {
    pub object_count: ObjectCount,
    pub length: LengthBucket,
    pub entities: EntityBucket,
}

impl ObjectCount {
    pub const ALL: [ObjectCount; 3] = [ObjectCount::Zero, ObjectCount::Single, ObjectCount::Multi];

    pub fn from_count(n: usize) -> Self {
        match n {
            0 => ObjectCount::Zero,
            1 => ObjectCount::Single,
            _ => ObjectCount::Multi,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ObjectCount::Zero => "zero-object",
            ObjectCount::Single => "single-object",
            ObjectCount::Multi => "multi-objects",
        }
    }
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [LengthBucket::Short, LengthBucket::Normal, LengthBucket::Long];

    pub fn from_tokens(l: usize) -> Self {
        match l {
            0..=5 => LengthBucket::Short,
            6..=9 => LengthBucket::Normal,
            _ => LengthBucket::Long,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LengthBucket::Short => "short",
            LengthBucket::Normal => "normal",
            LengthBucket::Long => "long",
        }
    }
}

impl EntityBucket {
    pub const ALL: [EntityBucket; 4] = [
        EntityBucket::Few,
        EntityBucket::Moderate,
        EntityBucket::Many,
        EntityBucket::Unknown,
    ];

    pub fn from_count(n: Option<u32>) -> Self {
        match n {
            None => EntityBucket::Unknown,
            Some(0 | 1) => EntityBucket::Few,
            Some(2 | 3) => EntityBucket::Moderate,
            Some(_) => EntityBucket::Many,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EntityBucket::Few => "few",
            EntityBucket::Moderate => "moderate",
            EntityBucket::Many => "many",
            EntityBucket::Unknown => "unknown",
        }
    }
}

pub fn bucketize(instance: &EvalInstance) -> Bucket {
    Bucket {
        object_count: ObjectCount::from_count(instance.tubelets().len()),
        length: LengthBucket::from_tokens(instance.description.split_whitespace().count()),
        entities: EntityBucket::from_count(instance.entity_count),
    }
}

/// A reporting dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketDimension {
    ObjectCount,
    Length,
    Entities,
}

impl BucketDimension {
    pub const ALL: [BucketDimension; 3] = [
        BucketDimension::ObjectCount,
        BucketDimension::Length,
        BucketDimension::Entities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BucketDimension::ObjectCount => "object-count",
            BucketDimension::Length => "length",
            BucketDimension::Entities => "entities",
        }
    }

    /// Every label of this dimension, in report order.
    pub fn labels(self) -> Vec<&'static str> {
        match self {
            BucketDimension::ObjectCount => ObjectCount::ALL.iter().map(|b| b.label()).collect(),
            BucketDimension::Length => LengthBucket::ALL.iter().map(|b| b.label()).collect(),
            BucketDimension::Entities => EntityBucket::ALL.iter().map(|b| b.label()).collect(),
        }
    }

    pub fn label_of(self, bucket: &Bucket) -> &'static str {
        match self {
            BucketDimension::ObjectCount => bucket.object_count.label(),
            BucketDimension::Length => bucket.length.label(),
            BucketDimension::Entities => bucket.entities.label(),
        }
    }
}

impl fmt::Display for BucketDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BucketDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BucketDimension::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown bucket dimension {s:?} (expected object-count, length or entities)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BBox, FrameIndex, Tubelet};

    fn instance(words: usize, entities: Option<u32>, tubelets: usize) -> EvalInstance {
        let description = vec!["word"; words].join(" ");
        let ts = (0..tubelets)
            .map(|k| {
                let boxes = [(FrameIndex(0), BBox::new(0.5, 0.5, 0.1, 0.1).unwrap())]
                    .into_iter()
                    .collect();
                Tubelet::new(format!("t{k}"), "c", boxes).unwrap()
            })
            .collect();
        EvalInstance::new("i", "v", description, entities, ts).unwrap()
    }

    #[test]
    fn length_boundaries() {
        assert_eq!(bucketize(&instance(5, None, 1)).length, LengthBucket::Short);
        assert_eq!(bucketize(&instance(6, None, 1)).length, LengthBucket::Normal);
        assert_eq!(bucketize(&instance(9, None, 1)).length, LengthBucket::Normal);
        assert_eq!(bucketize(&instance(10, None, 1)).length, LengthBucket::Long);
        assert_eq!(bucketize(&instance(1, None, 1)).length, LengthBucket::Short);
    }

    #[test]
    fn entity_boundaries() {
        assert_eq!(bucketize(&instance(3, Some(1), 1)).entities, EntityBucket::Few);
        assert_eq!(bucketize(&instance(3, Some(3), 1)).entities, EntityBucket::Moderate);
        assert_eq!(bucketize(&instance(3, Some(2), 1)).entities, EntityBucket::Moderate);
        assert_eq!(bucketize(&instance(3, Some(4), 1)).entities, EntityBucket::Many);
        assert_eq!(bucketize(&instance(3, None, 1)).entities, EntityBucket::Unknown);
    }

    #[test]
    fn object_count_labels() {
        assert_eq!(bucketize(&instance(3, None, 0)).object_count, ObjectCount::Zero);
        assert_eq!(bucketize(&instance(3, None, 1)).object_count, ObjectCount::Single);
        assert_eq!(bucketize(&instance(3, None, 2)).object_count.label(), "multi-objects");
    }

    #[test]
    fn tokens_are_whitespace_separated() {
        let mut i = instance(1, None, 1);
        i.description = "  a\tman  riding\na horse ".into();
        assert_eq!(bucketize(&i).length, LengthBucket::Short);
    }

    #[test]
    fn dimension_names_parse() {
        for d in BucketDimension::ALL {
            assert_eq!(d.name().parse::<BucketDimension>().unwrap(), d);
        }
        assert!("colour".parse::<BucketDimension>().is_err());
    }
}
