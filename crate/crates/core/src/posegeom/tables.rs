//! Keypoint layout tables: body segments, PCK body-part groups and the
//! left/right pairing used by horizontal flips.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::NUM_KEYPOINTS;
use crate::error::{Error, Result};

pub const NUM_SEGMENTS: usize = 13;

const DEFAULT_LAYOUT: &str = include_str!("../../config/vehicle36.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub indices: Vec<usize>,
}

/// The 13 keypoint polygons rasterized into segment masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentTable {
    segments: Vec<Segment>,
}

impl SegmentTable {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.len() != NUM_SEGMENTS {
            return Err(Error::invalid(format!(
                "segment table needs {NUM_SEGMENTS} entries, got {}",
                segments.len()
            )));
        }
        for s in &segments {
            if s.indices.len() < 3 {
                return Err(Error::invalid(format!(
                    "segment {:?} has {} vertices, need at least 3",
                    s.name,
                    s.indices.len()
                )));
            }
            if let Some(&bad) = s.indices.iter().find(|&&i| i >= NUM_KEYPOINTS) {
                return Err(Error::invalid(format!(
                    "segment {:?} references keypoint {bad}",
                    s.name
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }
}

/// Body-part groups in the column order of the keypoint accuracy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Wheel,
    Fender,
    Rear,
    Front,
    RearWindow,
    FrontWindow,
}

impl BodyPart {
    pub const ALL: [BodyPart; 6] = [
        BodyPart::Wheel,
        BodyPart::Fender,
        BodyPart::Rear,
        BodyPart::Front,
        BodyPart::RearWindow,
        BodyPart::FrontWindow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Wheel => "wheel",
            BodyPart::Fender => "fender",
            BodyPart::Rear => "rear",
            BodyPart::Front => "front",
            BodyPart::RearWindow => "rear_window",
            BodyPart::FrontWindow => "front_window",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct GroupSpec {
    wheel: Vec<usize>,
    fender: Vec<usize>,
    rear: Vec<usize>,
    front: Vec<usize>,
    rear_window: Vec<usize>,
    front_window: Vec<usize>,
}

/// Partition of the 36 keypoints into six body parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    groups: [Vec<usize>; 6],
    part_of: [BodyPart; NUM_KEYPOINTS],
}

impl GroupTable {
    pub fn new(groups: [Vec<usize>; 6]) -> Result<Self> {
        let mut owner: [Option<BodyPart>; NUM_KEYPOINTS] = [None; NUM_KEYPOINTS];
        for (part, members) in BodyPart::ALL.iter().zip(&groups) {
            for &k in members {
                if k >= NUM_KEYPOINTS {
                    return Err(Error::invalid(format!(
                        "group {} references keypoint {k}",
                        part.name()
                    )));
                }
                if let Some(prev) = owner[k] {
                    return Err(Error::invalid(format!(
                        "keypoint {k} is in both {} and {}",
                        prev.name(),
                        part.name()
                    )));
                }
                owner[k] = Some(*part);
            }
        }
        if let Some(k) = owner.iter().position(Option::is_none) {
            return Err(Error::invalid(format!("keypoint {k} belongs to no group")));
        }
        let part_of = owner.map(|p| p.unwrap());
        Ok(Self { groups, part_of })
    }

    pub fn members(&self, part: BodyPart) -> &[usize] {
        &self.groups[part.index()]
    }

    pub fn part_of(&self, keypoint: usize) -> BodyPart {
        self.part_of[keypoint]
    }
}

/// Left/right keypoint pairs swapped by a horizontal flip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipPairs {
    partner: [usize; NUM_KEYPOINTS],
    pairs: Vec<(usize, usize)>,
}

impl FlipPairs {
    pub fn new(pairs: &[(usize, usize)]) -> Result<Self> {
        let mut partner: [usize; NUM_KEYPOINTS] = std::array::from_fn(|i| i);
        let mut used = [false; NUM_KEYPOINTS];
        for &(a, b) in pairs {
            if a >= NUM_KEYPOINTS || b >= NUM_KEYPOINTS {
                return Err(Error::invalid(format!(
                    "flip pair ({a}, {b}) out of range"
                )));
            }
            if a == b || used[a] || used[b] {
                return Err(Error::invalid(format!(
                    "flip pair ({a}, {b}) overlaps another pair"
                )));
            }
            used[a] = true;
            used[b] = true;
            partner[a] = b;
            partner[b] = a;
        }
        Ok(Self {
            partner,
            pairs: pairs.to_vec(),
        })
    }

    pub fn partner(&self, k: usize) -> usize {
        self.partner[k]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    segments: Vec<Segment>,
    groups: GroupSpec,
    flip_pairs: Vec<[usize; 2]>,
}

/// Everything the pose pipeline needs to know about the keypoint model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointLayout {
    pub segments: SegmentTable,
    pub groups: GroupTable,
    pub flip_pairs: FlipPairs,
}

impl KeypointLayout {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: LayoutFile = serde_json::from_str(text)?;
        let g = raw.groups;
        let pairs: Vec<(usize, usize)> = raw.flip_pairs.iter().map(|&[a, b]| (a, b)).collect();
        Ok(Self {
            segments: SegmentTable::new(raw.segments)?,
            groups: GroupTable::new([
                g.wheel,
                g.fender,
                g.rear,
                g.front,
                g.rear_window,
                g.front_window,
            ])?,
            flip_pairs: FlipPairs::new(&pairs)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let [wheel, fender, rear, front, rear_window, front_window] = self.groups.groups.clone();
        let file = LayoutFile {
            segments: self.segments.segments.clone(),
            groups: GroupSpec {
                wheel,
                fender,
                rear,
                front,
                rear_window,
                front_window,
            },
            flip_pairs: self.flip_pairs.pairs.iter().map(|&(a, b)| [a, b]).collect(),
        };
        serde_json::to_string_pretty(&file).expect("layout serializes")
    }
}

impl Default for KeypointLayout {
    /// The shipped 36-keypoint vehicle layout. Keypoints `i` and `i + 18` are
    /// the left and right instances of the same body landmark.
    fn default() -> Self {
        Self::from_json(DEFAULT_LAYOUT).expect("bundled layout is valid")
    }
}
