//! Labeled sample records, the line-delimited JSON manifest, and the binary
//! embedding container.
//!
//! A manifest file is one JSON object per line. An optional first line of the
//! form `{"header": {"colors": [...], "types": [...], "seed": 7}}` carries the
//! attribute label sets and the generating seed; every other line is a
//! [`SampleRecord`].
//!
//! Embedding files are little-endian: the magic `EMB1`, a `u32` row count, a
//! `u32` dimension, then `count * dim` `f32` values in row-major order.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of keypoints in the deformable vehicle model.
pub const NUM_KEYPOINTS: usize = 36;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";
const EMBEDDING_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }
}

/// The 36 projected keypoints of one vehicle, each with a visibility confidence.
///
/// Coordinates are in pixels and may fall outside the image for occluded or
/// truncated points. Serialized as `[[x, y, conf], ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    points: [Keypoint; NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn new(points: [Keypoint; NUM_KEYPOINTS]) -> Result<Self> {
        for (k, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("keypoint {k}"),
                });
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(Error::invalid(format!(
                    "keypoint {k} confidence {} outside [0, 1]",
                    p.confidence
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn from_slice(points: &[Keypoint]) -> Result<Self> {
        let arr: [Keypoint; NUM_KEYPOINTS] = points.try_into().map_err(|_| {
            Error::shape(format!(
                "expected {NUM_KEYPOINTS} keypoints, got {}",
                points.len()
            ))
        })?;
        Self::new(arr)
    }

    pub fn points(&self) -> &[Keypoint; NUM_KEYPOINTS] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Keypoint {
        self.points[index]
    }

    /// Applies `f` to every point, re-validating the result.
    pub fn map(&self, mut f: impl FnMut(usize, Keypoint) -> Keypoint) -> Result<Self> {
        let mut points = self.points;
        for (k, p) in points.iter_mut().enumerate() {
            *p = f(k, *p);
        }
        Self::new(points)
    }
}

impl Serialize for KeypointSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 3]> = self
            .points
            .iter()
            .map(|p| [p.x, p.y, p.confidence])
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KeypointSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<[f64; 3]>::deserialize(deserializer)?;
        let points: Vec<Keypoint> = rows
            .into_iter()
            .map(|[x, y, c]| Keypoint::new(x, y, c))
            .collect();
        KeypointSet::from_slice(&points).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

/// Axis-aligned box `(x, y, w, h)` in source-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Image dimensions `(width, height)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

impl From<[u32; 2]> for ImageSize {
    fn from([width, height]: [u32; 2]) -> Self {
        Self { width, height }
    }
}

impl From<ImageSize> for [u32; 2] {
    fn from(s: ImageSize) -> Self {
        [s.width, s.height]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub image_id: String,
    pub identity: u32,
    pub camera: u32,
    pub color: usize,
    #[serde(rename = "type")]
    pub vtype: usize,
    pub bbox: BBox,
    pub image_size: ImageSize,
    pub split: Split,
    pub keypoints: Option<KeypointSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelSets {
    pub colors: Vec<String>,
    pub types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    colors: Vec<String>,
    types: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct HeaderLine {
    header: ManifestHeader,
}

/// Wire form of a record before range checks.
#[derive(Deserialize)]
struct RawRecord {
    image_id: String,
    identity: i64,
    camera: i64,
    color: i64,
    #[serde(rename = "type")]
    vtype: i64,
    bbox: [f64; 4],
    image_size: [i64; 2],
    split: Split,
    #[serde(default)]
    keypoints: Option<KeypointSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub label_sets: LabelSets,
    /// Seed of the generator that produced this manifest, when known.
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn new(records: Vec<SampleRecord>, label_sets: LabelSets) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let line = i + 1;
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateImageId {
                    line,
                    image_id: r.image_id.clone(),
                });
            }
            check_label(line, "color", r.color as i64, label_sets.colors.len())?;
            check_label(line, "type", r.vtype as i64, label_sets.types.len())?;
            check_geometry(line, &r.bbox, r.image_size)?;
        }
        Ok(Self {
            records,
            label_sets,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn identities(&self) -> BTreeSet<u32> {
        self.records.iter().map(|r| r.identity).collect()
    }

    pub fn position_of(&self, image_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.image_id == image_id)
    }
}

fn check_label(line: usize, field: &'static str, value: i64, len: usize) -> Result<()> {
    if value < 0 || value as usize >= len {
        return Err(Error::LabelOutOfRange {
            line,
            field,
            value,
            len,
        });
    }
    Ok(())
}

fn check_geometry(line: usize, bbox: &BBox, size: ImageSize) -> Result<()> {
    let finite = [bbox.x, bbox.y, bbox.w, bbox.h].iter().all(|v| v.is_finite());
    if !finite || bbox.w <= 0.0 || bbox.h <= 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("bbox must be finite with w > 0 and h > 0, got {bbox:?}"),
        });
    }
    if size.width == 0 || size.height == 0 {
        return Err(Error::Parse {
            line,
            message: "image_size must be positive".into(),
        });
    }
    Ok(())
}

fn non_negative(line: usize, field: &str, value: i64) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Parse {
        line,
        message: format!("{field} must be a non-negative 32-bit integer, got {value}"),
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    load_manifest_with(path, None)
}

/// Loads a manifest, taking label sets from the header line if present,
/// otherwise from `labels`, otherwise inferring generic names from the largest
/// index seen.
pub fn load_manifest_with(
    path: impl AsRef<Path>,
    labels: Option<&LabelSets>,
) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut header: Option<ManifestHeader> = None;
    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if raw.is_empty() && header.is_none() && trimmed.starts_with("{\"header\"") {
            let h: HeaderLine = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            header = Some(h.header);
            continue;
        }
        let rec: RawRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        raw.push((line_no, rec));
    }

    let (label_sets, seed) = match (header, labels) {
        (Some(h), _) => (
            LabelSets {
                colors: h.colors,
                types: h.types,
            },
            h.seed,
        ),
        (None, Some(l)) => (l.clone(), None),
        (None, None) => (infer_label_sets(&raw), None),
    };

    let mut seen = HashSet::with_capacity(raw.len());
    let mut records = Vec::with_capacity(raw.len());
    for (line, r) in raw {
        if !seen.insert(r.image_id.clone()) {
            return Err(Error::DuplicateImageId {
                line,
                image_id: r.image_id,
            });
        }
        check_label(line, "color", r.color, label_sets.colors.len())?;
        check_label(line, "type", r.vtype, label_sets.types.len())?;
        let image_size = ImageSize::new(
            non_negative(line, "image width", r.image_size[0])?,
            non_negative(line, "image height", r.image_size[1])?,
        );
        let bbox = BBox::from(r.bbox);
        check_geometry(line, &bbox, image_size)?;
        records.push(SampleRecord {
            image_id: r.image_id,
            identity: non_negative(line, "identity", r.identity)?,
            camera: non_negative(line, "camera", r.camera)?,
            color: r.color as usize,
            vtype: r.vtype as usize,
            bbox,
            image_size,
            split: r.split,
            keypoints: r.keypoints,
        });
    }

    Ok(DatasetManifest {
        records,
        label_sets,
        seed,
    })
}

fn infer_label_sets(raw: &[(usize, RawRecord)]) -> LabelSets {
    let max_color = raw.iter().map(|(_, r)| r.color).max().unwrap_or(-1);
    let max_type = raw.iter().map(|(_, r)| r.vtype).max().unwrap_or(-1);
    LabelSets {
        colors: (0..=max_color).map(|i| format!("color{i}")).collect(),
        types: (0..=max_type).map(|i| format!("type{i}")).collect(),
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = serde_json::json!({
        "header": ManifestHeader {
            colors: manifest.label_sets.colors.clone(),
            types: manifest.label_sets.types.clone(),
            seed: manifest.seed,
        }
    });
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for r in &manifest.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dense `count x dim` matrix of `f32` feature vectors, row `i` aligned with
/// manifest record `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Array2<f32>,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f32>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!(
                    "embedding row {}, column {}",
                    pos / vectors.ncols(),
                    pos % vectors.ncols()
                ),
            });
        }
        Ok(Self { vectors })
    }

    /// Narrows a 64-bit matrix to the persisted 32-bit form.
    pub fn from_f64(vectors: ArrayView2<f64>) -> Result<Self> {
        Self::new(vectors.mapv(|v| v as f32))
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn vectors(&self) -> ArrayView2<'_, f32> {
        self.vectors.view()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.vectors.mapv(f64::from)
    }

    /// Rows at `indices`, widened to 64-bit.
    pub fn select_f64(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst)
                .iter_mut()
                .zip(self.vectors.row(src))
                .for_each(|(o, &v)| *o = f64::from(v));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(EMBEDDING_HEADER_LEN + self.vectors.len() * size_of::<f32>());
        out.extend_from_slice(&EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in self.vectors.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < EMBEDDING_HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != EMBEDDING_MAGIC {
                return Err(bad_magic(bytes));
            }
            return Err(Error::Truncated {
                expected: EMBEDDING_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if bytes[..4] != EMBEDDING_MAGIC {
            return Err(bad_magic(bytes));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[EMBEDDING_HEADER_LEN..];
        let expected = count * dim * size_of::<f32>();
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::invalid(format!(
                "{} trailing bytes after {expected}-byte payload",
                payload.len() - expected
            )));
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let vectors = Array2::from_shape_vec((count, dim), values)
            .map_err(|e| Error::shape(e.to_string()))?;
        Self::new(vectors)
    }
}

fn bad_magic(bytes: &[u8]) -> Error {
    Error::BadMagic {
        found: bytes[..4].try_into().unwrap(),
        expected: EMBEDDING_MAGIC,
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_bytes(&bytes)
}

pub fn save_embeddings(path: impl AsRef<Path>, emb: &EmbeddingSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, emb.to_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    RowCountMismatch { records: usize, rows: usize },
    UncoveredQuery { identity: u32 },
    MissingKeypoints { image_id: String },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::RowCountMismatch { records, rows } => {
                write!(f, "row count mismatch: {records} records vs {rows} embedding rows")
            }
            Finding::UncoveredQuery { identity } => {
                write!(f, "query identity {identity} has no gallery sample")
            }
            Finding::MissingKeypoints { image_id } => {
                write!(f, "record {image_id} has no keypoints")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Cross-checks a manifest against its embeddings. Nothing here is an error;
/// every problem becomes a [`Finding`].
pub fn validate_pairing(
    manifest: &DatasetManifest,
    emb: &EmbeddingSet,
    require_keypoints: bool,
) -> ValidationReport {
    let mut findings = Vec::new();
    if manifest.len() != emb.len() {
        findings.push(Finding::RowCountMismatch {
            records: manifest.len(),
            rows: emb.len(),
        });
    }

    let gallery: HashSet<u32> = manifest
        .records
        .iter()
        .filter(|r| r.split == Split::Gallery)
        .map(|r| r.identity)
        .collect();
    let uncovered: BTreeSet<u32> = manifest
        .records
        .iter()
        .filter(|r| r.split == Split::Query && !gallery.contains(&r.identity))
        .map(|r| r.identity)
        .collect();
    findings.extend(
        uncovered
            .into_iter()
            .map(|identity| Finding::UncoveredQuery { identity }),
    );

    if require_keypoints {
        findings.extend(
            manifest
                .records
                .iter()
                .filter(|r| r.keypoints.is_none())
                .map(|r| Finding::MissingKeypoints {
                    image_id: r.image_id.clone(),
                }),
        );
    }
    ValidationReport { findings }
}
