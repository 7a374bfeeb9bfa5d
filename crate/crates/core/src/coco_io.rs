//! COCO-schema ground-truth datasets and results-format detection files.
//!
//! Datasets are written canonically: object keys in sorted order, images,
//! annotations and categories sorted by id, compact JSON with a trailing
//! newline. Equal datasets therefore serialize to identical bytes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::annotate::{
    BBox, InstanceAnnotation, RleMask, CHICKEN_CATEGORY_ID, CHICKEN_CATEGORY_NAME,
};

/// At most this many integrity violations are reported.
pub const MAX_REPORTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub file_name: String,
    pub height: u32,
    pub id: u64,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

impl Category {
    pub fn chicken() -> Self {
        Self {
            id: CHICKEN_CATEGORY_ID,
            name: CHICKEN_CATEGORY_NAME.into(),
        }
    }
}

/// Field order matches sorted key order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    pub annotations: Vec<InstanceAnnotation>,
    pub categories: Vec<Category>,
    pub images: Vec<ImageInfo>,
    #[serde(default)]
    pub info: BTreeMap<String, Value>,
}

/// One referential or structural problem in a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum CocoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: JSON parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dataset failed validation ({total} violations): {}", format_violations(.violations))]
    Invalid {
        violations: Vec<Violation>,
        total: usize,
    },
    #[error("detection {index}: image_id {image_id} not present in ground truth")]
    UnknownImage { index: usize, image_id: u64 },
    #[error("detection {index}: score {score} outside [0, 1]")]
    BadScore { index: usize, score: f64 },
    #[error("detection {index}: {message}")]
    BadDetection { index: usize, message: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl CocoDataset {
    pub fn new() -> Self {
        Self {
            categories: vec![Category::chicken()],
            ..Default::default()
        }
    }

    /// Every integrity violation, in a stable order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut image_dims = HashMap::new();
        for img in &self.images {
            if image_dims.insert(img.id, (img.width, img.height)).is_some() {
                out.push(Violation {
                    code: "duplicate-image-id",
                    detail: format!("image id {}", img.id),
                });
            }
            if img.id == 0 {
                out.push(Violation {
                    code: "nonpositive-id",
                    detail: "image id 0".into(),
                });
            }
        }
        let mut cat_ids = HashSet::new();
        for c in &self.categories {
            if !cat_ids.insert(c.id) {
                out.push(Violation {
                    code: "duplicate-category-id",
                    detail: format!("category id {}", c.id),
                });
            }
        }
        let mut ann_ids = HashSet::new();
        for a in &self.annotations {
            let id = a.annotation_id;
            if !ann_ids.insert(id) {
                out.push(Violation {
                    code: "duplicate-annotation-id",
                    detail: format!("annotation id {id}"),
                });
            }
            if id == 0 {
                out.push(Violation {
                    code: "nonpositive-id",
                    detail: "annotation id 0".into(),
                });
            }
            match image_dims.get(&a.image_id) {
                None => out.push(Violation {
                    code: "dangling-image-id",
                    detail: format!("annotation {id} -> image {}", a.image_id),
                }),
                Some(&(w, h)) => {
                    let seg = &a.segmentation;
                    if (seg.width, seg.height) != (w, h) {
                        out.push(Violation {
                            code: "rle-size-mismatch",
                            detail: format!(
                                "annotation {id}: rle {}x{} vs image {w}x{h}",
                                seg.width, seg.height
                            ),
                        });
                    }
                }
            }
            if !cat_ids.contains(&a.category_id) {
                out.push(Violation {
                    code: "dangling-category-id",
                    detail: format!("annotation {id} -> category {}", a.category_id),
                });
            }
            let seg = &a.segmentation;
            if seg.check_length().is_err() {
                let sum: u64 = seg.counts.iter().map(|&c| c as u64).sum();
                out.push(Violation {
                    code: "rle-length-mismatch",
                    detail: format!(
                        "annotation {id}: counts sum {sum} != {}x{}",
                        seg.width, seg.height
                    ),
                });
            } else if seg.counts.iter().skip(1).any(|&c| c == 0) {
                out.push(Violation {
                    code: "rle-zero-run",
                    detail: format!("annotation {id}: zero-length interior run"),
                });
            } else if seg.area() != a.area {
                out.push(Violation {
                    code: "area-mismatch",
                    detail: format!("annotation {id}: area {} vs mask {}", a.area, seg.area()),
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CocoError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            let total = v.len();
            Err(CocoError::Invalid {
                violations: v.into_iter().take(MAX_REPORTED_VIOLATIONS).collect(),
                total,
            })
        }
    }

    /// Sorts every array by id.
    pub fn canonicalize(&mut self) {
        self.images.sort_by_key(|i| i.id);
        self.annotations.sort_by_key(|a| a.annotation_id);
        self.categories.sort_by_key(|c| c.id);
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Annotations grouped by image id, in annotation order.
    pub fn annotations_by_image(&self) -> BTreeMap<u64, Vec<&InstanceAnnotation>> {
        let mut map: BTreeMap<u64, Vec<&InstanceAnnotation>> = BTreeMap::new();
        for a in &self.annotations {
            map.entry(a.image_id).or_default().push(a);
        }
        map
    }

    /// Canonical bytes, after validation.
    pub fn to_canonical_bytes(&self) -> Result<Vec<u8>, CocoError> {
        self.validate()?;
        let mut d = self.clone();
        d.canonicalize();
        let mut bytes = serde_json::to_vec(&d).expect("dataset serializes");
        bytes.push(b'\n');
        Ok(bytes)
    }
}

pub fn write_dataset(d: &CocoDataset, path: impl AsRef<Path>) -> Result<(), CocoError> {
    let path = path.as_ref();
    let bytes = d.to_canonical_bytes()?;
    fs::write(path, bytes).map_err(|source| CocoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, CocoError> {
    fs::read_to_string(path).map_err(|source| CocoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, text: &str, e: serde_json::Error) -> CocoError {
    let (line, column) = (e.line(), e.column());
    let offset = byte_offset(text, line, column);
    CocoError::Parse {
        path: path.to_path_buf(),
        offset,
        line,
        column,
        message: e.to_string(),
    }
}

/// Byte offset of a 1-based line / column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses and validates a dataset from JSON text.
pub fn parse_dataset(text: &str, path: &Path) -> Result<CocoDataset, CocoError> {
    let d: CocoDataset = serde_json::from_str(text).map_err(|e| parse_error(path, text, e))?;
    d.validate()?;
    Ok(d)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<CocoDataset, CocoError> {
    let path = path.as_ref();
    parse_dataset(&read_text(path)?, path)
}

/// One model prediction. Either field of `bbox` or `segmentation` may be
/// absent in the file; a missing box is derived from the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub score: f64,
    pub bbox: BBox,
    pub segmentation: Option<RleMask>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<BBox>,
    category_id: u64,
    image_id: u64,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    segmentation: Option<RleMask>,
}

/// Validates raw records against the ground truth, preserving order.
fn detections_from_records(
    records: Vec<DetectionRecord>,
    gt: &CocoDataset,
) -> Result<Vec<Detection>, CocoError> {
    let dims: HashMap<u64, (u32, u32)> = gt
        .images
        .iter()
        .map(|i| (i.id, (i.width, i.height)))
        .collect();
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let Some(&(w, h)) = dims.get(&r.image_id) else {
                return Err(CocoError::UnknownImage {
                    index,
                    image_id: r.image_id,
                });
            };
            if !(0.0..=1.0).contains(&r.score) {
                return Err(CocoError::BadScore {
                    index,
                    score: r.score,
                });
            }
            if let Some(seg) = &r.segmentation {
                if (seg.width, seg.height) != (w, h) {
                    return Err(CocoError::BadDetection {
                        index,
                        message: format!(
                            "mask is {}x{} but image {} is {w}x{h}",
                            seg.width, seg.height, r.image_id
                        ),
                    });
                }
                seg.check_length().map_err(|e| CocoError::BadDetection {
                    index,
                    message: e.to_string(),
                })?;
            }
            let bbox = match (&r.bbox, &r.segmentation) {
                (Some(b), _) => *b,
                (None, Some(seg)) => seg.bbox().unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0)),
                (None, None) => {
                    return Err(CocoError::BadDetection {
                        index,
                        message: "neither bbox nor segmentation given".into(),
                    })
                }
            };
            Ok(Detection {
                image_id: r.image_id,
                category_id: r.category_id,
                score: r.score,
                bbox,
                segmentation: r.segmentation,
            })
        })
        .collect()
}

pub fn parse_detections(
    text: &str,
    path: &Path,
    gt: &CocoDataset,
) -> Result<Vec<Detection>, CocoError> {
    let records: Vec<DetectionRecord> =
        serde_json::from_str(text).map_err(|e| parse_error(path, text, e))?;
    detections_from_records(records, gt)
}

pub fn read_detections(
    path: impl AsRef<Path>,
    gt: &CocoDataset,
) -> Result<Vec<Detection>, CocoError> {
    let path = path.as_ref();
    parse_detections(&read_text(path)?, path, gt)
}

/// Results-format JSON array, in the given order.
pub fn detections_to_json(dets: &[Detection]) -> Vec<u8> {
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| DetectionRecord {
            bbox: Some(d.bbox),
            category_id: d.category_id,
            image_id: d.image_id,
            score: d.score,
            segmentation: d.segmentation.clone(),
        })
        .collect();
    let mut bytes = serde_json::to_vec(&records).expect("detections serialize");
    bytes.push(b'\n');
    bytes
}

pub fn write_detections(dets: &[Detection], path: impl AsRef<Path>) -> Result<(), CocoError> {
    let path = path.as_ref();
    fs::write(path, detections_to_json(dets)).map_err(|source| CocoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Ground truth restated as score-1.0 detections.
pub fn detections_from_ground_truth(gt: &CocoDataset) -> Vec<Detection> {
    gt.annotations
        .iter()
        .map(|a| Detection {
            image_id: a.image_id,
            category_id: a.category_id,
            score: 1.0,
            bbox: a.bbox,
            segmentation: Some(a.segmentation.clone()),
        })
        .collect()
}
