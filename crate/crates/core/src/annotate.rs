//! Binary masks, COCO run-length encoding, and conversion of an instance-ID
//! plane into per-instance annotations.
//!
//! RLE follows the COCO convention: the mask is flattened column-major
//! (down each column, then across) and `counts` alternates run lengths of
//! 0s and 1s, starting with a (possibly empty) run of 0s.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::FrameBuffers;

/// The only category this toolkit annotates.
pub const CHICKEN_CATEGORY_ID: u64 = 1;
pub const CHICKEN_CATEGORY_NAME: &str = "chicken";

/// Default minimum visible area, pixels.
pub const DEFAULT_MIN_AREA: u64 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("malformed RLE: counts sum to {sum} but mask has {expected} pixels")]
    LengthMismatch { sum: u64, expected: u64 },
    #[error("malformed RLE: zero-length run at position {0}")]
    InteriorZero(usize),
    #[error("malformed compressed RLE string: {0}")]
    BadString(String),
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("empty mask has no bounding box")]
    EmptyMask,
}

/// Row-major binary plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let w = self.width as usize;
        self.data[row as usize * w + col as usize] = value;
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }
}

/// COCO uncompressed RLE.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Checks the sum and no-interior-zero invariants.
    pub fn new(width: u32, height: u32, counts: Vec<u32>) -> Result<Self, RleError> {
        let r = Self {
            width,
            height,
            counts,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            counts: vec![width * height],
        }
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn check_length(&self) -> Result<(), RleError> {
        let sum: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if sum != self.pixel_count() {
            return Err(RleError::LengthMismatch {
                sum,
                expected: self.pixel_count(),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RleError> {
        self.check_length()?;
        if let Some(i) = self.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(RleError::InteriorZero(i + 1));
        }
        Ok(())
    }

    /// Number of 1-pixels.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }

    /// Runs of 1s as `(start, len)` in column-major linear positions.
    pub fn ones_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1 && c > 0).then_some((start, c as u64))
        })
    }

    /// Tight `(x, y, w, h)` box of the 1-pixels computed from the runs.
    pub fn bbox(&self) -> Result<BBox, RleError> {
        let h = self.height as u64;
        let mut min_x = u64::MAX;
        let mut max_x = 0;
        let mut min_y = u64::MAX;
        let mut max_y = 0;
        let mut any = false;
        for (start, len) in self.ones_runs() {
            any = true;
            let end = start + len - 1;
            let (c0, r0) = (start / h, start % h);
            let (c1, r1) = (end / h, end % h);
            min_x = min_x.min(c0);
            max_x = max_x.max(c1);
            if c0 == c1 {
                min_y = min_y.min(r0);
                max_y = max_y.max(r1);
            } else {
                // A run crossing a column boundary covers the bottom of one
                // column and the top of the next.
                min_y = 0;
                max_y = h - 1;
            }
        }
        if !any {
            return Err(RleError::EmptyMask);
        }
        Ok(BBox::new(
            min_x as f64,
            min_y as f64,
            (max_x - min_x + 1) as f64,
            (max_y - min_y + 1) as f64,
        ))
    }

    /// Number of pixels set in both masks, walking the two run lists
    /// together without expanding either.
    pub fn intersection_area(&self, other: &RleMask) -> Result<u64, RleError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(RleError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        let (a, b) = (&self.counts, &other.counts);
        let (mut ia, mut ib) = (0usize, 0usize);
        let (mut ra, mut rb) = (
            a.first().copied().unwrap_or(0) as u64,
            b.first().copied().unwrap_or(0) as u64,
        );
        let mut inter = 0u64;
        loop {
            while ra == 0 {
                ia += 1;
                match a.get(ia) {
                    Some(&c) => ra = c as u64,
                    None => return Ok(inter),
                }
            }
            while rb == 0 {
                ib += 1;
                match b.get(ib) {
                    Some(&c) => rb = c as u64,
                    None => return Ok(inter),
                }
            }
            let step = ra.min(rb);
            if ia % 2 == 1 && ib % 2 == 1 {
                inter += step;
            }
            ra -= step;
            rb -= step;
        }
    }

    /// COCO compressed string form of the counts.
    pub fn to_compressed(&self) -> String {
        let mut s = String::new();
        for (i, &c) in self.counts.iter().enumerate() {
            let mut x = c as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let mut ch = (x & 0x1f) as u8;
                x >>= 5;
                let more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    ch |= 0x20;
                }
                s.push((ch + 48) as char);
                if !more {
                    break;
                }
            }
        }
        s
    }

    pub fn from_compressed(width: u32, height: u32, s: &str) -> Result<Self, RleError> {
        let bytes = s.as_bytes();
        let mut counts: Vec<u32> = Vec::new();
        let mut p = 0;
        while p < bytes.len() {
            let mut x: i64 = 0;
            let mut k = 0;
            loop {
                let b = *bytes
                    .get(p)
                    .ok_or_else(|| RleError::BadString("string ends inside a count".into()))?;
                if !(48..48 + 64).contains(&b) {
                    return Err(RleError::BadString(format!("byte {b} out of range")));
                }
                if k >= 12 {
                    return Err(RleError::BadString("count too long".into()));
                }
                let c = (b - 48) as i64;
                x |= (c & 0x1f) << (5 * k);
                p += 1;
                k += 1;
                if c & 0x20 == 0 {
                    if c & 0x10 != 0 {
                        x |= -1i64 << (5 * k);
                    }
                    break;
                }
            }
            let m = counts.len();
            if m > 2 {
                x += counts[m - 2] as i64;
            }
            let c = u32::try_from(x)
                .map_err(|_| RleError::BadString(format!("count {x} out of range")))?;
            counts.push(c);
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }
}

impl Serialize for RleMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("RleMask", 2)?;
        st.serialize_field("counts", &self.counts)?;
        st.serialize_field("size", &[self.height, self.width])?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for RleMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Counts {
            Raw(Vec<u32>),
            Compressed(String),
        }
        #[derive(Deserialize)]
        struct Raw {
            counts: Counts,
            size: [u32; 2],
        }
        let raw = Raw::deserialize(d)?;
        let [height, width] = raw.size;
        match raw.counts {
            Counts::Raw(counts) => Ok(RleMask {
                width,
                height,
                counts,
            }),
            Counts::Compressed(s) => {
                RleMask::from_compressed(width, height, &s).map_err(de::Error::custom)
            }
        }
    }
}

/// Axis-aligned box `(x, y, w, h)` in pixels, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // Integral values are written without a fractional part, as COCO
        // ground truth usually is.
        struct Num(f64);
        impl Serialize for Num {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                if self.0.fract() == 0.0 && self.0.abs() < 9.0e15 {
                    s.serialize_i64(self.0 as i64)
                } else {
                    s.serialize_f64(self.0)
                }
            }
        }
        [Num(self.x), Num(self.y), Num(self.w), Num(self.h)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(d)?;
        if !(w >= 0.0 && h >= 0.0) || ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(de::Error::custom(format!(
                "bbox [{x}, {y}, {w}, {h}] needs finite values and w, h >= 0"
            )));
        }
        Ok(BBox { x, y, w, h })
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

/// One visible instance in one image. Field order is the serialized key
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub area: u64,
    pub bbox: BBox,
    pub category_id: u64,
    #[serde(rename = "id")]
    pub annotation_id: u64,
    pub image_id: u64,
    #[serde(default)]
    pub iscrowd: u8,
    pub segmentation: RleMask,
}

pub fn encode_rle(mask: &BinaryMask) -> RleMask {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for col in 0..w {
        for row in 0..h {
            let v = mask.data[row * w + col];
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask {
        width: mask.width,
        height: mask.height,
        counts,
    }
}

pub fn decode_rle(r: &RleMask) -> Result<BinaryMask, RleError> {
    r.check_length()?;
    let mut mask = BinaryMask::new(r.width, r.height);
    let h = r.height as u64;
    for (start, len) in r.ones_runs() {
        for p in start..start + len {
            let (col, row) = (p / h, p % h);
            mask.set(row as u32, col as u32, true);
        }
    }
    Ok(mask)
}

/// Tight box by a full scan of the plane.
pub fn mask_to_bbox(mask: &BinaryMask) -> Result<BBox, RleError> {
    let mut lo = [u32::MAX; 2];
    let mut hi = [0u32; 2];
    let mut any = false;
    for row in 0..mask.height {
        for col in 0..mask.width {
            if mask.get(row, col) {
                any = true;
                lo = [lo[0].min(col), lo[1].min(row)];
                hi = [hi[0].max(col), hi[1].max(row)];
            }
        }
    }
    if !any {
        return Err(RleError::EmptyMask);
    }
    Ok(BBox::new(
        lo[0] as f64,
        lo[1] as f64,
        (hi[0] - lo[0] + 1) as f64,
        (hi[1] - lo[1] + 1) as f64,
    ))
}

/// Instances seen in a frame but left out of the annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    /// `(instance_id, visible_pixels)` for instances under `min_area`.
    pub below_min_area: Vec<(u32, u64)>,
}

struct RunBuilder {
    counts: Vec<u32>,
    // Linear position one past the last 1-pixel seen.
    end: u64,
    area: u64,
    min: [u32; 2],
    max: [u32; 2],
}

impl RunBuilder {
    fn new() -> Self {
        Self {
            counts: Vec::new(),
            end: 0,
            area: 0,
            min: [u32::MAX; 2],
            max: [0; 2],
        }
    }

    fn push(&mut self, pos: u64, col: u32, row: u32) {
        if self.area > 0 && pos == self.end {
            *self.counts.last_mut().expect("open run") += 1;
        } else {
            self.counts.push((pos - self.end) as u32);
            self.counts.push(1);
        }
        self.end = pos + 1;
        self.area += 1;
        self.min = [self.min[0].min(col), self.min[1].min(row)];
        self.max = [self.max[0].max(col), self.max[1].max(row)];
    }
}

/// One annotation per instance with at least `min_area` visible pixels,
/// ordered by instance ID and numbered from 1. Masks are exactly the pixels
/// the ID plane assigns to each instance.
pub fn extract_instances(
    fb: &FrameBuffers,
    image_id: u64,
    min_area: u64,
) -> (Vec<InstanceAnnotation>, ExtractionReport) {
    extract_from_ids(&fb.instance_id, fb.width, fb.height, image_id, min_area)
}

/// [`extract_instances`] over a bare row-major ID plane.
pub fn extract_from_ids(
    ids: &[u32],
    width: u32,
    height: u32,
    image_id: u64,
    min_area: u64,
) -> (Vec<InstanceAnnotation>, ExtractionReport) {
    assert_eq!(ids.len(), width as usize * height as usize, "ID plane size");
    let (w, h) = (width as usize, height as usize);
    let max_id = ids.iter().copied().max().unwrap_or(0) as usize;
    let builders: Vec<(u32, RunBuilder)> = if max_id <= ids.len().max(1 << 16) {
        let mut slots: Vec<Option<RunBuilder>> = Vec::new();
        slots.resize_with(max_id + 1, || None);
        for col in 0..w {
            for row in 0..h {
                let id = ids[row * w + col];
                if id != 0 {
                    slots[id as usize].get_or_insert_with(RunBuilder::new).push(
                        (col * h + row) as u64,
                        col as u32,
                        row as u32,
                    );
                }
            }
        }
        slots
            .into_iter()
            .enumerate()
            .filter_map(|(id, b)| b.map(|b| (id as u32, b)))
            .collect()
    } else {
        let mut map: BTreeMap<u32, RunBuilder> = BTreeMap::new();
        for col in 0..w {
            for row in 0..h {
                let id = ids[row * w + col];
                if id != 0 {
                    map.entry(id).or_insert_with(RunBuilder::new).push(
                        (col * h + row) as u64,
                        col as u32,
                        row as u32,
                    );
                }
            }
        }
        map.into_iter().collect()
    };

    let total = (w * h) as u64;
    let mut annotations = Vec::new();
    let mut report = ExtractionReport::default();
    for (id, mut b) in builders {
        if b.area < min_area.max(1) {
            report.below_min_area.push((id, b.area));
            continue;
        }
        if b.end < total {
            b.counts.push((total - b.end) as u32);
        }
        annotations.push(InstanceAnnotation {
            area: b.area,
            bbox: BBox::new(
                b.min[0] as f64,
                b.min[1] as f64,
                (b.max[0] - b.min[0] + 1) as f64,
                (b.max[1] - b.min[1] + 1) as f64,
            ),
            category_id: CHICKEN_CATEGORY_ID,
            annotation_id: annotations.len() as u64 + 1,
            image_id,
            iscrowd: 0,
            segmentation: RleMask {
                width,
                height,
                counts: b.counts,
            },
        });
    }
    (annotations, report)
}
