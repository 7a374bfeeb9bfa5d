//! Test-only helpers: a random scenario generator and a brute-force
//! evaluator that works on decoded pixel planes.
#![allow(dead_code)]

use pilegen_core::annotate::{BBox, BinaryMask, InstanceAnnotation, RleMask};
use pilegen_core::coco_io::{Category, CocoDataset, Detection, ImageInfo};
use rand::Rng;

pub const THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// Column-major expansion of uncompressed counts.
pub fn plane(m: &RleMask) -> Vec<bool> {
    let mut out = Vec::with_capacity(m.width as usize * m.height as usize);
    let mut v = false;
    for &c in &m.counts {
        out.extend(std::iter::repeat_n(v, c as usize));
        v = !v;
    }
    out
}

/// Row-major plane to column-major RLE, written independently of the crate.
pub fn rle_from_rows(data: &[bool], width: u32, height: u32) -> RleMask {
    let mut counts = Vec::new();
    let mut cur = false;
    let mut run = 0u32;
    for x in 0..width as usize {
        for y in 0..height as usize {
            let v = data[y * width as usize + x];
            if v != cur {
                counts.push(run);
                run = 0;
                cur = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask {
        width,
        height,
        counts,
    }
}

pub fn tight_box(data: &[bool], width: u32) -> Option<BBox> {
    let w = width as usize;
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in data.iter().enumerate().filter(|(_, &v)| v) {
        let (x, y) = (i % w, i / w);
        b = Some(match b {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    b.map(|(x0, y0, x1, y1)| {
        BBox::new(
            x0 as f64,
            y0 as f64,
            (x1 - x0 + 1) as f64,
            (y1 - y0 + 1) as f64,
        )
    })
}

fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn plane_iou(a: &RleMask, b: &RleMask) -> f64 {
    let (pa, pb) = (plane(a), plane(b));
    let inter = pa.iter().zip(&pb).filter(|(x, y)| **x && **y).count();
    let union = pa.iter().zip(&pb).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// AP at every threshold for one IoU kind, by direct enumeration.
fn naive_kind(gt: &CocoDataset, dets: &[Detection], segm: bool) -> [Option<f64>; 10] {
    let mut out = [None; 10];
    for (ti, &t) in THRESHOLDS.iter().enumerate() {
        let mut aps = Vec::new();
        for cat in &gt.categories {
            let n_gt = gt
                .annotations
                .iter()
                .filter(|a| a.category_id == cat.id)
                .count();
            if n_gt == 0 {
                continue;
            }
            // (score, input index, tp)
            let mut outcomes: Vec<(f64, usize, bool)> = Vec::new();
            for img in &gt.images {
                let gts: Vec<&InstanceAnnotation> = gt
                    .annotations
                    .iter()
                    .filter(|a| a.image_id == img.id && a.category_id == cat.id)
                    .collect();
                let mut ds: Vec<(usize, &Detection)> = dets
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.image_id == img.id && d.category_id == cat.id)
                    .collect();
                ds.sort_by(|a, b| {
                    b.1.score
                        .partial_cmp(&a.1.score)
                        .unwrap()
                        .then(a.0.cmp(&b.0))
                });
                ds.truncate(100);
                let mut taken = vec![false; gts.len()];
                for (i, d) in ds {
                    let mut best: Option<(usize, f64)> = None;
                    for (g, a) in gts.iter().enumerate() {
                        let iou = if segm {
                            plane_iou(d.segmentation.as_ref().unwrap(), &a.segmentation)
                        } else {
                            box_iou(&d.bbox, &a.bbox)
                        };
                        if !taken[g] && iou >= t && best.is_none_or(|(_, b)| iou > b) {
                            best = Some((g, iou));
                        }
                    }
                    if let Some((g, _)) = best {
                        taken[g] = true;
                    }
                    outcomes.push((d.score, i, best.is_some()));
                }
            }
            outcomes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut curve = Vec::new();
            let mut tp = 0;
            for (k, o) in outcomes.iter().enumerate() {
                tp += o.2 as usize;
                curve.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
            }
            let mut sum = 0.0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                let p = curve
                    .iter()
                    .filter(|(rec, _)| *rec >= r)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max);
                sum += p;
            }
            aps.push(sum / 101.0);
        }
        if !aps.is_empty() {
            out[ti] = Some(aps.iter().sum::<f64>() / aps.len() as f64);
        }
    }
    out
}

/// The six headline numbers: bbox mAP, AP50, AP75, then the same for masks.
pub fn naive_evaluate(gt: &CocoDataset, dets: &[Detection]) -> [Option<f64>; 6] {
    let mut out = [None; 6];
    for (k, segm) in [false, true].into_iter().enumerate() {
        let per = naive_kind(gt, dets, segm);
        let defined: Vec<f64> = per.iter().flatten().copied().collect();
        out[k * 3] =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        out[k * 3 + 1] = per[0];
        out[k * 3 + 2] = per[5];
    }
    out
}

fn random_plane(rng: &mut impl Rng, w: u32, h: u32) -> Vec<bool> {
    let (w, h) = (w as usize, h as usize);
    let x0 = rng.gen_range(0..w);
    let y0 = rng.gen_range(0..h);
    let x1 = rng.gen_range(x0..w);
    let y1 = rng.gen_range(y0..h);
    let noise = rng.gen_range(0.0..0.3);
    let mut data = vec![false; w * h];
    for y in y0..=y1 {
        for x in x0..=x1 {
            data[y * w + x] = !rng.gen_bool(noise);
        }
    }
    data[y0 * w + x0] = true;
    data
}

fn jitter_plane(rng: &mut impl Rng, src: &[bool], w: u32, h: u32) -> Vec<bool> {
    let (w, h) = (w as i64, h as i64);
    let (dx, dy) = (rng.gen_range(-2..=2), rng.gen_range(-2..=2));
    let flip = rng.gen_range(0.0..0.15);
    let mut out = vec![false; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x - dx, y - dy);
            let v = sx >= 0 && sy >= 0 && sx < w && sy < h && src[(sy * w + sx) as usize];
            out[(y * w + x) as usize] = v ^ rng.gen_bool(flip);
        }
    }
    out
}

/// Ground truth and detections for one randomized evaluation case:
/// up to 5 images, 4 ground-truth and 8 detections per image, masks up to
/// 64x64, one or two categories.
pub fn random_scenario(rng: &mut impl Rng) -> (CocoDataset, Vec<Detection>) {
    let mut gt = CocoDataset::new();
    let two_categories = rng.gen_bool(0.3);
    if two_categories {
        gt.categories.push(Category {
            id: 2,
            name: "other".into(),
        });
    }
    let n_cat = gt.categories.len() as u64;
    let mut dets = Vec::new();
    let scores = [0.9, 0.8, 0.5, 0.5, 0.3];
    for image_id in 1..=rng.gen_range(1..=5u64) {
        let (w, h) = (rng.gen_range(1..=64u32), rng.gen_range(1..=64u32));
        gt.images.push(ImageInfo {
            file_name: format!("{image_id}.png"),
            height: h,
            id: image_id,
            width: w,
        });
        let mut planes = Vec::new();
        for _ in 0..rng.gen_range(0..=4) {
            let data = random_plane(rng, w, h);
            let seg = rle_from_rows(&data, w, h);
            let category_id = rng.gen_range(1..=n_cat);
            gt.annotations.push(InstanceAnnotation {
                area: data.iter().filter(|&&v| v).count() as u64,
                bbox: tight_box(&data, w).unwrap(),
                category_id,
                annotation_id: gt.annotations.len() as u64 + 1,
                image_id,
                iscrowd: 0,
                segmentation: seg,
            });
            planes.push((data, category_id));
        }
        for _ in 0..rng.gen_range(0..=8) {
            let (data, category_id) = if !planes.is_empty() && rng.gen_bool(0.7) {
                let (src, c) = &planes[rng.gen_range(0..planes.len())];
                (jitter_plane(rng, src, w, h), *c)
            } else {
                (random_plane(rng, w, h), rng.gen_range(1..=n_cat))
            };
            let bbox = tight_box(&data, w).unwrap_or(BBox::new(0.0, 0.0, 1.0, 1.0));
            let score = if rng.gen_bool(0.3) {
                scores[rng.gen_range(0..scores.len())]
            } else {
                rng.gen_range(0.01..1.0)
            };
            dets.push(Detection {
                image_id,
                category_id,
                score,
                bbox,
                segmentation: Some(rle_from_rows(&data, w, h)),
            });
        }
    }
    (gt, dets)
}

pub fn report_array(r: &pilegen_core::eval::EvalReport) -> [Option<f64>; 6] {
    [
        r.bbox_map,
        r.bbox_map_50,
        r.bbox_map_75,
        r.segm_map,
        r.segm_map_50,
        r.segm_map_75,
    ]
}

pub fn close(a: [Option<f64>; 6], b: [Option<f64>; 6], tol: f64) -> bool {
    a.iter().zip(&b).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    })
}

/// Row-major binary mask helper.
pub fn binary(width: u32, height: u32, data: Vec<bool>) -> BinaryMask {
    BinaryMask {
        width,
        height,
        data,
    }
}

/// A valid dataset of `n` small images with 0..=3 random masks each.
pub fn toy_dataset(rng: &mut impl Rng, n: u64, tag: &str) -> CocoDataset {
    let mut d = CocoDataset::new();
    for image_id in 1..=n {
        let (w, h) = (rng.gen_range(4..=12u32), rng.gen_range(4..=12u32));
        d.images.push(ImageInfo {
            file_name: format!("{tag}_{image_id:04}.png"),
            height: h,
            id: image_id,
            width: w,
        });
        for _ in 0..rng.gen_range(0..=3) {
            let data = random_plane(rng, w, h);
            d.annotations.push(InstanceAnnotation {
                area: data.iter().filter(|&&v| v).count() as u64,
                bbox: tight_box(&data, w).unwrap(),
                category_id: 1,
                annotation_id: d.annotations.len() as u64 + 1,
                image_id,
                iscrowd: 0,
                segmentation: rle_from_rows(&data, w, h),
            });
        }
    }
    d
}
