//! Seeded train/val/test partitioning of a real dataset and composition of
//! hybrid real+synthetic training sets.
//!
//! Both operations draw permutations from ChaCha8 seeded with the mix seed,
//! on separate streams: stream 0 shuffles real images, stream 1 the
//! synthetic pool. Every synthetic setting takes a prefix of the same pool
//! permutation, so smaller settings are subsets of larger ones.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coco_io::{Category, CocoDataset, CocoError, ImageInfo};

pub const SPLIT_STREAM: u64 = 0;
pub const POOL_STREAM: u64 = 1;

// Absorbs representation error in n * fraction before flooring, so that
// e.g. 100 * 0.29 cuts at 29 rather than 28.
const CUT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("invalid mix spec: {0}")]
    InvalidSpec(String),
    #[error("split '{split}' would be empty ({images} images, fractions {fractions:?})")]
    EmptySplit {
        split: &'static str,
        images: usize,
        fractions: [f64; 3],
    },
    #[error("requested {requested} synthetic images but the pool holds {available}")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("category {id} is named '{a}' in one dataset and '{b}' in the other")]
    CategoryConflict { id: u64, a: String, b: String },
    #[error(transparent)]
    Coco(#[from] CocoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// (train, val, test), each positive, summing to 1.
    pub split_fractions: [f64; 3],
    pub synthetic_count: usize,
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            split_fractions: [0.2, 0.2, 0.6],
            synthetic_count: 0,
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<(), MixError> {
        let f = self.split_fractions;
        if f.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(MixError::InvalidSpec(format!(
                "split fractions {f:?} must all be positive"
            )));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MixError::InvalidSpec(format!(
                "split fractions {f:?} must sum to 1"
            )));
        }
        Ok(())
    }
}

/// Counts and ratio for one training setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub setting: String,
    pub train_real: usize,
    pub train_synthetic: usize,
    pub train_total: usize,
    pub val: Option<usize>,
    pub test: Option<usize>,
    pub synthetic_pool: usize,
    /// Synthetic images per real training image; absent with no real images.
    pub ratio: Option<f64>,
    /// The same ratio as a reduced fraction `[numerator, denominator]`.
    pub ratio_fraction: Option<[u64; 2]>,
    pub seed: u64,
    pub pool_stream: u64,
}

/// Name used for a setting in file names and reports.
pub fn setting_name(synthetic_count: usize) -> String {
    if synthetic_count == 0 {
        "real_baseline".into()
    } else {
        format!("real_syn{synthetic_count}")
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn ratio_fraction(synthetic: usize, real: usize) -> Option<[u64; 2]> {
    if real == 0 {
        return None;
    }
    let (s, r) = (synthetic as u64, real as u64);
    let g = gcd(s, r).max(1);
    Some([s / g, r / g])
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sorted_image_ids(d: &CocoDataset) -> Vec<u64> {
    let mut ids: Vec<u64> = d.images.iter().map(|i| i.id).collect();
    ids.sort_unstable();
    ids
}

/// Sub-dataset holding the given images (original ids kept) and their
/// annotations.
fn subset(d: &CocoDataset, ids: &[u64], split: &str) -> CocoDataset {
    let keep: std::collections::HashSet<u64> = ids.iter().copied().collect();
    let mut out = CocoDataset {
        images: d
            .images
            .iter()
            .filter(|i| keep.contains(&i.id))
            .cloned()
            .collect(),
        annotations: d
            .annotations
            .iter()
            .filter(|a| keep.contains(&a.image_id))
            .cloned()
            .collect(),
        categories: d.categories.clone(),
        info: d.info.clone(),
    };
    out.info.insert("split".into(), Value::from(split));
    out.canonicalize();
    out
}

/// Train / val / test partition of `d`'s images.
pub fn split_real(
    d: &CocoDataset,
    spec: &MixSpec,
) -> Result<(CocoDataset, CocoDataset, CocoDataset), MixError> {
    spec.validate()?;
    d.validate()?;
    let mut ids = sorted_image_ids(d);
    ids.shuffle(&mut rng(spec.seed, SPLIT_STREAM));
    let n = ids.len();
    let [ft, fv, _] = spec.split_fractions;
    let cut1 = ((n as f64 * ft) + CUT_EPSILON).floor() as usize;
    let cut2 = ((n as f64 * (ft + fv)) + CUT_EPSILON).floor().min(n as f64) as usize;
    for (split, len) in [("train", cut1), ("val", cut2 - cut1), ("test", n - cut2)] {
        if len == 0 {
            return Err(MixError::EmptySplit {
                split,
                images: n,
                fractions: spec.split_fractions,
            });
        }
    }
    Ok((
        subset(d, &ids[..cut1], "train"),
        subset(d, &ids[cut1..cut2], "val"),
        subset(d, &ids[cut2..], "test"),
    ))
}

fn merge_categories(a: &[Category], b: &[Category]) -> Result<Vec<Category>, MixError> {
    let mut by_id: BTreeMap<u64, Category> = BTreeMap::new();
    for c in a.iter().chain(b) {
        match by_id.get(&c.id) {
            Some(existing) if existing.name != c.name => {
                return Err(MixError::CategoryConflict {
                    id: c.id,
                    a: existing.name.clone(),
                    b: c.name.clone(),
                })
            }
            Some(_) => {}
            None => {
                by_id.insert(c.id, c.clone());
            }
        }
    }
    Ok(by_id.into_values().collect())
}

/// All of `real_train` plus the first `spec.synthetic_count` images of the
/// seeded pool permutation, re-indexed densely from 1 with real images
/// first.
pub fn compose_training_set(
    real_train: &CocoDataset,
    synthetic_pool: &CocoDataset,
    spec: &MixSpec,
) -> Result<(CocoDataset, MixReport), MixError> {
    real_train.validate()?;
    synthetic_pool.validate()?;
    let pool_size = synthetic_pool.images.len();
    if spec.synthetic_count > pool_size {
        return Err(MixError::PoolTooSmall {
            requested: spec.synthetic_count,
            available: pool_size,
        });
    }
    let real_ids = sorted_image_ids(real_train);
    let mut pool_ids = sorted_image_ids(synthetic_pool);
    pool_ids.shuffle(&mut rng(spec.seed, POOL_STREAM));
    pool_ids.truncate(spec.synthetic_count);

    let mut out = CocoDataset {
        categories: merge_categories(&real_train.categories, &synthetic_pool.categories)?,
        ..Default::default()
    };
    let mut provenance = Vec::with_capacity(real_ids.len() + pool_ids.len());
    let sources = [
        ("real", real_train, &real_ids),
        ("synthetic", synthetic_pool, &pool_ids),
    ];
    for (source, dataset, ids) in sources {
        let images: BTreeMap<u64, &ImageInfo> = dataset.images.iter().map(|i| (i.id, i)).collect();
        let by_image = dataset.annotations_by_image();
        for &old_id in ids.iter() {
            let new_id = out.images.len() as u64 + 1;
            let img = images[&old_id];
            out.images.push(ImageInfo {
                id: new_id,
                ..img.clone()
            });
            provenance.push(json!({"id": new_id, "source": source, "source_id": old_id}));
            let mut anns = by_image.get(&old_id).cloned().unwrap_or_default();
            anns.sort_by_key(|a| a.annotation_id);
            for a in anns {
                let mut a = a.clone();
                a.annotation_id = out.annotations.len() as u64 + 1;
                a.image_id = new_id;
                out.annotations.push(a);
            }
        }
    }

    let report = MixReport {
        setting: setting_name(spec.synthetic_count),
        train_real: real_ids.len(),
        train_synthetic: pool_ids.len(),
        train_total: out.images.len(),
        val: None,
        test: None,
        synthetic_pool: pool_size,
        ratio: (!real_ids.is_empty()).then(|| pool_ids.len() as f64 / real_ids.len() as f64),
        ratio_fraction: ratio_fraction(pool_ids.len(), real_ids.len()),
        seed: spec.seed,
        pool_stream: POOL_STREAM,
    };
    out.info
        .insert("provenance".into(), Value::from(provenance));
    out.info
        .insert("setting".into(), Value::from(report.setting.clone()));
    out.info.insert("mix_seed".into(), Value::from(spec.seed));
    out.info.insert(
        "synthetic_subsets".into(),
        Value::from("nested-permutation-prefix"),
    );
    Ok((out, report))
}

/// Every output of one mix run.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub val: CocoDataset,
    pub test: CocoDataset,
    pub settings: Vec<(CocoDataset, MixReport)>,
}

/// Splits `real` once, then composes one training set per synthetic count.
pub fn run_mix(
    real: &CocoDataset,
    synthetic_pool: &CocoDataset,
    synthetic_counts: &[usize],
    split_fractions: [f64; 3],
    seed: u64,
) -> Result<MixOutcome, MixError> {
    let base = MixSpec {
        split_fractions,
        synthetic_count: 0,
        seed,
    };
    if let Some(&too_many) = synthetic_counts
        .iter()
        .find(|&&n| n > synthetic_pool.images.len())
    {
        return Err(MixError::PoolTooSmall {
            requested: too_many,
            available: synthetic_pool.images.len(),
        });
    }
    let (train, val, test) = split_real(real, &base)?;
    let settings = synthetic_counts
        .iter()
        .map(|&n| {
            let spec = MixSpec {
                synthetic_count: n,
                ..base.clone()
            };
            let (d, mut report) = compose_training_set(&train, synthetic_pool, &spec)?;
            report.val = Some(val.images.len());
            report.test = Some(test.images.len());
            Ok((d, report))
        })
        .collect::<Result<_, MixError>>()?;
    Ok(MixOutcome {
        val,
        test,
        settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{InstanceAnnotation, RleMask};

    pub(crate) fn dataset(n: u64, tag: &str) -> CocoDataset {
        let mut d = CocoDataset::new();
        for id in 1..=n {
            d.images.push(ImageInfo {
                file_name: format!("{tag}_{id:04}.png"),
                height: 4,
                id,
                width: 4,
            });
            let seg = RleMask::new(4, 4, vec![(id % 10) as u32, 1, 15 - (id % 10) as u32]).unwrap();
            d.annotations.push(InstanceAnnotation {
                area: 1,
                bbox: seg.bbox().unwrap(),
                category_id: 1,
                annotation_id: id,
                image_id: id,
                iscrowd: 0,
                segmentation: seg,
            });
        }
        d
    }

    #[test]
    fn three_hundred_split_sixty_sixty_one_eighty() {
        let d = dataset(300, "real");
        let (tr, va, te) = split_real(&d, &MixSpec::default()).unwrap();
        assert_eq!(
            (tr.images.len(), va.images.len(), te.images.len()),
            (60, 60, 180)
        );
        let mut all: Vec<u64> = [&tr, &va, &te]
            .iter()
            .flat_map(|s| s.images.iter().map(|i| i.id))
            .collect();
        all.sort();
        assert_eq!(all, (1..=300).collect::<Vec<_>>());
        for s in [&tr, &va, &te] {
            for a in &s.annotations {
                assert!(s.image(a.image_id).is_some());
            }
        }
    }

    #[test]
    fn zero_fraction_rejected() {
        let d = dataset(10, "real");
        let spec = MixSpec {
            split_fractions: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        assert!(matches!(
            split_real(&d, &spec),
            Err(MixError::InvalidSpec(_))
        ));
        let tiny = dataset(3, "real");
        assert!(matches!(
            split_real(&tiny, &MixSpec::default()),
            Err(MixError::EmptySplit { .. })
        ));
    }

    #[test]
    fn seed_controls_permutation() {
        let d = dataset(50, "real");
        let ids = |seed| {
            let spec = MixSpec {
                seed,
                ..Default::default()
            };
            let (tr, _, _) = split_real(&d, &spec).unwrap();
            tr.images.iter().map(|i| i.id).collect::<Vec<_>>()
        };
        assert_eq!(ids(3), ids(3));
        assert_ne!(ids(3), ids(4));
    }

    #[test]
    fn baseline_and_ratios() {
        let real = dataset(60, "real");
        let pool = dataset(1000, "syn");
        let (d, r) = compose_training_set(&real, &pool, &MixSpec::default()).unwrap();
        assert_eq!(d.images.len(), 60);
        assert_eq!(r.ratio, Some(0.0));
        for (n, total, frac) in [(250, 310, [25, 6]), (1000, 1060, [50, 3])] {
            let spec = MixSpec {
                synthetic_count: n,
                ..Default::default()
            };
            let (d, r) = compose_training_set(&real, &pool, &spec).unwrap();
            assert_eq!(d.images.len(), total);
            assert_eq!(r.ratio_fraction, Some(frac));
            assert_eq!(r.ratio, Some(frac[0] as f64 / frac[1] as f64));
            // Real images first, ids dense.
            assert!(d
                .images
                .iter()
                .enumerate()
                .all(|(k, i)| i.id == k as u64 + 1));
            assert!(d.images[..60]
                .iter()
                .all(|i| i.file_name.starts_with("real")));
            assert!(d.images[60..]
                .iter()
                .all(|i| i.file_name.starts_with("syn")));
            d.validate().unwrap();
        }
        let spec = MixSpec {
            synthetic_count: 1001,
            ..Default::default()
        };
        assert!(matches!(
            compose_training_set(&real, &pool, &spec),
            Err(MixError::PoolTooSmall { .. })
        ));
    }

    #[test]
    fn masks_follow_their_images() {
        let real = dataset(5, "real");
        let pool = dataset(20, "syn");
        let spec = MixSpec {
            synthetic_count: 7,
            seed: 11,
            ..Default::default()
        };
        let (d, _) = compose_training_set(&real, &pool, &spec).unwrap();
        let prov = d.info["provenance"].as_array().unwrap();
        for a in &d.annotations {
            let p = &prov[(a.image_id - 1) as usize];
            let src = if p["source"] == "real" { &real } else { &pool };
            let sid = p["source_id"].as_u64().unwrap();
            let orig: Vec<_> = src
                .annotations
                .iter()
                .filter(|x| x.image_id == sid)
                .collect();
            assert_eq!(orig.len(), 1);
            assert_eq!(orig[0].segmentation, a.segmentation);
            assert_eq!(orig[0].bbox, a.bbox);
        }
    }

    #[test]
    fn smaller_settings_are_prefixes() {
        let real = dataset(6, "real");
        let pool = dataset(40, "syn");
        let out = run_mix(&real, &pool, &[5, 10, 20], [0.5, 0.25, 0.25], 9).unwrap();
        let names: Vec<Vec<String>> = out
            .settings
            .iter()
            .map(|(d, _)| {
                d.images
                    .iter()
                    .skip(3)
                    .map(|i| i.file_name.clone())
                    .collect()
            })
            .collect();
        assert_eq!(names[0][..], names[1][..5]);
        assert_eq!(names[1][..], names[2][..10]);
    }
}
