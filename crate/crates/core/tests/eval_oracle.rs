mod support;

use pilegen_core::coco_io::Detection;
use pilegen_core::eval::{evaluate, match_detections};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{close, naive_evaluate, random_scenario, report_array};

#[test]
fn matches_brute_force_on_random_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..60 {
        let (gt, dets) = random_scenario(&mut rng);
        let got = report_array(&evaluate(&gt, &dets).unwrap());
        let want = naive_evaluate(&gt, &dets);
        assert!(close(got, want, 1e-12), "case {case}: {got:?} vs {want:?}");
    }
}

#[test]
fn ground_truth_scores_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (gt, _) = random_scenario(&mut rng);
        let dets = pilegen_core::coco_io::detections_from_ground_truth(&gt);
        let r = report_array(&evaluate(&gt, &dets).unwrap());
        for v in r.into_iter().flatten() {
            assert_eq!(v, 1.0);
        }
    }
}

fn scaled(dets: &[Detection], k: f64) -> Vec<Detection> {
    dets.iter()
        .map(|d| Detection {
            score: d.score * k,
            ..d.clone()
        })
        .collect()
}

#[test]
fn monotonic_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let (gt, dets) = random_scenario(&mut rng);
        let base = report_array(&evaluate(&gt, &dets).unwrap());
        for (ap50, ap75) in [(base[1], base[2]), (base[4], base[5])] {
            if let (Some(a), Some(b)) = (ap50, ap75) {
                assert!(a >= b);
            }
        }
        // Halving is exact in binary floating point, so ranks are kept.
        assert_eq!(
            report_array(&evaluate(&gt, &scaled(&dets, 0.5)).unwrap()),
            base
        );

        if let Some(img) = gt.images.first() {
            let mut more = dets.clone();
            let empty = pilegen_core::annotate::RleMask::empty(img.width, img.height);
            more.push(Detection {
                image_id: img.id,
                category_id: 1,
                score: 0.0,
                bbox: pilegen_core::annotate::BBox::new(1e4, 1e4, 1.0, 1.0),
                segmentation: Some(empty),
            });
            let after = report_array(&evaluate(&gt, &more).unwrap());
            for (a, b) in after.iter().zip(&base) {
                if let (Some(a), Some(b)) = (a, b) {
                    assert!(a <= b);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn greedy_match_is_injective_and_maximal(
        rows in proptest::collection::vec(proptest::collection::vec(0u8..=10, 4), 0..8),
        t in 0u8..=10,
    ) {
        let ious: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64 / 10.0).collect()).collect();
        let thr = t as f64 / 10.0;
        let m = match_detections(&ious, 4, thr);
        let mut taken = [false; 4];
        for (d, row) in ious.iter().enumerate() {
            let free: Vec<usize> = (0..4).filter(|&g| !taken[g] && row[g] >= thr).collect();
            match m.matches[d] {
                Some(g) => {
                    prop_assert!(free.contains(&g));
                    let best = free.iter().map(|&f| row[f]).fold(f64::MIN, f64::max);
                    prop_assert_eq!(row[g], best);
                    prop_assert!(free.iter().all(|&f| row[f] < best || f >= g));
                    taken[g] = true;
                }
                None => prop_assert!(free.is_empty()),
            }
        }
        prop_assert_eq!(m.unmatched_gt, taken.iter().filter(|t| !**t).count());
    }
}
