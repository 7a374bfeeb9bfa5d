//! Fixtures shared by the benchmarks.

use std::path::{Path, PathBuf};

use pilegen_core::annotate::{BinaryMask, InstanceAnnotation};
use pilegen_core::coco_io::{detections_from_ground_truth, CocoDataset, Detection};
use pilegen_core::pipeline::{render_image, GeneratorConfig, StageTimings};
use pilegen_core::render::FrameBuffers;
use pilegen_core::Mesh;

pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn demo_config() -> GeneratorConfig {
    GeneratorConfig::load(assets_dir().join("demo.toml")).expect("demo config loads")
}

/// A filled ellipse covering roughly a third of the plane.
pub fn ellipse_mask(width: u32, height: u32, shift: f64) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    let (cx, cy) = (width as f64 * (0.5 + shift), height as f64 / 2.0);
    let (rx, ry) = (width as f64 * 0.35, height as f64 * 0.3);
    for row in 0..height {
        for col in 0..width {
            let dx = (col as f64 + 0.5 - cx) / rx;
            let dy = (row as f64 + 0.5 - cy) / ry;
            m.set(row, col, dx * dx + dy * dy <= 1.0);
        }
    }
    m
}

/// Rendered frames of the first `n` images under the demo config.
pub fn demo_frames(cfg: &GeneratorConfig, meshes: &[Mesh], n: u64) -> Vec<FrameBuffers> {
    (0..n)
        .map(|i| {
            render_image(cfg, meshes, cfg.seed, i, &mut StageTimings::default())
                .expect("demo scene renders")
                .frame
        })
        .collect()
}

/// Ground truth from rendered frames plus detections that are the ground
/// truth with decreasing scores.
pub fn eval_fixture(frames: &[FrameBuffers]) -> (CocoDataset, Vec<Detection>) {
    let mut gt = CocoDataset::new();
    for (i, fb) in frames.iter().enumerate() {
        let image_id = i as u64 + 1;
        gt.images.push(pilegen_core::ImageInfo {
            file_name: format!("{image_id:06}.png"),
            height: fb.height,
            id: image_id,
            width: fb.width,
        });
        let (anns, _) = pilegen_core::annotate::extract_instances(fb, image_id, 64);
        for a in anns {
            gt.annotations.push(InstanceAnnotation {
                annotation_id: gt.annotations.len() as u64 + 1,
                ..a
            });
        }
    }
    let mut dets = detections_from_ground_truth(&gt);
    let n = dets.len().max(1) as f64;
    for (k, d) in dets.iter_mut().enumerate() {
        d.score = 1.0 - k as f64 / n;
    }
    (gt, dets)
}
