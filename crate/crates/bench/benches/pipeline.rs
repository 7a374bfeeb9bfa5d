use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pilegen_bench::{demo_config, demo_frames, ellipse_mask, eval_fixture};
use pilegen_core::annotate::{decode_rle, encode_rle, extract_instances};
use pilegen_core::eval::{evaluate, iou_mask};
use pilegen_core::render::rasterize;

fn rle(c: &mut Criterion) {
    let m = ellipse_mask(640, 640, 0.0);
    let r = encode_rle(&m);
    c.bench_function("rle_encode_640", |b| b.iter(|| encode_rle(black_box(&m))));
    c.bench_function("rle_decode_640", |b| {
        b.iter(|| decode_rle(black_box(&r)).unwrap())
    });
    let other = encode_rle(&ellipse_mask(640, 640, 0.1));
    c.bench_function("iou_mask_640", |b| {
        b.iter(|| iou_mask(black_box(&r), black_box(&other)).unwrap())
    });
}

fn render(c: &mut Criterion) {
    let cfg = demo_config();
    let meshes = cfg.load_meshes().unwrap();
    let scene =
        pilegen_core::pipeline::render_image(&cfg, &meshes, cfg.seed, 1, &mut Default::default())
            .unwrap()
            .scene;
    c.bench_function("rasterize_demo_640", |b| {
        b.iter(|| {
            rasterize(
                &scene.instances,
                &meshes,
                &scene.camera,
                &scene.lights,
                cfg.image_size,
                &cfg.render,
            )
            .unwrap()
        })
    });
    let fb = demo_frames(&cfg, &meshes, 2).pop().unwrap();
    c.bench_function("extract_instances_640", |b| {
        b.iter(|| extract_instances(black_box(&fb), 1, 64))
    });
}

fn eval(c: &mut Criterion) {
    let cfg = demo_config();
    let meshes = cfg.load_meshes().unwrap();
    let frames = demo_frames(&cfg, &meshes, 20);
    let (gt, dets) = eval_fixture(&frames);
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(20);
    group.bench_function("evaluate_20_images", |b| {
        b.iter(|| evaluate(&gt, &dets).unwrap())
    });
    group.finish();
}

criterion_group!(benches, rle, render, eval);
criterion_main!(benches);
