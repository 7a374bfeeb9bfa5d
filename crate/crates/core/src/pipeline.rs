//! Dataset generation: config loading, per-image seed derivation, parallel
//! scene-render-annotate workers, resumable output, and the run manifest.
//!
//! Image `i` (0-based) of a run with master seed `s` is generated from
//! `derive_seed(s, i)` alone, so the output is independent of worker count
//! and of which images a resumed run had already finished.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::ExtendedColorType;
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{extract_instances, InstanceAnnotation, DEFAULT_MIN_AREA};
use crate::coco_io::{write_dataset, CocoDataset, CocoError, ImageInfo};
use crate::geometry::{apply_transform, load_mesh, GeometryError, Mesh, Transform, Vector};
use crate::render::{encode_png, rasterize, FrameBuffers, RenderError, RenderOptions};
use crate::scene::{
    default_top_camera, sample_scene, CameraModel, LayoutMode, Lighting, SampledScene, SceneError,
    SceneSpec,
};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "generation_report.json";
pub const IMAGES_DIR: &str = "images";
pub const PARTS_DIR: &str = "parts";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid config: {message}")]
    Config { path: PathBuf, message: String },
    #[error("model {path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
    #[error("image {image_id}: {source}")]
    Scene {
        image_id: u64,
        #[source]
        source: SceneError,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Coco(#[from] CocoError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("manifest config hash {stored} does not match recomputed {computed}")]
    HashMismatch { stored: String, computed: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Mesh files, relative to the config file.
    pub models: Vec<PathBuf>,
    /// Uniform scale applied to every model on load.
    pub model_scale: f64,
    /// Overrides the tint read from the model files.
    pub base_color: Option<[f64; 3]>,
    pub count_range: [u32; 2],
    /// Each image draws its layout uniformly from this list.
    pub layout_modes: Vec<LayoutMode>,
    pub table_extent: [f64; 2],
    pub max_footprint_overlap: f64,
    pub tilt_deg: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            model_scale: 1.0,
            base_color: None,
            count_range: [1, 8],
            layout_modes: LayoutMode::ALL.to_vec(),
            table_extent: [0.45, 0.45],
            max_footprint_overlap: 0.05,
            tilt_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub vertical_fov: f64,
    pub near: f64,
    pub far: f64,
    pub jitter_deg: f64,
    /// Explicit placement; the default is straight above the table.
    pub eye: Option<[f64; 3]>,
    pub look_at: Option<[f64; 3]>,
    pub up: Option<[f64; 3]>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            vertical_fov: 50.0,
            near: 0.05,
            far: 10.0,
            jitter_deg: 10.0,
            eye: None,
            look_at: None,
            up: None,
        }
    }
}

/// Top-level generation config (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub image_size: [u32; 2],
    pub min_area: u64,
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub lights: Lighting,
    pub render: RenderOptions,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_size: [640, 640],
            min_area: DEFAULT_MIN_AREA,
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            lights: Lighting::default(),
            render: RenderOptions::default(),
        }
    }
}

impl GeneratorConfig {
    /// Parses TOML; relative model paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut cfg: GeneratorConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        for m in &mut cfg.scene.models {
            if m.is_relative() {
                *m = base_dir.join(&*m);
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|message| PipelineError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    fn check(&self) -> Result<(), String> {
        if self.scene.models.is_empty() {
            return Err("scene.models must list at least one mesh".into());
        }
        if self.scene.layout_modes.is_empty() {
            return Err("scene.layout_modes must not be empty".into());
        }
        if !(self.scene.model_scale.is_finite() && self.scene.model_scale > 0.0) {
            return Err("scene.model_scale must be positive".into());
        }
        // Mode and seed do not affect validity.
        self.scene_spec(LayoutMode::Clustered, 0)
            .validate()
            .map_err(|e| e.to_string())
    }

    pub fn base_camera(&self) -> CameraModel {
        let c = &self.camera;
        let mut cam = default_top_camera(
            self.scene.table_extent,
            self.image_size,
            c.vertical_fov,
            c.near,
            c.far,
        );
        if let Some(eye) = c.eye {
            cam.eye = eye;
        }
        if let Some(at) = c.look_at {
            cam.look_at = at;
        }
        if let Some(up) = c.up {
            cam.up = up;
        }
        cam
    }

    pub fn scene_spec(&self, layout_mode: LayoutMode, seed: u64) -> SceneSpec {
        SceneSpec {
            model_paths: self.scene.models.clone(),
            count_range: self.scene.count_range,
            layout_mode,
            table_extent: self.scene.table_extent,
            max_footprint_overlap: self.scene.max_footprint_overlap,
            lights: self.lights.clone(),
            camera: self.base_camera(),
            camera_jitter_deg: self.camera.jitter_deg,
            tilt_deg: self.scene.tilt_deg,
            image_size: self.image_size,
            seed,
        }
    }

    /// Hex SHA-256 of the config's canonical JSON form.
    pub fn hash(&self) -> String {
        hash_config_value(&serde_json::to_value(self).expect("config serializes"))
    }

    pub fn load_meshes(&self) -> Result<Vec<Mesh>, PipelineError> {
        let scale = Transform::new(
            UnitQuaternion::identity(),
            Vector::zeros(),
            self.scene.model_scale,
        )
        .map_err(|e| PipelineError::Config {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        self.scene
            .models
            .iter()
            .map(|p| {
                let mesh = load_mesh(p).map_err(|source| PipelineError::Model {
                    path: p.clone(),
                    source,
                })?;
                let mesh = apply_transform(&mesh, &scale);
                Ok(match self.scene.base_color {
                    Some(c) => mesh.with_base_color(c),
                    None => mesh,
                })
            })
            .collect()
    }
}

pub fn hash_config_value(v: &Value) -> String {
    // serde_json's default map is ordered, so this is canonical.
    let bytes = serde_json::to_vec(v).expect("value serializes");
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Seed of image `index` under `master`: the first 8 bytes of
/// SHA-256(master || index), little-endian.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn image_file_name(image_id: u64) -> String {
    format!("{image_id:06}.png")
}

/// Everything known about one rendered image.
pub struct RenderedImage {
    pub scene: SampledScene,
    pub frame: FrameBuffers,
    /// Set when isolated placement failed and the clustered layout was used.
    pub fallback_from: Option<LayoutMode>,
}

/// Samples and renders image `index` of a run.
pub fn render_image(
    cfg: &GeneratorConfig,
    meshes: &[Mesh],
    master_seed: u64,
    index: u64,
    timings: &mut StageTimings,
) -> Result<RenderedImage, PipelineError> {
    let seed = derive_seed(master_seed, index);
    let mut mode_rng = ChaCha8Rng::seed_from_u64(seed);
    mode_rng.set_stream(1);
    let mode = cfg.scene.layout_modes[mode_rng.gen_range(0..cfg.scene.layout_modes.len())];

    let t = Instant::now();
    let (scene, fallback_from) = match sample_scene(&cfg.scene_spec(mode, seed), meshes) {
        Ok(s) => (s, None),
        Err(SceneError::RejectionExhausted { .. }) => {
            let s = sample_scene(&cfg.scene_spec(LayoutMode::Clustered, seed), meshes).map_err(
                |source| PipelineError::Scene {
                    image_id: index + 1,
                    source,
                },
            )?;
            (s, Some(mode))
        }
        Err(source) => {
            return Err(PipelineError::Scene {
                image_id: index + 1,
                source,
            })
        }
    };
    timings.scene += t.elapsed();

    let t = Instant::now();
    let frame = rasterize(
        &scene.instances,
        meshes,
        &scene.camera,
        &scene.lights,
        cfg.image_size,
        &cfg.render,
    )?;
    timings.render += t.elapsed();
    Ok(RenderedImage {
        scene,
        frame,
        fallback_from,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub scene: Duration,
    pub render: Duration,
    pub annotate: Duration,
    pub encode_write: Duration,
}

impl StageTimings {
    fn add(&mut self, o: &StageTimings) {
        self.scene += o.scene;
        self.render += o.render;
        self.annotate += o.annotate;
        self.encode_write += o.encode_write;
    }
}

/// Per-image sidecar written after the PNG; lets a rerun skip the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub seed: u64,
    pub config_hash: String,
    pub file_name: String,
    pub png_sha256: String,
    pub width: u32,
    pub height: u32,
    pub layout: LayoutMode,
    pub fallback_from: Option<LayoutMode>,
    pub placed: usize,
    /// Image-local annotation ids (1..).
    pub annotations: Vec<InstanceAnnotation>,
    pub below_min_area: Vec<(u32, u64)>,
    pub fully_occluded: Vec<u32>,
}

fn generate_one(
    cfg: &GeneratorConfig,
    config_hash: &str,
    meshes: &[Mesh],
    out_dir: &Path,
    index: u64,
) -> Result<(ImageRecord, StageTimings, bool), PipelineError> {
    let image_id = index + 1;
    let seed = derive_seed(cfg.seed, index);
    let file_name = image_file_name(image_id);
    let png_path = out_dir.join(IMAGES_DIR).join(&file_name);
    let part_path = out_dir.join(PARTS_DIR).join(format!("{image_id:06}.json"));

    if let Some(rec) = reusable_record(&part_path, &png_path, seed, config_hash) {
        return Ok((rec, StageTimings::default(), true));
    }

    let mut timings = StageTimings::default();
    let rendered = render_image(cfg, meshes, cfg.seed, index, &mut timings)?;

    let t = Instant::now();
    let (annotations, report) = extract_instances(&rendered.frame, image_id, cfg.min_area);
    let counts = rendered.frame.visible_counts();
    let fully_occluded = rendered
        .scene
        .instances
        .instances
        .iter()
        .map(|i| i.instance_id)
        .filter(|&id| counts.get(id as usize).copied().unwrap_or(0) == 0)
        .collect();
    timings.annotate += t.elapsed();

    let t = Instant::now();
    let png = encode_png(
        &rendered.frame.rgb,
        rendered.frame.width,
        rendered.frame.height,
        ExtendedColorType::Rgb8,
    )?;
    fs::write(&png_path, &png).map_err(io_err(&png_path))?;
    let rec = ImageRecord {
        image_id,
        seed,
        config_hash: config_hash.to_owned(),
        file_name,
        png_sha256: sha256_hex(&png),
        width: rendered.frame.width,
        height: rendered.frame.height,
        layout: rendered.scene.layout_mode,
        fallback_from: rendered.fallback_from,
        placed: rendered.scene.instances.len(),
        annotations,
        below_min_area: report.below_min_area,
        fully_occluded,
    };
    let part = serde_json::to_vec(&rec).expect("record serializes");
    fs::write(&part_path, part).map_err(io_err(&part_path))?;
    timings.encode_write += t.elapsed();
    Ok((rec, timings, false))
}

fn reusable_record(
    part_path: &Path,
    png_path: &Path,
    seed: u64,
    config_hash: &str,
) -> Option<ImageRecord> {
    let rec: ImageRecord = serde_json::from_slice(&fs::read(part_path).ok()?).ok()?;
    if rec.seed != seed || rec.config_hash != config_hash {
        return None;
    }
    let png = fs::read(png_path).ok()?;
    (sha256_hex(&png) == rec.png_sha256).then_some(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub image_id: u64,
    pub file_name: String,
    pub seed: u64,
    pub reused: bool,
}

/// Record of one `generate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub config: Value,
    pub master_seed: u64,
    pub output_dir: String,
    pub count: u64,
    pub jobs: usize,
    pub images: Vec<ManifestImage>,
    /// Wall-clock milliseconds; per-image stages are summed over workers.
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    /// Recomputes the config hash from the stored config.
    pub fn verify(&self) -> Result<(), PipelineError> {
        let computed = hash_config_value(&self.config);
        if computed == self.config_hash {
            Ok(())
        } else {
            Err(PipelineError::HashMismatch {
                stored: self.config_hash.clone(),
                computed,
            })
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Dropped-instance accounting for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub images: u64,
    pub annotations: u64,
    pub instances_placed: u64,
    pub below_min_area: u64,
    pub fully_occluded: u64,
    pub layout_fallbacks: u64,
    pub min_area: u64,
    pub per_image: Vec<Value>,
}

pub struct GenerateOutcome {
    pub manifest: RunManifest,
    pub report: GenerationReport,
    pub dataset: CocoDataset,
}

/// Generates `count` images into `out_dir` with at most `jobs` workers.
/// `progress` is called with (finished, total) as images complete.
pub fn generate(
    cfg: &GeneratorConfig,
    count: u64,
    out_dir: &Path,
    jobs: usize,
    progress: &(dyn Fn(u64, u64) + Sync),
) -> Result<GenerateOutcome, PipelineError> {
    let wall = Instant::now();
    for dir in [
        out_dir.to_path_buf(),
        out_dir.join(IMAGES_DIR),
        out_dir.join(PARTS_DIR),
    ] {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let config_hash = cfg.hash();
    let t = Instant::now();
    let meshes = if count > 0 {
        cfg.load_meshes()?
    } else {
        Vec::new()
    };
    let load_time = t.elapsed();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let done = std::sync::atomic::AtomicU64::new(0);
    let results: Vec<(ImageRecord, StageTimings, bool)> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let r = generate_one(cfg, &config_hash, &meshes, out_dir, i);
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                progress(n, count);
                r
            })
            .collect::<Result<_, _>>()
    })?;

    let t = Instant::now();
    let mut dataset = CocoDataset::new();
    let mut stages = StageTimings::default();
    let mut per_image = Vec::with_capacity(results.len());
    let mut manifest_images = Vec::with_capacity(results.len());
    let mut report = GenerationReport {
        images: count,
        annotations: 0,
        instances_placed: 0,
        below_min_area: 0,
        fully_occluded: 0,
        layout_fallbacks: 0,
        min_area: cfg.min_area,
        per_image: Vec::new(),
    };
    for (rec, timing, reused) in &results {
        stages.add(timing);
        dataset.images.push(ImageInfo {
            file_name: rec.file_name.clone(),
            height: rec.height,
            id: rec.image_id,
            width: rec.width,
        });
        for a in &rec.annotations {
            let mut a = a.clone();
            a.annotation_id = dataset.annotations.len() as u64 + 1;
            dataset.annotations.push(a);
        }
        report.instances_placed += rec.placed as u64;
        report.below_min_area += rec.below_min_area.len() as u64;
        report.fully_occluded += rec.fully_occluded.len() as u64;
        report.layout_fallbacks += rec.fallback_from.is_some() as u64;
        per_image.push(json!({
            "image_id": rec.image_id,
            "layout": rec.layout,
            "fallback_from": rec.fallback_from,
            "placed": rec.placed,
            "annotated": rec.annotations.len(),
            "below_min_area": rec.below_min_area,
            "fully_occluded": rec.fully_occluded,
        }));
        manifest_images.push(ManifestImage {
            image_id: rec.image_id,
            file_name: rec.file_name.clone(),
            seed: rec.seed,
            reused: *reused,
        });
    }
    report.annotations = dataset.annotations.len() as u64;
    report.per_image = per_image;

    let info = &mut dataset.info;
    info.insert("toolkit_version".into(), Value::from(TOOLKIT_VERSION));
    info.insert("generator_seed".into(), Value::from(cfg.seed));
    info.insert("config_hash".into(), Value::from(config_hash.clone()));
    info.insert("min_area".into(), Value::from(cfg.min_area));
    info.insert("mask_type".into(), Value::from("visible"));
    info.insert(
        "segmentation_encoding".into(),
        Value::from("uncompressed-rle"),
    );
    info.insert("image_count".into(), Value::from(count));

    let ann_path = out_dir.join(ANNOTATIONS_FILE);
    write_dataset(&dataset, &ann_path)?;
    let report_path = out_dir.join(REPORT_FILE);
    let mut report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    report_bytes.push(b'\n');
    fs::write(&report_path, report_bytes).map_err(io_err(&report_path))?;
    let assemble = t.elapsed();

    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let timings_ms = BTreeMap::from([
        ("load_models".to_string(), ms(load_time)),
        ("scene".to_string(), ms(stages.scene)),
        ("render".to_string(), ms(stages.render)),
        ("annotate".to_string(), ms(stages.annotate)),
        ("encode_write".to_string(), ms(stages.encode_write)),
        ("assemble".to_string(), ms(assemble)),
        ("total_wall".to_string(), ms(wall.elapsed())),
    ]);
    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.into(),
        config_hash,
        config: serde_json::to_value(cfg).expect("config serializes"),
        master_seed: cfg.seed,
        output_dir: out_dir.display().to_string(),
        count,
        jobs: jobs.max(1),
        images: manifest_images,
        timings_ms,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(&manifest_path, bytes).map_err(io_err(&manifest_path))?;

    Ok(GenerateOutcome {
        manifest,
        report,
        dataset,
    })
}

/// Stable false color for an instance id; background is black.
pub fn palette(id: u32) -> [u8; 3] {
    if id == 0 {
        return [0, 0, 0];
    }
    // Golden-angle hue steps keep neighbouring ids far apart.
    let hue = (id as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let sector = hue.floor() as u32 % 6;
    let f = hue.fract();
    let (v, s) = (0.95, 0.75);
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Two panels side by side: the rendered frame and its ID plane in false
/// color. Returns PNG bytes and the number of instances placed.
pub fn preview(cfg: &GeneratorConfig, seed: u64) -> Result<(Vec<u8>, FrameBuffers), PipelineError> {
    let meshes = cfg.load_meshes()?;
    let rendered = render_image(cfg, &meshes, seed, 0, &mut StageTimings::default())?;
    let fb = rendered.frame;
    let (w, h) = (fb.width as usize, fb.height as usize);
    let mut data = Vec::with_capacity(w * 2 * h * 3);
    for y in 0..h {
        data.extend_from_slice(&fb.rgb[y * w * 3..(y + 1) * w * 3]);
        for x in 0..w {
            data.extend_from_slice(&palette(fb.instance_id[y * w + x]));
        }
    }
    let png = encode_png(&data, fb.width * 2, fb.height, ExtendedColorType::Rgb8)?;
    Ok((png, fb))
}
