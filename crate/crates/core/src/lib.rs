//! Synthetic, auto-annotated instance-segmentation data for piled carcasses:
//! scene sampling, z-buffer rendering, visible-mask extraction, COCO I/O,
//! real/synthetic mixing and COCO-style evaluation.

pub mod annotate;
pub mod coco_io;
pub mod eval;
pub mod geometry;
pub mod mixer;
pub mod pipeline;
pub mod render;
pub mod scene;

pub use annotate::{
    decode_rle, encode_rle, extract_instances, mask_to_bbox, BBox, BinaryMask, InstanceAnnotation,
    RleError, RleMask,
};
pub use coco_io::{
    read_dataset, read_detections, write_dataset, write_detections, Category, CocoDataset,
    CocoError, Detection, ImageInfo,
};
pub use eval::{evaluate, iou_bbox, iou_mask, EvalReport, IouKind};
pub use geometry::{
    apply_transform, compute_aabb, load_mesh, Aabb, GeometryError, Mesh, Point, Transform, Vector,
};
pub use mixer::{run_mix, MixError, MixReport, MixSpec};
pub use pipeline::{derive_seed, generate, GeneratorConfig, PipelineError, RunManifest};
pub use render::{rasterize, FrameBuffers, RenderError, RenderOptions};
pub use scene::{
    sample_scene, CameraModel, LayoutMode, LightSpec, Lighting, SampledScene, SceneError,
    SceneInstance, SceneInstanceList, SceneSpec,
};
