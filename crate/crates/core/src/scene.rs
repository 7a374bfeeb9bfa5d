//! Randomized scene layouts: how many carcasses, where they lie, how they
//! pile, and how the scene is lit and viewed.
//!
//! Sampling is a pure function of the [`SceneSpec`] (seed included) and the
//! loaded meshes, so any scene of a dataset can be regenerated on its own.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use nalgebra::{Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Mesh, Rect, Transform, Vector};

/// Rejections allowed per instance in isolated mode before giving up.
pub const MAX_REJECTIONS: usize = 1000;

/// Fraction of the table half-extent used as the Gaussian spread in
/// clustered and piled layouts.
pub const CLUSTER_SPREAD: f64 = 0.25;

/// Extra room around the table when fitting the top camera.
pub const CAMERA_MARGIN: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(
        "isolated placement exhausted: instance {instance} of {count} rejected {rejections} times \
         (table too small for max_footprint_overlap {max_overlap})"
    )]
    RejectionExhausted {
        instance: usize,
        count: usize,
        rejections: usize,
        max_overlap: f64,
    },
    #[error("scene references mesh index {index} but only {available} meshes are loaded")]
    MissingMesh { index: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutMode {
    Isolated,
    Clustered,
    Piled,
}

impl LayoutMode {
    pub const ALL: [LayoutMode; 3] = [
        LayoutMode::Isolated,
        LayoutMode::Clustered,
        LayoutMode::Piled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutMode::Isolated => "isolated",
            LayoutMode::Clustered => "clustered",
            LayoutMode::Piled => "piled",
        }
    }
}

/// Pinhole camera. The view direction is `look_at - eye`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub eye: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Degrees.
    pub vertical_fov: f64,
    pub near: f64,
    pub far: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        let eye = Vector::from(self.eye);
        let at = Vector::from(self.look_at);
        let up = Vector::from(self.up);
        let forward = at - eye;
        if forward.norm() == 0.0 {
            return Err(SceneError::InvalidSpec("camera eye equals look_at".into()));
        }
        if (up.norm() - 1.0).abs() > 1e-6 {
            return Err(SceneError::InvalidSpec(
                "camera up must be a unit vector".into(),
            ));
        }
        if forward.normalize().cross(&up).norm() < 1e-9 {
            return Err(SceneError::InvalidSpec(
                "camera up is parallel to the view axis".into(),
            ));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(SceneError::InvalidSpec(format!(
                "vertical_fov {} outside (0, 180)",
                self.vertical_fov
            )));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(SceneError::InvalidSpec(format!(
                "need 0 < near < far, got near {} far {}",
                self.near, self.far
            )));
        }
        Ok(())
    }

    pub fn view_axis(&self) -> Vector {
        (Vector::from(self.look_at) - Vector::from(self.eye)).normalize()
    }
}

/// Camera straight above the table centre, looking down, high enough that
/// the whole table plus a 5% margin fits in both image axes.
pub fn default_top_camera(
    table_extent: [f64; 2],
    image_size: [u32; 2],
    vertical_fov: f64,
    near: f64,
    far: f64,
) -> CameraModel {
    let tan_half = (vertical_fov.to_radians() / 2.0).tan();
    let aspect = image_size[0] as f64 / image_size[1] as f64;
    let fit_y = table_extent[1] * (1.0 + CAMERA_MARGIN) / tan_half;
    let fit_x = table_extent[0] * (1.0 + CAMERA_MARGIN) / (tan_half * aspect);
    CameraModel {
        eye: [0.0, 0.0, fit_x.max(fit_y)],
        look_at: [0.0, 0.0, 0.0],
        up: [0.0, 1.0, 0.0],
        vertical_fov,
        near,
        far,
    }
}

/// Rotates the eye about `look_at` by `angle_deg` around a horizontal axis
/// at azimuth `azimuth` (radians).
pub fn tilt_camera(camera: &CameraModel, angle_deg: f64, azimuth: f64) -> CameraModel {
    if angle_deg == 0.0 {
        return *camera;
    }
    let axis = Unit::new_normalize(Vector::new(azimuth.cos(), azimuth.sin(), 0.0));
    let rot = UnitQuaternion::from_axis_angle(&axis, angle_deg.to_radians());
    let at = Vector::from(camera.look_at);
    let eye = at + rot * (Vector::from(camera.eye) - at);
    CameraModel {
        eye: eye.into(),
        ..*camera
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Unit vector pointing from the surface towards the light.
    pub direction: [f64; 3],
    pub intensity: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    pub directionals: Vec<DirectionalLight>,
    pub ambient: f64,
}

impl LightSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(SceneError::InvalidSpec(format!(
                "ambient {} outside [0,1]",
                self.ambient
            )));
        }
        for l in &self.directionals {
            if (Vector::from(l.direction).norm() - 1.0).abs() > 1e-6 {
                return Err(SceneError::InvalidSpec(
                    "light direction must be unit".into(),
                ));
            }
            if !(l.intensity.is_finite() && l.intensity >= 0.0) {
                return Err(SceneError::InvalidSpec(
                    "light intensity must be >= 0".into(),
                ));
            }
            if l.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(SceneError::InvalidSpec("light color outside [0,1]".into()));
            }
        }
        if self.directionals.is_empty() && self.ambient <= 0.0 {
            return Err(SceneError::InvalidSpec(
                "scene needs a directional light or positive ambient".into(),
            ));
        }
        Ok(())
    }

    /// Index of the most intense directional light (first on ties).
    pub fn brightest(&self) -> Option<usize> {
        self.directionals
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, l)| match best {
                Some((_, b)) if b >= l.intensity => best,
                _ => Some((i, l.intensity)),
            })
            .map(|(i, _)| i)
    }
}

/// Ranges for per-scene light randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightRanges {
    pub count: [u32; 2],
    /// Maximum angle between a light direction and straight up, degrees.
    pub max_zenith_deg: f64,
    pub intensity: [f64; 2],
    pub ambient: [f64; 2],
    /// Each color channel is drawn from `[1 - color_jitter, 1]`.
    pub color_jitter: f64,
}

impl Default for LightRanges {
    fn default() -> Self {
        Self {
            count: [1, 3],
            max_zenith_deg: 50.0,
            intensity: [0.6, 1.4],
            ambient: [0.05, 0.25],
            color_jitter: 0.0,
        }
    }
}

impl LightRanges {
    fn validate(&self) -> Result<(), SceneError> {
        let ok = self.count[0] <= self.count[1]
            && (0.0..=90.0).contains(&self.max_zenith_deg)
            && 0.0 <= self.intensity[0]
            && self.intensity[0] <= self.intensity[1]
            && 0.0 <= self.ambient[0]
            && self.ambient[0] <= self.ambient[1]
            && self.ambient[1] <= 1.0
            && (0.0..=1.0).contains(&self.color_jitter)
            && (self.count[1] > 0 || self.ambient[1] > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SceneError::InvalidSpec(format!(
                "bad light ranges {self:?}"
            )))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> LightSpec {
        let n = rng.gen_range(self.count[0]..=self.count[1]);
        let cos_max = self.max_zenith_deg.to_radians().cos();
        let directionals = (0..n)
            .map(|_| {
                // Uniform over the solid angle of the cone around +z.
                let cos_t = uniform(rng, cos_max, 1.0);
                let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                let phi = rng.gen_range(0.0..TAU);
                let intensity = uniform(rng, self.intensity[0], self.intensity[1]);
                let color = [(); 3].map(|_| uniform(rng, 1.0 - self.color_jitter, 1.0));
                DirectionalLight {
                    direction: Vector::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
                        .normalize()
                        .into(),
                    intensity,
                    color,
                }
            })
            .collect();
        let mut ambient = uniform(rng, self.ambient[0], self.ambient[1]);
        if n == 0 && ambient <= 0.0 {
            ambient = self.ambient[1];
        }
        LightSpec {
            directionals,
            ambient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Lighting {
    Fixed(LightSpec),
    Randomized(LightRanges),
}

impl Default for Lighting {
    fn default() -> Self {
        Lighting::Randomized(LightRanges::default())
    }
}

/// Everything needed to sample one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub model_paths: Vec<PathBuf>,
    pub count_range: [u32; 2],
    pub layout_mode: LayoutMode,
    /// Half-widths of the table in x and y, meters.
    pub table_extent: [f64; 2],
    pub max_footprint_overlap: f64,
    pub lights: Lighting,
    pub camera: CameraModel,
    /// Maximum camera tilt applied per scene, degrees.
    pub camera_jitter_deg: f64,
    /// Maximum instance pitch and roll, degrees.
    pub tilt_deg: f64,
    pub image_size: [u32; 2],
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let [lo, hi] = self.count_range;
        if !(1 <= lo && lo <= hi) {
            return Err(SceneError::InvalidSpec(format!(
                "count_range [{lo}, {hi}] must satisfy 1 <= min <= max"
            )));
        }
        if !(0.0..=1.0).contains(&self.max_footprint_overlap) {
            return Err(SceneError::InvalidSpec(format!(
                "max_footprint_overlap {} outside [0,1]",
                self.max_footprint_overlap
            )));
        }
        if self.image_size.iter().any(|&s| s < 16) {
            return Err(SceneError::InvalidSpec(format!(
                "image size {:?} must be at least 16x16",
                self.image_size
            )));
        }
        if self
            .table_extent
            .iter()
            .any(|&e| !(e > 0.0 && e.is_finite()))
        {
            return Err(SceneError::InvalidSpec(
                "table_extent must be positive".into(),
            ));
        }
        if !(0.0..=90.0).contains(&self.tilt_deg) || !(0.0..90.0).contains(&self.camera_jitter_deg)
        {
            return Err(SceneError::InvalidSpec("tilt angles out of range".into()));
        }
        if self.model_paths.is_empty() {
            return Err(SceneError::InvalidSpec("no model paths".into()));
        }
        self.camera.validate()?;
        match &self.lights {
            Lighting::Fixed(l) => l.validate(),
            Lighting::Randomized(r) => r.validate(),
        }
    }

    pub fn table_rect(&self) -> Rect {
        let [ex, ey] = self.table_extent;
        Rect {
            min: [-ex, -ey],
            max: [ex, ey],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    pub instance_id: u32,
    pub mesh_index: usize,
    pub transform: TransformRecord,
}

/// Serializable mirror of [`Transform`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    /// `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl From<&Transform> for TransformRecord {
    fn from(t: &Transform) -> Self {
        let q = t.rotation().quaternion();
        Self {
            rotation: [q.w, q.i, q.j, q.k],
            translation: t.translation().into(),
            scale: t.scale(),
        }
    }
}

impl SceneInstance {
    pub fn transform(&self) -> Transform {
        Transform::from_parts(
            self.transform.rotation,
            self.transform.translation,
            self.transform.scale,
        )
        .expect("scene transforms are constructed valid")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneInstanceList {
    pub instances: Vec<SceneInstance>,
}

impl SceneInstanceList {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// World-space bounds of every instance, in order.
    pub fn world_aabbs(&self, meshes: &[Mesh]) -> Result<Vec<Aabb>, SceneError> {
        self.instances
            .iter()
            .map(|inst| {
                let mesh = meshes.get(inst.mesh_index).ok_or(SceneError::MissingMesh {
                    index: inst.mesh_index,
                    available: meshes.len(),
                })?;
                Ok(transformed_aabb(mesh, &inst.transform()))
            })
            .collect()
    }
}

/// Result of sampling one scene: layout plus the per-scene light and view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledScene {
    pub layout_mode: LayoutMode,
    pub instances: SceneInstanceList,
    pub camera: CameraModel,
    pub lights: LightSpec,
}

fn transformed_aabb(mesh: &Mesh, t: &Transform) -> Aabb {
    Aabb::from_points(
        &mesh
            .vertices()
            .iter()
            .map(|v| t.apply_point(v))
            .collect::<Vec<_>>(),
    )
    .expect("meshes are nonempty")
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

pub fn sample_scene(spec: &SceneSpec, meshes: &[Mesh]) -> Result<SampledScene, SceneError> {
    spec.validate()?;
    if meshes.is_empty() {
        return Err(SceneError::MissingMesh {
            index: 0,
            available: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let lights = match &spec.lights {
        Lighting::Fixed(l) => l.clone(),
        Lighting::Randomized(r) => r.sample(&mut rng),
    };
    let tilt = uniform(&mut rng, -spec.camera_jitter_deg, spec.camera_jitter_deg);
    let azimuth = rng.gen_range(0.0..PI);
    let camera = tilt_camera(&spec.camera, tilt, azimuth);

    let count = rng.gen_range(spec.count_range[0]..=spec.count_range[1]) as usize;
    let table = spec.table_rect();
    let [ex, ey] = spec.table_extent;
    let gauss = [
        Normal::new(0.0, CLUSTER_SPREAD * ex).expect("positive spread"),
        Normal::new(0.0, CLUSTER_SPREAD * ey).expect("positive spread"),
    ];
    let max_tilt = spec.tilt_deg.to_radians();

    let mut instances = Vec::with_capacity(count);
    let mut footprints: Vec<Rect> = Vec::with_capacity(count);
    for i in 0..count {
        let mesh_index = rng.gen_range(0..meshes.len());
        let yaw = rng.gen_range(0.0..TAU);
        let pitch = uniform(&mut rng, -max_tilt, max_tilt);
        let roll = uniform(&mut rng, -max_tilt, max_tilt);
        let rotation = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
        let posed = Transform::new(rotation, Vector::zeros(), 1.0).expect("unit rotation");
        let local = transformed_aabb(&meshes[mesh_index], &posed);
        let local_fp = local.footprint();
        let fp_center = [
            (local_fp.min[0] + local_fp.max[0]) / 2.0,
            (local_fp.min[1] + local_fp.max[1]) / 2.0,
        ];
        // Footprint centred on (x, y), resting on the table plane.
        let place = |x: f64, y: f64| Vector::new(x - fp_center[0], y - fp_center[1], -local.min.z);

        let offset = match spec.layout_mode {
            LayoutMode::Isolated => {
                let mut rejections = 0;
                loop {
                    let x = uniform(&mut rng, table.min[0], table.max[0]);
                    let y = uniform(&mut rng, table.min[1], table.max[1]);
                    let off = place(x, y);
                    let fp = shift_rect(&local_fp, &off);
                    if footprints
                        .iter()
                        .all(|other| fp.iou(other) <= spec.max_footprint_overlap)
                    {
                        break off;
                    }
                    rejections += 1;
                    if rejections >= MAX_REJECTIONS {
                        return Err(SceneError::RejectionExhausted {
                            instance: i + 1,
                            count,
                            rejections,
                            max_overlap: spec.max_footprint_overlap,
                        });
                    }
                }
            }
            LayoutMode::Clustered | LayoutMode::Piled => {
                let x = gauss[0].sample(&mut rng).clamp(table.min[0], table.max[0]);
                let y = gauss[1].sample(&mut rng).clamp(table.min[1], table.max[1]);
                place(x, y)
            }
        };
        footprints.push(shift_rect(&local_fp, &offset));
        instances.push(SceneInstance {
            instance_id: (i + 1) as u32,
            mesh_index,
            transform: TransformRecord::from(&posed.with_translation(offset)),
        });
    }

    let mut list = SceneInstanceList { instances };
    if spec.layout_mode == LayoutMode::Piled {
        let aabbs = list.world_aabbs(meshes)?;
        list = stack_heights(&list, &aabbs);
    }
    Ok(SampledScene {
        layout_mode: spec.layout_mode,
        instances: list,
        camera,
        lights,
    })
}

fn shift_rect(r: &Rect, off: &Vector) -> Rect {
    Rect {
        min: [r.min[0] + off.x, r.min[1] + off.y],
        max: [r.max[0] + off.x, r.max[1] + off.y],
    }
}

/// Sequential box stacking: each instance, in order, drops until its box
/// bottom rests on the highest box top among earlier instances whose ground
/// footprints overlap it with positive area, or on the table (z = 0).
///
/// `aabbs[i]` is the world-space box of instance `i` at its current pose.
pub fn stack_heights(instances: &SceneInstanceList, aabbs: &[Aabb]) -> SceneInstanceList {
    assert_eq!(instances.len(), aabbs.len(), "one box per instance");
    let mut placed: Vec<Aabb> = Vec::with_capacity(aabbs.len());
    let mut out = instances.clone();
    for (inst, aabb) in out.instances.iter_mut().zip(aabbs) {
        let fp = aabb.footprint();
        let rest = placed
            .iter()
            .filter(|p| p.footprint().intersection_area(&fp) > 0.0)
            .map(|p| p.max.z)
            .fold(0.0f64, f64::max);
        let dz = rest - aabb.min.z;
        inst.transform.translation[2] += dz;
        let mut moved = aabb.translated(&Vector::new(0.0, 0.0, dz));
        // Pin the bottom exactly so later comparisons see no rounding gap.
        moved.min.z = rest;
        placed.push(moved);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{parse_mesh, Mesh};

    fn unit_box(height: f64) -> Mesh {
        let h = height;
        let text = format!(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 {h}\nv 1 0 {h}\nv 1 1 {h}\nv 0 1 {h}\n\
             f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\nf 2 3 7\nf 2 7 6\n\
             f 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8\n"
        );
        parse_mesh(&text).unwrap()
    }

    fn small_box() -> Mesh {
        let m = unit_box(1.0);
        crate::geometry::apply_transform(
            &m,
            &Transform::new(UnitQuaternion::identity(), Vector::zeros(), 0.1).unwrap(),
        )
    }

    pub(crate) fn spec(mode: LayoutMode, n: u32) -> SceneSpec {
        SceneSpec {
            model_paths: vec!["box.obj".into()],
            count_range: [n, n],
            layout_mode: mode,
            table_extent: [0.5, 0.5],
            max_footprint_overlap: 0.0,
            lights: Lighting::default(),
            camera: default_top_camera([0.5, 0.5], [64, 64], 60.0, 0.05, 10.0),
            camera_jitter_deg: 10.0,
            tilt_deg: 15.0,
            image_size: [64, 64],
            seed: 7,
        }
    }

    fn list_of(zs: &[(f64, f64)]) -> SceneInstanceList {
        SceneInstanceList {
            instances: zs
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| SceneInstance {
                    instance_id: i as u32 + 1,
                    mesh_index: 0,
                    transform: TransformRecord::from(&Transform::translation_only(Vector::new(
                        x, y, 0.0,
                    ))),
                })
                .collect(),
        }
    }

    #[test]
    fn single_isolated_instance_rests_on_table() {
        let meshes = [small_box()];
        let s = sample_scene(&spec(LayoutMode::Isolated, 1), &meshes).unwrap();
        assert_eq!(s.instances.len(), 1);
        let b = s.instances.world_aabbs(&meshes).unwrap()[0];
        assert!(b.min.z.abs() < 1e-12, "bottom at {}", b.min.z);
        assert_eq!(s.instances.instances[0].instance_id, 1);
    }

    #[test]
    fn isolated_zero_overlap_is_disjoint() {
        let meshes = [small_box()];
        for seed in 0..20 {
            let mut sp = spec(LayoutMode::Isolated, 3);
            sp.seed = seed;
            let s = sample_scene(&sp, &meshes).unwrap();
            let fps: Vec<Rect> = s
                .instances
                .world_aabbs(&meshes)
                .unwrap()
                .iter()
                .map(|b| b.footprint())
                .collect();
            for i in 0..fps.len() {
                for j in i + 1..fps.len() {
                    assert_eq!(fps[i].intersection_area(&fps[j]), 0.0);
                }
            }
        }
    }

    #[test]
    fn exhaustion_is_reported() {
        let big = crate::geometry::apply_transform(
            &unit_box(0.2),
            &Transform::new(UnitQuaternion::identity(), Vector::zeros(), 0.9).unwrap(),
        );
        let err = sample_scene(&spec(LayoutMode::Isolated, 4), &[big]).unwrap_err();
        assert!(
            matches!(err, SceneError::RejectionExhausted { .. }),
            "{err}"
        );
    }

    #[test]
    fn deterministic_bytes() {
        let meshes = [small_box()];
        for mode in LayoutMode::ALL {
            let sp = spec(mode, 5);
            let a = serde_json::to_vec(&sample_scene(&sp, &meshes).unwrap()).unwrap();
            let b = serde_json::to_vec(&sample_scene(&sp, &meshes).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn disjoint_footprints_both_on_table() {
        let meshes = [unit_box(0.5)];
        let list = list_of(&[(0.0, 0.0), (5.0, 5.0)]);
        let out = stack_heights(&list, &list.world_aabbs(&meshes).unwrap());
        for b in out.world_aabbs(&meshes).unwrap() {
            assert_eq!(b.min.z, 0.0);
        }
    }

    #[test]
    fn identical_cubes_stack() {
        let meshes = [unit_box(1.0)];
        let list = list_of(&[(0.0, 0.0), (0.0, 0.0)]);
        let out = stack_heights(&list, &list.world_aabbs(&meshes).unwrap());
        let b = out.world_aabbs(&meshes).unwrap();
        assert_eq!(b[1].min.z, b[0].max.z);
    }

    #[test]
    fn three_box_pile() {
        // Hand simulation: 0 -> top 0.1; second rests on 0.1, top 0.3;
        // third rests on max(0.1, 0.3) = 0.3.
        let meshes = [unit_box(0.1), unit_box(0.2), unit_box(0.3)];
        let mut list = list_of(&[(0.0, 0.0), (0.2, 0.2), (0.4, 0.1)]);
        for (i, inst) in list.instances.iter_mut().enumerate() {
            inst.mesh_index = i;
        }
        let out = stack_heights(&list, &list.world_aabbs(&meshes).unwrap());
        let rest: Vec<f64> = out
            .instances
            .iter()
            .map(|i| i.transform.translation[2])
            .collect();
        let expected = [0.0, 0.1, 0.3];
        for (r, e) in rest.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{rest:?}");
        }
    }

    #[test]
    fn top_camera_height() {
        let cam = default_top_camera([0.5, 0.5], [640, 640], 60.0, 0.05, 10.0);
        // Solve tan(30deg) = 0.525 / h independently.
        let h = 0.525 / (30f64.to_radians().sin() / 30f64.to_radians().cos());
        assert!((cam.eye[2] - h).abs() < 1e-12);
        assert!((cam.eye[2] - 0.909).abs() < 1e-3);
        assert_eq!(cam.view_axis(), Vector::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn zero_jitter_looks_straight_down() {
        let meshes = [small_box()];
        let mut sp = spec(LayoutMode::Clustered, 2);
        sp.camera_jitter_deg = 0.0;
        let s = sample_scene(&sp, &meshes).unwrap();
        assert_eq!(s.camera.view_axis(), Vector::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn jitter_stays_within_bound() {
        let meshes = [small_box()];
        for seed in 0..50 {
            let mut sp = spec(LayoutMode::Clustered, 1);
            sp.seed = seed;
            let s = sample_scene(&sp, &meshes).unwrap();
            let angle = s
                .camera
                .view_axis()
                .dot(&-Vector::z())
                .clamp(-1.0, 1.0)
                .acos();
            assert!(angle.to_degrees() <= 10.0 + 1e-9);
        }
    }

    #[test]
    fn spec_validation() {
        let mut sp = spec(LayoutMode::Piled, 1);
        sp.count_range = [0, 2];
        assert!(sp.validate().is_err());
        let mut sp = spec(LayoutMode::Piled, 1);
        sp.image_size = [15, 64];
        assert!(sp.validate().is_err());
        let mut sp = spec(LayoutMode::Piled, 1);
        sp.max_footprint_overlap = 1.5;
        assert!(sp.validate().is_err());
        let mut sp = spec(LayoutMode::Piled, 1);
        sp.lights = Lighting::Fixed(LightSpec {
            directionals: vec![],
            ambient: 0.0,
        });
        assert!(sp.validate().is_err());
    }
}
