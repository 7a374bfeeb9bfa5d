//! Software rasterizer producing aligned color, depth and instance-ID planes.
//!
//! Conventions: right-handed world, camera looking down -z in view space,
//! top-left pixel origin, row-major storage, one sample at each pixel centre
//! `(x + 0.5, y + 0.5)`. Depth is the view-space distance along the camera
//! axis. The depth test breaks exact ties in favour of the lower instance ID,
//! so the visible surface at a pixel is fully determined by the scene.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{apply_transform, Mesh, Point, Vector};
use crate::scene::{CameraModel, LightSpec, SceneError, SceneInstanceList};

/// Blinn-Phong exponent.
pub const SHININESS: i32 = 16;

const SHADOW_BIAS: f64 = 2e-3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("image size {0}x{1} is empty")]
    EmptyImage(u32, u32),
    #[error("instance id {0} does not fit a 16-bit ID image")]
    IdOverflow(u32),
    #[error("png encoding failed: {0}")]
    Png(#[from] image::ImageError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    /// Uniform background color, linear [0,1].
    pub background: [f64; 3],
    /// Weight of the Blinn-Phong highlight.
    pub specular: f64,
    /// Render the color plane at 2x2 samples per pixel and box-filter it.
    /// The depth and ID planes always use one sample per pixel.
    pub supersample: bool,
    /// Shadow map for the brightest directional light.
    pub shadows: bool,
    pub shadow_map_size: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: [0.5, 0.5, 0.5],
            specular: 0.25,
            supersample: false,
            shadows: false,
            shadow_map_size: 1024,
        }
    }
}

/// Per-pixel color, depth and instance ID from one render.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples.
    pub rgb: Vec<u8>,
    /// Row-major view-space depth; background pixels hold `far`.
    pub depth: Vec<f64>,
    /// Row-major instance IDs; 0 is background.
    pub instance_id: Vec<u32>,
    pub far: f64,
}

impl FrameBuffers {
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn id_at(&self, x: u32, y: u32) -> u32 {
        self.instance_id[self.index(x, y)]
    }

    pub fn rgb_at(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * self.index(x, y);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Number of pixels owned by each instance ID, indexed by ID.
    pub fn visible_counts(&self) -> Vec<u64> {
        let max = self.instance_id.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max + 1];
        for &id in &self.instance_id {
            counts[id as usize] += 1;
        }
        counts
    }

    pub fn rgb_png(&self) -> Result<Vec<u8>, RenderError> {
        encode_png(&self.rgb, self.width, self.height, ExtendedColorType::Rgb8)
    }

    /// ID plane as a 16-bit grayscale PNG.
    pub fn id_png16(&self) -> Result<Vec<u8>, RenderError> {
        let mut raw = Vec::with_capacity(self.instance_id.len() * 2);
        for &id in &self.instance_id {
            let v = u16::try_from(id).map_err(|_| RenderError::IdOverflow(id))?;
            // PNG stores 16-bit samples big-endian.
            raw.extend_from_slice(&v.to_be_bytes());
        }
        encode_png(&raw, self.width, self.height, ExtendedColorType::L16)
    }
}

pub fn encode_png(
    data: &[u8],
    width: u32,
    height: u32,
    color: ExtendedColorType,
) -> Result<Vec<u8>, RenderError> {
    let mut out = Cursor::new(Vec::new());
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
        .write_image(data, width, height, color)?;
    Ok(out.into_inner())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RenderError> {
    std::fs::write(path, bytes).map_err(|source| RenderError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Surface appearance used by [`shade_pixel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub base_color: [f64; 3],
    pub specular: f64,
}

/// Local illumination at one surface point:
/// `base * (ambient + sum_l max(0, n.l) I_l c_l) + specular * sum_l I_l c_l max(0, n.h_l)^16`
/// with highlights only from lights in front of the surface. Lights whose
/// index is in `shadowed` contribute nothing. Result is clamped to [0,1].
pub fn shade_pixel(
    normal: &Vector,
    view_dir: &Vector,
    lights: &LightSpec,
    material: &Material,
    shadowed: &[usize],
) -> [f64; 3] {
    let mut diffuse = [lights.ambient; 3];
    let mut highlight = [0.0; 3];
    for (i, light) in lights.directionals.iter().enumerate() {
        if shadowed.contains(&i) {
            continue;
        }
        let l = Vector::from(light.direction);
        let n_dot_l = normal.dot(&l);
        if n_dot_l <= 0.0 {
            continue;
        }
        let h = l + view_dir;
        let h_len = h.norm();
        let spec = if h_len > 0.0 {
            normal.dot(&(h / h_len)).max(0.0).powi(SHININESS)
        } else {
            0.0
        };
        for c in 0..3 {
            let radiance = light.intensity * light.color[c];
            diffuse[c] += n_dot_l * radiance;
            highlight[c] += spec * radiance;
        }
    }
    [0, 1, 2].map(|c| {
        (material.base_color[c] * diffuse[c] + material.specular * highlight[c]).clamp(0.0, 1.0)
    })
}

pub fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// World-to-screen mapping for one image size.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    eye: Vector,
    right: Vector,
    up: Vector,
    forward: Vector,
    focal: f64,
    aspect: f64,
    width: f64,
    height: f64,
    pub near: f64,
    pub far: f64,
}

impl Projector {
    pub fn new(camera: &CameraModel, width: u32, height: u32) -> Self {
        let eye = Vector::from(camera.eye);
        let forward = (Vector::from(camera.look_at) - eye).normalize();
        let right = forward.cross(&Vector::from(camera.up)).normalize();
        let up = right.cross(&forward);
        Self {
            eye,
            right,
            up,
            forward,
            focal: 1.0 / (camera.vertical_fov.to_radians() / 2.0).tan(),
            aspect: width as f64 / height as f64,
            width: width as f64,
            height: height as f64,
            near: camera.near,
            far: camera.far,
        }
    }

    /// View-space (x, y, depth) with depth positive in front of the camera.
    pub fn to_view(&self, p: &Point) -> [f64; 3] {
        let d = p.coords - self.eye;
        [self.right.dot(&d), self.up.dot(&d), self.forward.dot(&d)]
    }

    /// Continuous pixel coordinates of a view-space point with depth > 0.
    pub fn to_screen(&self, v: [f64; 3]) -> [f64; 2] {
        let ndc_x = self.focal * v[0] / (self.aspect * v[2]);
        let ndc_y = self.focal * v[1] / v[2];
        [
            (ndc_x + 1.0) * 0.5 * self.width,
            (1.0 - ndc_y) * 0.5 * self.height,
        ]
    }

    pub fn eye(&self) -> Vector {
        self.eye
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: [f64; 3],
    world: Vector,
    normal: Vector,
}

impl ClipVertex {
    fn lerp(&self, other: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            view: [0, 1, 2].map(|k| self.view[k] + (other.view[k] - self.view[k]) * t),
            world: self.world + (other.world - self.world) * t,
            normal: self.normal + (other.normal - self.normal) * t,
        }
    }
}

/// Clips a triangle to the half-space `depth >= near`.
fn clip_near(tri: [ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    if tri.iter().all(|v| v.view[2] >= near) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.view[2] >= near;
        let b_in = b.view[2] >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.view[2]) / (b.view[2] - a.view[2]);
            let mut v = a.lerp(&b, t);
            v.view[2] = near;
            out.push(v);
        }
    }
    out
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Visits every pixel whose centre lies inside the screen-space triangle,
/// with screen-space barycentric weights. Pixel centres exactly on an edge
/// belong to the triangle only for top and left edges, so triangles that
/// share an edge never both cover a centre on it. Zero-area triangles are
/// skipped.
pub fn scan_triangle(
    p: [[f64; 2]; 3],
    width: u32,
    height: u32,
    mut visit: impl FnMut(u32, u32, [f64; 3]),
) {
    let mut p = p;
    let mut area = edge(p[0], p[1], p[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let mut swapped = false;
    if area < 0.0 {
        p.swap(1, 2);
        area = -area;
        swapped = true;
    }
    let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let (x0, x1, y0, y1) = (x0 as u32, x1 as u32, y0 as u32, y1 as u32);

    let top_left = |a: [f64; 2], b: [f64; 2]| {
        let dy = b[1] - a[1];
        let dx = b[0] - a[0];
        (dy == 0.0 && dx > 0.0) || dy < 0.0
    };
    let edges = [(1, 2), (2, 0), (0, 1)];
    let tl = edges.map(|(i, j)| top_left(p[i], p[j]));

    for y in y0..=y1 {
        let cy = y as f64 + 0.5;
        for x in x0..=x1 {
            let c = [x as f64 + 0.5, cy];
            let mut w = [0.0; 3];
            let mut inside = true;
            for (k, &(i, j)) in edges.iter().enumerate() {
                let e = edge(p[i], p[j], c);
                if e < 0.0 || (e == 0.0 && !tl[k]) {
                    inside = false;
                    break;
                }
                w[k] = e / area;
            }
            if inside {
                if swapped {
                    w.swap(1, 2);
                }
                visit(x, y, w);
            }
        }
    }
}

struct Pass {
    width: u32,
    height: u32,
    depth: Vec<f64>,
    ids: Vec<u32>,
    // Surface attributes at the visible sample, for deferred shading.
    world: Vec<[f32; 3]>,
    normal: Vec<[f32; 3]>,
    material: Vec<u32>,
}

struct WorldInstance {
    id: u32,
    mesh: Mesh,
}

fn run_pass(
    instances: &[WorldInstance],
    projector: &Projector,
    width: u32,
    height: u32,
    with_attributes: bool,
) -> Pass {
    let n = width as usize * height as usize;
    let mut pass = Pass {
        width,
        height,
        depth: vec![projector.far; n],
        ids: vec![0; n],
        world: if with_attributes {
            vec![[0.0; 3]; n]
        } else {
            Vec::new()
        },
        normal: if with_attributes {
            vec![[0.0; 3]; n]
        } else {
            Vec::new()
        },
        material: if with_attributes {
            vec![0; n]
        } else {
            Vec::new()
        },
    };
    for (slot, inst) in instances.iter().enumerate() {
        let mesh = &inst.mesh;
        let verts: Vec<ClipVertex> = mesh
            .vertices()
            .iter()
            .zip(mesh.normals())
            .map(|(p, n)| ClipVertex {
                view: projector.to_view(p),
                world: p.coords,
                normal: *n,
            })
            .collect();
        for tri in mesh.triangles() {
            let corners = tri.map(|i| verts[i as usize]);
            if corners.iter().all(|v| v.view[2] < projector.near)
                || corners.iter().all(|v| v.view[2] > projector.far)
            {
                continue;
            }
            let poly = clip_near(corners, projector.near);
            for k in 1..poly.len().saturating_sub(1) {
                let t = [poly[0], poly[k], poly[k + 1]];
                raster_one(
                    &mut pass,
                    projector,
                    inst.id,
                    slot as u32,
                    t,
                    with_attributes,
                );
            }
        }
    }
    pass
}

fn raster_one(
    pass: &mut Pass,
    projector: &Projector,
    id: u32,
    slot: u32,
    t: [ClipVertex; 3],
    with_attributes: bool,
) {
    let screen = t.map(|v| projector.to_screen(v.view));
    let inv_depth = t.map(|v| 1.0 / v.view[2]);
    let width = pass.width;
    scan_triangle(screen, pass.width, pass.height, |x, y, b| {
        // Perspective-correct interpolation through 1/depth.
        let w = [
            b[0] * inv_depth[0],
            b[1] * inv_depth[1],
            b[2] * inv_depth[2],
        ];
        let sum = w[0] + w[1] + w[2];
        let depth = 1.0 / sum;
        if !(depth >= projector.near && depth <= projector.far) {
            return;
        }
        let i = y as usize * width as usize + x as usize;
        let current = pass.depth[i];
        if depth < current || (depth == current && pass.ids[i] != 0 && id < pass.ids[i]) {
            pass.depth[i] = depth;
            pass.ids[i] = id;
            if with_attributes {
                let a = [w[0] / sum, w[1] / sum, w[2] / sum];
                let world = t[0].world * a[0] + t[1].world * a[1] + t[2].world * a[2];
                let normal = t[0].normal * a[0] + t[1].normal * a[1] + t[2].normal * a[2];
                pass.world[i] = [world.x as f32, world.y as f32, world.z as f32];
                pass.normal[i] = [normal.x as f32, normal.y as f32, normal.z as f32];
                pass.material[i] = slot;
            }
        }
    });
}

/// Orthographic depth map seen from one directional light.
struct ShadowMap {
    light: usize,
    right: Vector,
    up: Vector,
    toward: Vector,
    origin: [f64; 2],
    scale: f64,
    size: u32,
    depth: Vec<f64>,
}

impl ShadowMap {
    fn build(instances: &[WorldInstance], lights: &LightSpec, size: u32) -> Option<Self> {
        let light = lights.brightest()?;
        let toward = Vector::from(lights.directionals[light].direction).normalize();
        let helper = if toward.z.abs() < 0.9 {
            Vector::z()
        } else {
            Vector::x()
        };
        let right = helper.cross(&toward).normalize();
        let up = toward.cross(&right);
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for inst in instances {
            for v in inst.mesh.vertices() {
                let uv = [right.dot(&v.coords), up.dot(&v.coords)];
                for k in 0..2 {
                    lo[k] = lo[k].min(uv[k]);
                    hi[k] = hi[k].max(uv[k]);
                }
            }
        }
        if !lo[0].is_finite() {
            return None;
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let mut map = ShadowMap {
            light,
            right,
            up,
            toward,
            origin: lo,
            scale: size as f64 / span,
            size,
            depth: vec![f64::INFINITY; size as usize * size as usize],
        };
        for inst in instances {
            let verts: Vec<([f64; 2], f64)> = inst
                .mesh
                .vertices()
                .iter()
                .map(|v| (map.project(&v.coords), -toward.dot(&v.coords)))
                .collect();
            for tri in inst.mesh.triangles() {
                let c = tri.map(|i| verts[i as usize]);
                let depth = &mut map.depth;
                scan_triangle(c.map(|v| v.0), size, size, |x, y, b| {
                    let d = b[0] * c[0].1 + b[1] * c[1].1 + b[2] * c[2].1;
                    let i = y as usize * size as usize + x as usize;
                    if d < depth[i] {
                        depth[i] = d;
                    }
                });
            }
        }
        Some(map)
    }

    fn project(&self, p: &Vector) -> [f64; 2] {
        [
            (self.right.dot(p) - self.origin[0]) * self.scale,
            (self.up.dot(p) - self.origin[1]) * self.scale,
        ]
    }

    fn occluded(&self, p: &Vector) -> bool {
        let [u, v] = self.project(p);
        let (x, y) = (u.floor(), v.floor());
        if x < 0.0 || y < 0.0 || x >= self.size as f64 || y >= self.size as f64 {
            return false;
        }
        let stored = self.depth[y as usize * self.size as usize + x as usize];
        let texel = 1.0 / self.scale;
        -self.toward.dot(p) > stored + SHADOW_BIAS + 2.0 * texel
    }
}

fn shade_pass(
    pass: &Pass,
    instances: &[WorldInstance],
    eye: Vector,
    lights: &LightSpec,
    options: &RenderOptions,
    shadow: Option<&ShadowMap>,
) -> Vec<[f64; 3]> {
    let mut shadowed = Vec::with_capacity(1);
    pass.ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            if id == 0 {
                return options.background;
            }
            let world = Vector::from(pass.world[i].map(f64::from));
            let mut normal = Vector::from(pass.normal[i].map(f64::from));
            let len = normal.norm();
            normal = if len > 0.0 { normal / len } else { Vector::z() };
            let to_eye = eye - world;
            let view_dir = if to_eye.norm() > 0.0 {
                to_eye.normalize()
            } else {
                normal
            };
            if normal.dot(&view_dir) < 0.0 {
                normal = -normal;
            }
            shadowed.clear();
            if let Some(map) = shadow {
                if map.occluded(&world) {
                    shadowed.push(map.light);
                }
            }
            let material = Material {
                base_color: instances[pass.material[i] as usize].mesh.base_color(),
                specular: options.specular,
            };
            shade_pixel(&normal, &view_dir, lights, &material, &shadowed)
        })
        .collect()
}

/// Renders a scene. An empty instance list yields a background-only frame.
pub fn rasterize(
    instances: &SceneInstanceList,
    meshes: &[Mesh],
    camera: &CameraModel,
    lights: &LightSpec,
    image_size: [u32; 2],
    options: &RenderOptions,
) -> Result<FrameBuffers, RenderError> {
    let [width, height] = image_size;
    if width == 0 || height == 0 {
        return Err(RenderError::EmptyImage(width, height));
    }
    camera.validate()?;
    let world: Vec<WorldInstance> = instances
        .instances
        .iter()
        .map(|inst| {
            let mesh = meshes.get(inst.mesh_index).ok_or(SceneError::MissingMesh {
                index: inst.mesh_index,
                available: meshes.len(),
            })?;
            Ok(WorldInstance {
                id: inst.instance_id,
                mesh: apply_transform(mesh, &inst.transform()),
            })
        })
        .collect::<Result<_, SceneError>>()?;

    let shadow = if options.shadows {
        ShadowMap::build(&world, lights, options.shadow_map_size.max(16))
    } else {
        None
    };

    let projector = Projector::new(camera, width, height);
    let base = run_pass(&world, &projector, width, height, !options.supersample);
    let color: Vec<[f64; 3]> = if options.supersample {
        let (w2, h2) = (width * 2, height * 2);
        let fine_proj = Projector::new(camera, w2, h2);
        let fine = run_pass(&world, &fine_proj, w2, h2, true);
        let fine_color = shade_pass(
            &fine,
            &world,
            projector.eye(),
            lights,
            options,
            shadow.as_ref(),
        );
        let mut out = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height as usize {
            for x in 0..width as usize {
                let mut acc = [0.0; 3];
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let c = fine_color[(2 * y + dy) * w2 as usize + 2 * x + dx];
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
                out.push(acc.map(|a| a / 4.0));
            }
        }
        out
    } else {
        shade_pass(
            &base,
            &world,
            projector.eye(),
            lights,
            options,
            shadow.as_ref(),
        )
    };

    let rgb = color.iter().flat_map(|c| c.map(quantize)).collect();
    Ok(FrameBuffers {
        width,
        height,
        rgb,
        depth: base.depth,
        instance_id: base.ids,
        far: camera.far,
    })
}
