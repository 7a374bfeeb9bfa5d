//! Triangle meshes, rigid-plus-scale transforms and axis-aligned bounds.
//!
//! Meshes are read from ASCII Wavefront OBJ. Only positions, normals and
//! faces are honoured; a single diffuse tint is picked up from the first
//! `Kd` entry of an accompanying `mtllib` file when one is present.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

const NORMAL_TOLERANCE: f64 = 1e-6;

/// Tint used when an OBJ carries no material.
pub const DEFAULT_BASE_COLOR: [f64; 3] = [0.92, 0.78, 0.66];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{path}: file not found or unreadable: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: degenerate mesh: {message}")]
    Degenerate { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
}

/// Triangle mesh with one unit normal per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    normals: Vec<Vector>,
    triangles: Vec<[u32; 3]>,
    base_color: [f64; 3],
}

impl Mesh {
    /// Builds a mesh, checking every invariant.
    pub fn new(
        vertices: Vec<Point>,
        normals: Vec<Vector>,
        triangles: Vec<[u32; 3]>,
        base_color: [f64; 3],
    ) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::Invalid(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if triangles.is_empty() {
            return Err(GeometryError::Invalid("no triangles".into()));
        }
        if normals.len() != vertices.len() {
            return Err(GeometryError::Invalid(format!(
                "{} normals for {} vertices",
                normals.len(),
                vertices.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > NORMAL_TOLERANCE {
                return Err(GeometryError::Invalid(format!(
                    "normal {i} has length {}",
                    n.norm()
                )));
            }
        }
        let n = vertices.len() as u32;
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= n) {
                return Err(GeometryError::Invalid(format!(
                    "triangle {i} index out of range ({t:?}, {n} vertices)"
                )));
            }
        }
        if base_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(GeometryError::Invalid(format!(
                "base color {base_color:?} outside [0,1]"
            )));
        }
        Ok(Self {
            vertices,
            normals,
            triangles,
            base_color,
        })
    }

    /// Builds a mesh whose normals are synthesized from face geometry.
    pub fn with_computed_normals(
        vertices: Vec<Point>,
        triangles: Vec<[u32; 3]>,
        base_color: [f64; 3],
    ) -> Result<Self, GeometryError> {
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&k| k >= n)) {
            return Err(GeometryError::Invalid(format!(
                "triangle index out of range ({t:?}, {n} vertices)"
            )));
        }
        let normals = area_weighted_normals(&vertices, &triangles);
        Self::new(vertices, normals, triangles, base_color)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn normals(&self) -> &[Vector] {
        &self.normals
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn base_color(&self) -> [f64; 3] {
        self.base_color
    }

    pub fn with_base_color(mut self, base_color: [f64; 3]) -> Self {
        self.base_color = base_color.map(|c| c.clamp(0.0, 1.0));
        self
    }
}

/// Rotation, then uniform scale, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    rotation: UnitQuaternion<f64>,
    translation: Vector,
    scale: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn new(
        rotation: UnitQuaternion<f64>,
        translation: Vector,
        scale: f64,
    ) -> Result<Self, GeometryError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GeometryError::InvalidTransform(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if (rotation.quaternion().norm() - 1.0).abs() > NORMAL_TOLERANCE {
            return Err(GeometryError::InvalidTransform(
                "rotation quaternion is not unit length".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    /// Builds from raw `[w, x, y, z]` quaternion components, which must
    /// already be unit length.
    pub fn from_parts(
        quaternion_wxyz: [f64; 4],
        translation: [f64; 3],
        scale: f64,
    ) -> Result<Self, GeometryError> {
        let [w, x, y, z] = quaternion_wxyz;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > NORMAL_TOLERANCE {
            return Err(GeometryError::InvalidTransform(format!(
                "quaternion norm {} is not 1",
                q.norm()
            )));
        }
        Self::new(
            UnitQuaternion::new_unchecked(q),
            Vector::from(translation),
            scale,
        )
    }

    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector::zeros(),
            scale: 1.0,
        }
    }

    pub fn translation_only(t: Vector) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vector {
        self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_translation(mut self, t: Vector) -> Self {
        self.translation = t;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0
            && self.translation == Vector::zeros()
            && self.rotation.quaternion().coords == Quaternion::identity().coords
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords * self.scale + self.translation)
    }

    pub fn apply_normal(&self, n: &Vector) -> Vector {
        (self.rotation * n).normalize()
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation * self.scale + self.translation,
            scale: self.scale * first.scale,
        }
    }

    pub fn inverse(&self) -> Transform {
        let inv_rot = self.rotation.inverse();
        let inv_scale = 1.0 / self.scale;
        Transform {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation) * inv_scale,
            scale: inv_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Result<Self, GeometryError> {
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(GeometryError::Invalid(format!(
                "aabb min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| {
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        });
        Some(Self { min, max })
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn translated(&self, t: &Vector) -> Aabb {
        Aabb {
            min: self.min + t,
            max: self.max + t,
        }
    }

    pub fn extent(&self) -> Vector {
        self.max - self.min
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    /// Projection onto the ground (x, y) plane.
    pub fn footprint(&self) -> Rect {
        Rect {
            min: [self.min.x, self.min.y],
            max: [self.max.x, self.max.y],
        }
    }
}

/// Axis-aligned rectangle in the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.max[0].min(other.max[0]) - self.min[0].max(other.min[0]);
        let h = self.max[1].min(other.max[1]) - self.min[1].max(other.min[1]);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union; 0 when the union is empty.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min[0] <= other.max[0]
            && other.min[0] <= self.max[0]
            && self.min[1] <= other.max[1]
            && other.min[1] <= self.max[1]
    }
}

pub fn compute_aabb(mesh: &Mesh) -> Aabb {
    Aabb::from_points(mesh.vertices()).expect("mesh has at least three vertices")
}

pub fn apply_transform(mesh: &Mesh, t: &Transform) -> Mesh {
    if t.is_identity() {
        return mesh.clone();
    }
    Mesh {
        vertices: mesh.vertices.iter().map(|v| t.apply_point(v)).collect(),
        normals: mesh.normals.iter().map(|n| t.apply_normal(n)).collect(),
        triangles: mesh.triangles.clone(),
        base_color: mesh.base_color,
    }
}

/// Per-vertex normals as the normalized sum of adjacent face normals
/// weighted by face area. Vertices touching no non-degenerate face get +z.
pub fn area_weighted_normals(vertices: &[Point], triangles: &[[u32; 3]]) -> Vec<Vector> {
    let mut acc = vec![Vector::zeros(); vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        // Cross product length is twice the area, so it already carries the weight.
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                Vector::z()
            }
        })
        .collect()
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, GeometryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = parse_obj(&text)?;
    let base_color = match &parsed.mtllib {
        Some(lib) => {
            let mtl_path = path.parent().unwrap_or(Path::new(".")).join(lib);
            read_diffuse(&mtl_path).unwrap_or(DEFAULT_BASE_COLOR)
        }
        None => DEFAULT_BASE_COLOR,
    };
    parsed.into_mesh(base_color)
}

/// Parses OBJ text with the default tint.
pub fn parse_mesh(text: &str) -> Result<Mesh, GeometryError> {
    parse_obj(text)?.into_mesh(DEFAULT_BASE_COLOR)
}

struct ParsedObj {
    positions: Vec<Point>,
    obj_normals: Vec<Vector>,
    triangles: Vec<[u32; 3]>,
    // Normal index referenced by each corner of each triangle, when every
    // corner referenced one.
    corner_normals: Option<Vec<[u32; 3]>>,
    mtllib: Option<String>,
    lines: usize,
}

impl ParsedObj {
    fn into_mesh(self, base_color: [f64; 3]) -> Result<Mesh, GeometryError> {
        let line = self.lines;
        if self.positions.len() < 3 {
            return Err(GeometryError::Degenerate {
                line,
                message: format!("{} vertices, need at least 3", self.positions.len()),
            });
        }
        if self.triangles.is_empty() {
            return Err(GeometryError::Degenerate {
                line,
                message: "no faces".into(),
            });
        }
        if all_collinear(&self.positions) {
            return Err(GeometryError::Degenerate {
                line,
                message: "all vertices are collinear".into(),
            });
        }

        let normals = match &self.corner_normals {
            Some(corners) => {
                let mut acc = vec![Vector::zeros(); self.positions.len()];
                for (t, c) in self.triangles.iter().zip(corners) {
                    for k in 0..3 {
                        acc[t[k] as usize] += self.obj_normals[c[k] as usize];
                    }
                }
                let fallback = area_weighted_normals(&self.positions, &self.triangles);
                acc.into_iter()
                    .zip(fallback)
                    .map(|(n, f)| {
                        let len = n.norm();
                        if len > 1e-12 && len.is_finite() {
                            n / len
                        } else {
                            f
                        }
                    })
                    .collect()
            }
            None => area_weighted_normals(&self.positions, &self.triangles),
        };
        Mesh::new(self.positions, normals, self.triangles, base_color)
    }
}

fn all_collinear(points: &[Point]) -> bool {
    let a = points[0];
    let Some(b) = points.iter().find(|p| (*p - a).norm() > 0.0) else {
        return true;
    };
    let dir = (b - a).normalize();
    let scale = points.iter().map(|p| (p - a).norm()).fold(0.0f64, f64::max);
    points
        .iter()
        .all(|p| (p - a).cross(&dir).norm() <= 1e-12 * scale.max(1.0))
}

fn parse_obj(text: &str) -> Result<ParsedObj, GeometryError> {
    let mut positions = Vec::new();
    let mut obj_normals = Vec::new();
    let mut triangles = Vec::new();
    let mut corner_normals = Vec::new();
    let mut all_corners_have_normals = true;
    let mut mtllib = None;
    let mut lines = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        lines = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let keyword = parts.next().unwrap_or("");
        match keyword {
            "v" => positions.push(Point::from(parse_triple(parts, line, "vertex")?)),
            "vn" => {
                let n = Vector::from(parse_triple(parts, line, "normal")?);
                let len = n.norm();
                if len == 0.0 || !len.is_finite() {
                    return Err(GeometryError::Parse {
                        line,
                        message: "zero-length normal".into(),
                    });
                }
                obj_normals.push(n / len);
            }
            "f" => {
                let mut corners = Vec::new();
                for token in parts {
                    corners.push(parse_corner(
                        token,
                        positions.len(),
                        obj_normals.len(),
                        line,
                    )?);
                }
                if corners.len() < 3 {
                    return Err(GeometryError::Parse {
                        line,
                        message: format!("face needs at least 3 vertices, got {}", corners.len()),
                    });
                }
                // Fan triangulation for quads and n-gons.
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    triangles.push(tri.map(|c| c.0));
                    match (tri[0].1, tri[1].1, tri[2].1) {
                        (Some(a), Some(b), Some(c)) => corner_normals.push([a, b, c]),
                        _ => all_corners_have_normals = false,
                    }
                }
            }
            "mtllib" if mtllib.is_none() => {
                mtllib = parts.next().map(str::to_owned);
            }
            // Texture coordinates, groups, objects, smoothing and material
            // switches carry nothing the renderer uses.
            _ => {}
        }
    }

    Ok(ParsedObj {
        positions,
        obj_normals,
        corner_normals: (all_corners_have_normals && !triangles.is_empty())
            .then_some(corner_normals),
        triangles,
        mtllib,
        lines,
    })
}

fn parse_triple<'a>(
    mut parts: impl Iterator<Item = &'a str>,
    line: usize,
    what: &str,
) -> Result<[f64; 3], GeometryError> {
    let mut out = [0.0f64; 3];
    for slot in &mut out {
        let tok = parts.next().ok_or_else(|| GeometryError::Parse {
            line,
            message: format!("{what} needs 3 coordinates"),
        })?;
        *slot = tok.parse().map_err(|_| GeometryError::Parse {
            line,
            message: format!("bad {what} coordinate {tok:?}"),
        })?;
        if !slot.is_finite() {
            return Err(GeometryError::Parse {
                line,
                message: format!("non-finite {what} coordinate {tok:?}"),
            });
        }
    }
    Ok(out)
}

/// Resolves one `v`, `v/vt`, `v//vn` or `v/vt/vn` face corner to zero-based
/// (position, normal) indices.
fn parse_corner(
    token: &str,
    n_positions: usize,
    n_normals: usize,
    line: usize,
) -> Result<(u32, Option<u32>), GeometryError> {
    let mut fields = token.split('/');
    let v = fields.next().unwrap_or("");
    let _vt = fields.next();
    let vn = fields.next().filter(|s| !s.is_empty());
    let position = resolve_index(v, n_positions, line)?;
    let normal = vn.map(|s| resolve_index(s, n_normals, line)).transpose()?;
    Ok((position, normal))
}

fn resolve_index(tok: &str, count: usize, line: usize) -> Result<u32, GeometryError> {
    let raw: i64 = tok.parse().map_err(|_| GeometryError::Parse {
        line,
        message: format!("malformed face index {tok:?}"),
    })?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        -1
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(GeometryError::Parse {
            line,
            message: format!("index out of range: {raw} with {count} defined"),
        });
    }
    Ok(resolved as u32)
}

fn read_diffuse(path: &Path) -> Option<[f64; 3]> {
    let text = fs::read_to_string(path).ok()?;
    text.lines().find_map(|l| {
        let mut parts = l.split_whitespace();
        if parts.next()? != "Kd" {
            return None;
        }
        let mut c = [0.0; 3];
        for slot in &mut c {
            *slot = parts.next()?.parse::<f64>().ok()?.clamp(0.0, 1.0);
        }
        Some(c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) const CUBE_OBJ: &str = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    #[test]
    fn minimal_triangle() {
        let m = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.triangles().len(), 1);
        for n in m.normals() {
            assert!((n - Vector::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn cube_bounds() {
        let m = parse_mesh(CUBE_OBJ).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.triangles().len(), 12);
        let b = compute_aabb(&m);
        assert_eq!(b.min, Point::new(0.0, 0.0, 0.0));
        assert_eq!(b.max, Point::new(1.0, 1.0, 1.0));
        for n in m.normals() {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let text = CUBE_OBJ.replace("f 4 5 8", "f 4 5 9");
        let err = parse_mesh(&text).unwrap_err();
        match err {
            GeometryError::Parse { line, message } => {
                assert_eq!(line, 20);
                assert!(message.contains("index out of range"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_face_and_collinear() {
        let err = parse_mesh("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 x 3\n").unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 4, .. }));
        let err = parse_mesh("v 0 0 0\nv 1 1 1\nv 2 2 2\nf 1 2 3\n").unwrap_err();
        assert!(matches!(err, GeometryError::Degenerate { .. }), "{err}");
    }

    #[test]
    fn missing_file() {
        let err = load_mesh("/definitely/not/here.obj").unwrap_err();
        assert!(matches!(err, GeometryError::Io { .. }));
    }

    #[test]
    fn quads_are_fan_triangulated_and_normals_honoured() {
        let m = parse_mesh("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 2\nf 1//1 2//1 3//1 4//1\n")
            .unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
        assert!(m.normals().iter().all(|n| *n == Vector::z()));
    }

    #[test]
    fn negative_indices_and_mtl() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.mtl"), "newmtl skin\nKd 0.5 0.25 1.0\n").unwrap();
        std::fs::write(
            dir.path().join("t.obj"),
            "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl skin\nf -3 -2 -1\n",
        )
        .unwrap();
        let m = load_mesh(dir.path().join("t.obj")).unwrap();
        assert_eq!(m.base_color(), [0.5, 0.25, 1.0]);
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn identity_is_bitwise() {
        let m = Mesh::with_computed_normals(
            vec![
                Point::new(-0.0, 1.5, 2.25),
                Point::new(3.0, -0.0, 1e-300),
                Point::new(0.1, 0.2, 0.3),
            ],
            vec![[0, 1, 2]],
            DEFAULT_BASE_COLOR,
        )
        .unwrap();
        let out = apply_transform(&m, &Transform::identity());
        for (a, b) in m.vertices().iter().zip(out.vertices()) {
            for i in 0..3 {
                assert_eq!(a[i].to_bits(), b[i].to_bits());
            }
        }
    }

    #[test]
    fn translation_shifts_box() {
        let m = parse_mesh(CUBE_OBJ).unwrap();
        let t = Transform::translation_only(Vector::new(1.0, 2.0, 3.0));
        let b = compute_aabb(&apply_transform(&m, &t));
        assert_eq!(b.min, Point::new(1.0, 2.0, 3.0));
        assert_eq!(b.max, Point::new(2.0, 3.0, 4.0));
    }

    #[test]
    fn quarter_turn_about_z_matches_matrix() {
        let q = UnitQuaternion::from_axis_angle(&Vector::z_axis(), FRAC_PI_2);
        let t = Transform::new(q, Vector::zeros(), 1.0).unwrap();
        let p = t.apply_point(&Point::new(1.0, 0.0, 0.0));
        // Independent route: explicit rotation matrix about z.
        let (s, c) = FRAC_PI_2.sin_cos();
        let rot = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let v = [1.0, 0.0, 0.0];
        let expected: Vec<f64> = rot
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        for i in 0..3 {
            assert!((p[i] - expected[i]).abs() < 1e-9);
        }
        assert!((p - Point::new(0.0, 1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn degenerate_point_box() {
        let p = Point::new(0.5, -1.0, 2.0);
        let b = Aabb::from_points(&[p, p, p]).unwrap();
        assert_eq!(b.min, p);
        assert_eq!(b.max, p);
    }

    #[test]
    fn transform_validation() {
        assert!(Transform::from_parts([1.0, 0.0, 0.0, 0.0], [0.0; 3], 0.0).is_err());
        assert!(Transform::from_parts([1.0, 1.0, 0.0, 0.0], [0.0; 3], 1.0).is_err());
        assert!(Transform::from_parts([1.0, 0.0, 0.0, 0.0], [0.0; 3], 2.0).is_ok());
    }

    #[test]
    fn rect_iou() {
        let a = Rect {
            min: [0.0, 0.0],
            max: [2.0, 1.0],
        };
        let b = Rect {
            min: [1.0, 0.0],
            max: [3.0, 1.0],
        };
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        let c = Rect {
            min: [2.0, 0.0],
            max: [3.0, 1.0],
        };
        assert_eq!(a.iou(&c), 0.0);
    }
}
