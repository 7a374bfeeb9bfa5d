use nalgebra::{UnitQuaternion, Vector3};
use pilegen_core::geometry::{apply_transform, compute_aabb, Mesh, Point, Transform, Vector};
use proptest::prelude::*;

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 3..40).prop_filter_map(
        "degenerate",
        |pts| {
            let vertices: Vec<Point> = pts.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
            let triangles: Vec<[u32; 3]> = (1..vertices.len() as u32 - 1)
                .map(|i| [0, i, i + 1])
                .collect();
            Mesh::with_computed_normals(vertices, triangles, [0.5; 3]).ok()
        },
    )
}

fn transform_strategy() -> impl Strategy<Value = Transform> {
    (
        (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        0.2f64..4.0,
    )
        .prop_map(|((r, p, y), (tx, ty, tz), s)| {
            Transform::new(
                UnitQuaternion::from_euler_angles(r, p, y),
                Vector3::new(tx, ty, tz),
                s,
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn aabb_is_componentwise_fold(m in mesh_strategy()) {
        let b = compute_aabb(&m);
        for axis in 0..3 {
            let lo = m.vertices().iter().map(|v| v[axis]).fold(f64::INFINITY, f64::min);
            let hi = m.vertices().iter().map(|v| v[axis]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(b.min[axis], lo);
            prop_assert_eq!(b.max[axis], hi);
        }
        prop_assert!(m.vertices().iter().all(|v| b.contains(v)));
    }

    #[test]
    fn inverse_round_trip(m in mesh_strategy(), t in transform_strategy()) {
        let back = apply_transform(&apply_transform(&m, &t), &t.inverse());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            prop_assert!((a - b).norm() <= 1e-9 * (1.0 + b.coords.norm()));
        }
        for (a, b) in back.normals().iter().zip(m.normals()) {
            prop_assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn translation_shifts_aabb(m in mesh_strategy(), (x, y, z) in (-9.0f64..9.0, -9.0f64..9.0, -9.0f64..9.0)) {
        let t = Vector::new(x, y, z);
        let before = compute_aabb(&m);
        let after = compute_aabb(&apply_transform(&m, &Transform::translation_only(t)));
        prop_assert!((after.min - (before.min + t)).norm() <= 1e-12);
        prop_assert!((after.max - (before.max + t)).norm() <= 1e-12);
    }

    #[test]
    fn normals_stay_unit(m in mesh_strategy(), t in transform_strategy()) {
        for n in apply_transform(&m, &t).normals() {
            prop_assert!((n.norm() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn bundled_assets_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets");
    for name in ["carcass_a.obj", "carcass_b.obj"] {
        let m = pilegen_core::geometry::load_mesh(format!("{dir}/{name}")).unwrap();
        let e = compute_aabb(&m).extent();
        assert!(e.x > 0.25 && e.x < 0.35, "{name} length {}", e.x);
        assert!(m.triangles().len() > 1000);
        assert_ne!(m.base_color(), pilegen_core::geometry::DEFAULT_BASE_COLOR);
    }
}
