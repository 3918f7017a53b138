use posegen_core::camera::{camera_depth, camera_depth_with_floor, DEFAULT_DEPTH_FLOOR};
use posegen_core::WeakPerspectiveCamera;
use proptest::prelude::*;

fn cam() -> impl Strategy<Value = WeakPerspectiveCamera> {
    (0.1f64..4.0, -1.0f64..1.0, -1.0f64..1.0, 1u32..1024, 1u32..1024)
        .prop_map(|(s, tx, ty, w, h)| WeakPerspectiveCamera::new(s, tx, ty, w, h).unwrap())
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-2.0f64..2.0, -2.0f64..2.0, -5.0f64..5.0]
}

proptest! {
    #[test]
    fn projection_ignores_z(c in cam(), p in point(), z in -100.0f64..100.0) {
        let q = [p[0], p[1], z];
        prop_assert_eq!(c.project_point(&p), c.project_point(&q));
    }

    // Exact when the mixing weights and coordinates are dyadic rationals.
    #[test]
    fn projection_is_affine(
        s in 1u32..8, tx in -8i32..8, ty in -8i32..8,
        p in [-64i32..64, -64i32..64], q in [-64i32..64, -64i32..64], a in 0u32..=4,
    ) {
        let c = WeakPerspectiveCamera::new(s as f64 / 4.0, tx as f64 / 8.0, ty as f64 / 8.0, 64, 32).unwrap();
        let p = [p[0] as f64 / 16.0, p[1] as f64 / 16.0, 0.0];
        let q = [q[0] as f64 / 16.0, q[1] as f64 / 16.0, 3.0];
        let a = a as f64 / 4.0;
        let mix = [a * p[0] + (1.0 - a) * q[0], a * p[1] + (1.0 - a) * q[1], 1.0];
        let (pp, pq, pm) = (c.project_point(&p), c.project_point(&q), c.project_point(&mix));
        prop_assert_eq!(pm, [a * pp[0] + (1.0 - a) * pq[0], a * pp[1] + (1.0 - a) * pq[1]]);
    }

    #[test]
    fn depth_respects_floor(pts in prop::collection::vec(point(), 1..50), floor in 0.01f64..1.0) {
        let d = camera_depth_with_floor(&pts, floor).unwrap();
        prop_assert!(d.iter().all(|v| *v >= floor));
        prop_assert!(d.iter().any(|v| *v == floor));
        let d = camera_depth(&pts).unwrap();
        prop_assert!(d.iter().all(|v| *v >= DEFAULT_DEPTH_FLOOR && *v > 0.0));
    }
}

#[test]
fn empty_point_set_has_no_depth() {
    assert!(camera_depth(&[]).is_err());
}
