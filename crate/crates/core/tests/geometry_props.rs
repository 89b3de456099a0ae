use nalgebra::{Point3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use trackbench::geometry::{
    motion_magnitude, project, reprojection_error, unproject, CameraIntrinsics, CameraPose,
};
use trackbench::model::{ImageSpace, Pixel};

/// Row-major 4x4 world-to-camera matrix from raw quaternion coefficients,
/// using the textbook rotation-matrix expansion.
fn extrinsic_matrix(q: [f64; 4], t: [f64; 3]) -> [[f64; 4]; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            t[0],
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            t[1],
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
            t[2],
        ],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn matrix_project(k: [f64; 4], m: [[f64; 4]; 4], p: [f64; 3]) -> (f64, f64, f64) {
    let h = [p[0], p[1], p[2], 1.0];
    let cam: Vec<f64> = (0..3)
        .map(|r| (0..4).map(|c| m[r][c] * h[c]).sum())
        .collect();
    let [fx, fy, cx, cy] = k;
    // K [x y z]^T then divide by the third row.
    let u = fx * cam[0] + cx * cam[2];
    let v = fy * cam[1] + cy * cam[2];
    (u / cam[2], v / cam[2], cam[2])
}

fn quat() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64).prop_filter("non-degenerate", |q| {
        q.iter().map(|c| c * c).sum::<f64>() > 0.01
    })
}

fn space() -> ImageSpace {
    ImageSpace::new(640, 480).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn projection_matches_matrix_oracle(
        q in quat(),
        t in prop::array::uniform3(-5.0..5.0f64),
        p in prop::array::uniform3(-10.0..10.0f64),
        k in (50.0..2000.0f64, 50.0..2000.0f64, 0.0..640.0f64, 0.0..480.0f64),
    ) {
        let pose = CameraPose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::from(t)).unwrap();
        let intr = CameraIntrinsics::new(k.0, k.1, k.2, k.3).unwrap();
        let (u, v, z) = matrix_project([k.0, k.1, k.2, k.3], extrinsic_matrix(q, t), p);
        prop_assume!(z.abs() > 0.05);
        let got = project(&Point3::from(p), &pose, &intr, &space()).unwrap();
        // 1e-9 px near the image; far outside it, the same relative precision.
        let tol = |c: f64| 1e-9 * (c.abs() / 1e4).max(1.0);
        prop_assert!((got.pixel.x - u).abs() <= tol(u), "{} vs {}", got.pixel.x, u);
        prop_assert!((got.pixel.y - v).abs() <= tol(v), "{} vs {}", got.pixel.y, v);
        prop_assert!((got.depth - z).abs() <= 1e-9);
        let inside = z > 0.0 && u >= 0.0 && v >= 0.0 && u < 640.0 && v < 480.0;
        if (u - 640.0).abs() > 1e-6 && (v - 480.0).abs() > 1e-6 && u.abs() > 1e-6 && v.abs() > 1e-6 {
            prop_assert_eq!(got.in_view, inside);
        }
    }

    #[test]
    fn reprojection_error_matches_oracle(
        q in quat(),
        t in prop::array::uniform3(-1.0..1.0f64),
        p in (-2.0..2.0f64, -2.0..2.0f64, 4.0..20.0f64),
        obs in (0.0..640.0f64, 0.0..480.0f64),
    ) {
        // Keep the point in front: rotate it by the pose's inverse first.
        let pose = CameraPose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::from(t)).unwrap();
        let world = pose.rotation.inverse() * (Point3::new(p.0, p.1, p.2) - pose.translation);
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let (u, v, _) = matrix_project([500.0, 500.0, 320.0, 240.0], extrinsic_matrix(q, t), [world.x, world.y, world.z]);
        let want = ((obs.0 - u).powi(2) + (obs.1 - v).powi(2)).sqrt();
        let got = reprojection_error(Pixel::new(obs.0, obs.1), &world, &pose, &intr, &space()).unwrap();
        prop_assert!((got - want).abs() <= 1e-9);
    }

    #[test]
    fn unproject_inverts_project(
        q in quat(),
        t in prop::array::uniform3(-3.0..3.0f64),
        px in (0.0..640.0f64, 0.0..480.0f64),
        depth in 0.1..50.0f64,
    ) {
        let pose = CameraPose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::from(t)).unwrap();
        let intr = CameraIntrinsics::new(400.0, 420.0, 320.0, 240.0).unwrap();
        let world = unproject(Pixel::new(px.0, px.1), depth, &pose, &intr);
        let back = project(&world, &pose, &intr, &space()).unwrap();
        prop_assert!((back.pixel.x - px.0).abs() < 1e-7 && (back.pixel.y - px.1).abs() < 1e-7);
        prop_assert!((back.depth - depth).abs() < 1e-9 * depth.max(1.0));
    }

    #[test]
    fn rigid_motion_of_world_and_camera_changes_nothing(
        q in quat(),
        t in prop::array::uniform3(-3.0..3.0f64),
        g in quat(),
        gt in prop::array::uniform3(-10.0..10.0f64),
        p in (-2.0..2.0f64, -2.0..2.0f64, 2.0..20.0f64),
    ) {
        let pose = CameraPose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::from(t)).unwrap();
        let world = pose.rotation.inverse() * (Point3::new(p.0, p.1, p.2) - pose.translation);
        // Move the world by G; the camera follows: R' = R G^-1, t' = t - R' g.
        let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(g[0], g[1], g[2], g[3]));
        let shift = Vector3::from(gt);
        let moved = rot * world + shift;
        let r2 = pose.rotation * rot.inverse();
        let pose2 = CameraPose { rotation: r2, translation: pose.translation - (r2 * shift) };
        let intr = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let a = project(&world, &pose, &intr, &space()).unwrap();
        let b = project(&moved, &pose2, &intr, &space()).unwrap();
        prop_assert!(a.pixel.distance(&b.pixel) < 1e-8);
        let m = motion_magnitude(&pose, &pose2, 1.0);
        prop_assert!(m >= 0.0 && (m - motion_magnitude(&pose2, &pose, 1.0)).abs() < 1e-9);
    }
}
