//! Camera models and point-set alignment.
//!
//! Image coordinates follow the usual convention: origin at the top-left,
//! +x right, +y down, unit pixels. 3D inputs are in meters.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Weak-perspective camera: orthographic projection followed by an isotropic
/// scale (pixels per meter) and a 2D pixel translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakPerspectiveCamera {
    scale: f64,
    translation: Vector2<f64>,
}

impl WeakPerspectiveCamera {
    pub fn new(scale: f64, translation: Vector2<f64>) -> Result<Self> {
        if !scale.is_finite() || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("weak-perspective camera".into()));
        }
        if scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "camera scale must be positive, got {scale}"
            )));
        }
        Ok(WeakPerspectiveCamera { scale, translation })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn translation(&self) -> Vector2<f64> {
        self.translation
    }
}

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrinsicCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl IntrinsicCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("intrinsic camera".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        Ok(IntrinsicCamera { fx, fy, cx, cy })
    }
}

/// Least-squares similarity (rotation, uniform scale, translation).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: Matrix3::identity(),
            scale: 1.0,
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn apply_all(&self, points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

/// Projects each point as `scale * (x, y) + translation`, discarding z.
pub fn project_weak(points: &[Vector3<f64>], cam: &WeakPerspectiveCamera) -> Vec<Vector2<f64>> {
    points
        .iter()
        .map(|p| Vector2::new(p.x, p.y) * cam.scale + cam.translation)
        .collect()
}

/// Pinhole projection `(fx*x/z + cx, fy*y/z + cy)`; every z must exceed 1e-6.
pub fn project_perspective(
    points: &[Vector3<f64>],
    cam: &IntrinsicCamera,
) -> Result<Vec<Vector2<f64>>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.z <= 1e-6 {
                return Err(Error::BehindCamera { index, z: p.z });
            }
            Ok(Vector2::new(
                cam.fx * p.x / p.z + cam.cx,
                cam.fy * p.y / p.z + cam.cy,
            ))
        })
        .collect()
}

/// Solves for the similarity transform minimizing
/// `sum |s * R * src_i + t - tgt_i|^2`.
///
/// Centers both clouds, runs an SVD of the cross-covariance with the
/// determinant-sign reflection correction, and recovers the scale in
/// closed form. Fewer than 3 points or a centered source of rank < 2
/// (all points coincident or collinear) is a degenerate configuration.
pub fn kabsch_similarity(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "point counts differ: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let src_mean = source.iter().sum::<Vector3<f64>>() / n as f64;
    let tgt_mean = target.iter().sum::<Vector3<f64>>() / n as f64;

    let mut cross = Matrix3::<f64>::zeros();
    let mut src_var = 0.0;
    for (s, t) in source.iter().zip(target) {
        let sc = s - src_mean;
        let tc = t - tgt_mean;
        cross += tc * sc.transpose();
        src_var += sc.norm_squared();
    }
    if src_var <= 1e-24 {
        return Err(Error::DegenerateConfiguration(
            "source points are all coincident".into(),
        ));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let singular = svd.singular_values;
    if singular[1] <= 1e-12 * singular[0].max(1e-300) {
        return Err(Error::DegenerateConfiguration(
            "centered source is rank-deficient (collinear points)".into(),
        ));
    }

    let sign = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * d * v_t;

    let scale = (singular[0] + singular[1] + sign * singular[2]) / src_var;
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::DegenerateConfiguration(format!(
            "recovered scale is not positive: {scale}"
        )));
    }
    let translation = tgt_mean - rotation * src_mean * scale;
    Ok(SimilarityTransform {
        rotation,
        scale,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::axis_angle_to_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn random_similarity(rng: &mut ChaCha8Rng) -> SimilarityTransform {
        let aa = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        SimilarityTransform {
            rotation: axis_angle_to_matrix(&aa).unwrap(),
            scale: rng.random_range(0.2..4.0),
            translation: Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ),
        }
    }

    fn residual(t: &SimilarityTransform, src: &[Vector3<f64>], tgt: &[Vector3<f64>]) -> f64 {
        src.iter()
            .zip(tgt)
            .map(|(s, g)| (t.apply(s) - g).norm_squared())
            .sum()
    }

    #[test]
    fn identity_camera_drops_z() {
        let cam = WeakPerspectiveCamera::new(1.0, Vector2::zeros()).unwrap();
        let out = project_weak(&[Vector3::new(3.0, 4.0, 9.0)], &cam);
        assert_eq!(out[0], Vector2::new(3.0, 4.0));
    }

    #[test]
    fn weak_projection_is_affine_per_point() {
        let cam = WeakPerspectiveCamera::new(2.0, Vector2::new(1.0, -1.0)).unwrap();
        let out = project_weak(&[Vector3::new(1.0, 2.0, 5.0)], &cam);
        assert_eq!(out[0], Vector2::new(3.0, 3.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, 40);
        let cam = WeakPerspectiveCamera::new(
            rng.random_range(0.5..5.0),
            Vector2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)),
        )
        .unwrap();
        let projected = project_weak(&cloud, &cam);
        for (p, q) in cloud.iter().zip(&projected) {
            // elementwise oracle
            assert!((q.x - (cam.scale() * p.x + cam.translation().x)).abs() < 1e-12);
            assert!((q.y - (cam.scale() * p.y + cam.translation().y)).abs() < 1e-12);
        }
        // affine property: project(a*p + q) = a*(project(p) - t) + project(q)
        for i in 0..cloud.len() {
            for j in 0..cloud.len() {
                let a = 0.37;
                let combo = project_weak(&[cloud[i] * a + cloud[j]], &cam)[0];
                let expect = (projected[i] - cam.translation()) * a + projected[j];
                assert!((combo - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn pinhole_definition() {
        let cam = IntrinsicCamera::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let out = project_perspective(&[Vector3::new(2.0, 4.0, 2.0)], &cam).unwrap();
        assert_eq!(out[0], Vector2::new(1.0, 2.0));
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let cam = IntrinsicCamera::new(500.0, 400.0, 120.0, 90.0).unwrap();
        for z in [0.1, 1.0, 25.0] {
            let out = project_perspective(&[Vector3::new(0.0, 0.0, z)], &cam).unwrap();
            assert_eq!(out[0], Vector2::new(120.0, 90.0));
        }
    }

    #[test]
    fn behind_camera_identifies_row() {
        let cam = IntrinsicCamera::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let pts = [Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 1.0, 0.0)];
        match project_perspective(&pts, &cam) {
            Err(Error::BehindCamera { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected behind-camera error, got {other:?}"),
        }
    }

    #[test]
    fn self_alignment_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = random_cloud(&mut rng, 20);
        let t = kabsch_similarity(&cloud, &cloud).unwrap();
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-10);
        assert!((t.scale - 1.0).abs() < 1e-10);
        assert!(t.translation.norm() < 1e-10);
    }

    #[test]
    fn exact_model_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let cloud = random_cloud(&mut rng, 12);
            let g = random_similarity(&mut rng);
            let target = g.apply_all(&cloud);
            let t = kabsch_similarity(&cloud, &target).unwrap();
            assert!((t.rotation - g.rotation).abs().max() < 1e-8);
            assert!((t.scale - g.scale).abs() < 1e-8 * g.scale);
            assert!((t.translation - g.translation).norm() < 1e-8);
        }
    }

    #[test]
    fn beats_random_search_on_noisy_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cloud = random_cloud(&mut rng, 15);
        let g = random_similarity(&mut rng);
        let target: Vec<_> = g
            .apply_all(&cloud)
            .into_iter()
            .map(|p| {
                p + Vector3::new(
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                )
            })
            .collect();
        let best = kabsch_similarity(&cloud, &target).unwrap();
        let best_res = residual(&best, &cloud, &target);
        for _ in 0..10_000 {
            let cand = random_similarity(&mut rng);
            assert!(residual(&cand, &cloud, &target) >= best_res - 1e-12);
        }
    }

    #[test]
    fn free_scale_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let cloud = random_cloud(&mut rng, 10);
            let noisy: Vec<_> = random_cloud(&mut rng, 10);
            let sim = kabsch_similarity(&cloud, &noisy).unwrap();
            let rigid = SimilarityTransform {
                rotation: sim.rotation,
                scale: 1.0,
                translation: {
                    let src_mean = cloud.iter().sum::<Vector3<f64>>() / 10.0;
                    let tgt_mean = noisy.iter().sum::<Vector3<f64>>() / 10.0;
                    tgt_mean - sim.rotation * src_mean
                },
            };
            assert!(
                residual(&sim, &cloud, &noisy) <= residual(&rigid, &cloud, &noisy) + 1e-9,
                "similarity fit must not be worse than the scale-1 fit"
            );
        }
    }

    #[test]
    fn degenerate_configurations_rejected() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            kabsch_similarity(&[p, p], &[p, p]),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            kabsch_similarity(&[p, p, p], &[p, p, p]),
            Err(Error::DegenerateConfiguration(_))
        ));
        // collinear source
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let target = random_cloud(&mut ChaCha8Rng::seed_from_u64(1), 5);
        assert!(matches!(
            kabsch_similarity(&line, &target),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn recovers_sampled_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let cloud = random_cloud(&mut rng, 8);
            let g = random_similarity(&mut rng);
            let t = kabsch_similarity(&cloud, &g.apply_all(&cloud)).unwrap();
            for p in &cloud {
                assert!((t.apply(p) - g.apply(p)).norm() < 1e-8);
            }
        }
    }
}
