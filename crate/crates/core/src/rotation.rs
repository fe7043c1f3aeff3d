//! Rotation representations and conversions.
//!
//! The canonical internal representation is the 3x3 rotation matrix; the
//! axis-angle (3 values) and 6D (first two matrix columns, 6 values)
//! encodings both convert through it.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Rodrigues formula: axis-angle vector to rotation matrix.
///
/// The rotation angle is the vector norm, the axis its direction. Small
/// angles fall back to the second-order series to stay accurate near zero.
pub fn axis_angle_to_matrix(aa: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !aa.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("axis-angle vector".into()));
    }
    let angle = aa.norm();
    let k = skew(aa);
    if angle < 1e-8 {
        // sin(t)/t ~ 1 - t^2/6, (1-cos(t))/t^2 ~ 1/2 - t^2/24
        let a = 1.0 - angle * angle / 6.0;
        let b = 0.5 - angle * angle / 24.0;
        return Ok(Matrix3::identity() + k * a + k * k * b);
    }
    let a = angle.sin() / angle;
    let b = (1.0 - angle.cos()) / (angle * angle);
    Ok(Matrix3::identity() + k * a + k * k * b)
}

/// Log map: rotation matrix to axis-angle vector.
///
/// Near a half-turn the skew part vanishes and the axis is recovered from
/// the symmetric part; exactly at a half-turn the axis sign is ambiguous
/// and the largest-diagonal convention picks one deterministically. A
/// matrix that is not close to orthogonal is rejected.
pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
    if !r.iter().all(|v| v.is_finite()) || ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
        return Err(Error::Decomposition(
            "input is not a proper rotation matrix".into(),
        ));
    }
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let axis_raw = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if angle < 1e-8 {
        // R ~ I + skew(aa); the skew part is twice the axis-angle vector.
        return Ok(axis_raw / 2.0);
    }
    if std::f64::consts::PI - angle > 1e-6 {
        return Ok(axis_raw * (angle / (2.0 * angle.sin())));
    }
    // Angle near pi: use the dominant diagonal of (R + I) / 2 = axis axis^T.
    let m = (r + Matrix3::identity()) / 2.0;
    let d = (0..3)
        .max_by(|&a, &b| m[(a, a)].partial_cmp(&m[(b, b)]).unwrap())
        .unwrap();
    if m[(d, d)] <= 0.0 {
        return Err(Error::Decomposition(
            "half-turn axis could not be recovered".into(),
        ));
    }
    let mut axis = Vector3::new(m[(0, d)], m[(1, d)], m[(2, d)]) / m[(d, d)].sqrt();
    axis.normalize_mut();
    Ok(axis * angle)
}

/// 6D rotation encoding (first two matrix columns) to rotation matrix via
/// Gram-Schmidt orthonormalization plus a cross product.
pub fn rot6d_to_matrix(r6: &[f64; 6]) -> Result<Matrix3<f64>> {
    if !r6.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("6d rotation".into()));
    }
    let a1 = Vector3::new(r6[0], r6[1], r6[2]);
    let a2 = Vector3::new(r6[3], r6[4], r6[5]);
    let n1 = a1.norm();
    let n2 = a2.norm();
    if n1 <= 1e-8 || n2 <= 1e-8 {
        return Err(Error::DegenerateRotation("near-zero column".into()));
    }
    let b1 = a1 / n1;
    let u2 = a2 / n2 - b1 * b1.dot(&(a2 / n2));
    if u2.norm() <= 1e-8 {
        return Err(Error::DegenerateRotation("parallel columns".into()));
    }
    let b2 = u2.normalize();
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Inverse of [`rot6d_to_matrix`] for proper rotations: the first two columns.
pub fn matrix_to_rot6d(r: &Matrix3<f64>) -> [f64; 6] {
    [
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Independent oracle: axis-angle -> unit quaternion -> matrix.
    fn quaternion_path(aa: &Vector3<f64>) -> Matrix3<f64> {
        let angle = aa.norm();
        let (w, v) = if angle < 1e-30 {
            (1.0, Vector3::zeros())
        } else {
            ((angle / 2.0).cos(), aa / angle * (angle / 2.0).sin())
        };
        let (x, y, z) = (v.x, v.y, v.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let r = axis_angle_to_matrix(&Vector3::zeros()).unwrap();
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn half_turn_about_z() {
        let r = axis_angle_to_matrix(&Vector3::new(0.0, 0.0, PI)).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!(max_abs_diff(&r, &expected) < 1e-15);
    }

    #[test]
    fn matches_quaternion_oracle() {
        let aa = Vector3::new(0.3, -0.2, 0.7);
        let r = axis_angle_to_matrix(&aa).unwrap();
        assert!(max_abs_diff(&r, &quaternion_path(&aa)) < 1e-12);
    }

    #[test]
    fn non_finite_axis_angle_rejected() {
        assert!(matches!(
            axis_angle_to_matrix(&Vector3::new(f64::NAN, 0.0, 0.0)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rot6d_canonical_frame_is_identity() {
        let r = rot6d_to_matrix(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(max_abs_diff(&r, &Matrix3::identity()) < 1e-15);
    }

    #[test]
    fn rot6d_is_scale_invariant() {
        let r = rot6d_to_matrix(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        assert!(max_abs_diff(&r, &Matrix3::identity()) < 1e-15);
    }

    #[test]
    fn rot6d_matches_manual_gram_schmidt() {
        // b1 = (1,0,0); u2 = (0.5,1,0) - 0.5*b1 = (0,1,0); b3 = b1 x b2.
        let r = rot6d_to_matrix(&[1.0, 0.0, 0.0, 0.5, 1.0, 0.0]).unwrap();
        assert!(max_abs_diff(&r, &Matrix3::identity()) < 1e-12);

        let v1 = Vector3::new(0.2, -0.4, 0.9);
        let v2 = Vector3::new(-0.7, 0.1, 0.3);
        let b1: Vector3<f64> = v1 / v1.norm();
        let u2 = v2 - b1 * b1.dot(&v2);
        let b2 = u2 / u2.norm();
        let expected = Matrix3::from_columns(&[b1, b2, b1.cross(&b2)]);
        let r = rot6d_to_matrix(&[v1.x, v1.y, v1.z, v2.x, v2.y, v2.z]).unwrap();
        assert!(max_abs_diff(&r, &expected) < 1e-12);
    }

    #[test]
    fn rot6d_degenerate_inputs_rejected() {
        assert!(matches!(
            rot6d_to_matrix(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Err(Error::DegenerateRotation(_))
        ));
        assert!(matches!(
            rot6d_to_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]),
            Err(Error::DegenerateRotation(_))
        ));
    }

    #[test]
    fn constructors_return_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let aa = Vector3::new(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
            );
            let r = axis_angle_to_matrix(&aa).unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-10);
            assert!((r.determinant() - 1.0).abs() < 1e-10);

            let r6 = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            if let Ok(r) = rot6d_to_matrix(&r6) {
                assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-10);
                assert!((r.determinant() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rot6d_of_matrix_columns_recovers_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let aa = Vector3::new(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
            );
            let r = axis_angle_to_matrix(&aa).unwrap();
            let back = rot6d_to_matrix(&matrix_to_rot6d(&r)).unwrap();
            assert!(max_abs_diff(&back, &r) < 1e-10);
        }
    }

    #[test]
    fn log_map_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let aa = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * rng.random_range(0.0..3.0);
            if aa.norm() >= PI {
                continue;
            }
            let r = axis_angle_to_matrix(&aa).unwrap();
            let back = matrix_to_axis_angle(&r).unwrap();
            assert!((back - aa).norm() < 1e-9, "aa={aa:?} back={back:?}");
        }
    }

    #[test]
    fn log_map_rejects_non_rotation() {
        let m = Matrix3::new(2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            matrix_to_axis_angle(&m),
            Err(Error::Decomposition(_))
        ));
    }
}
