//! Axis-angle and 6D rotation conversions.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub(crate) type Mat3 = [[f64; 3]; 3];

pub(crate) const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Rodrigues' formula. The zero vector maps to the identity exactly.
pub fn axis_angle_to_matrix(r: [f64; 3]) -> Mat3 {
    let theta2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let (a, b, k) = if theta2 < 1e-16 {
        // second-order Taylor expansion, sin(t)/t ~ 1 and (1 - cos t)/t^2 ~ 1/2
        (1.0, 0.5, r)
    } else {
        let theta = libm::sqrt(theta2);
        let k = [r[0] / theta, r[1] / theta, r[2] / theta];
        (libm::sin(theta), 1.0 - libm::cos(theta), k)
    };
    let skew = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let skew2 = mat_mul(&skew, &skew);
    let mut out = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * skew[i][j] + b * skew2[i][j];
        }
    }
    out
}

/// Logarithm map of a rotation matrix, returning an angle in `[0, pi]`.
///
/// Goes through a unit quaternion so rotations near `pi` stay accurate.
pub fn matrix_to_axis_angle(m: &Mat3) -> [f64; 3] {
    let rot = Rotation3::from_matrix_unchecked(to_na(m));
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let v = q.scaled_axis();
    [v.x, v.y, v.z]
}

/// Rotation matrix from the 6D representation `[r00, r01, r10, r11, r20, r21]`
/// (the first two columns, row-interleaved) via Gram-Schmidt.
pub(crate) fn rot6d_to_matrix(f: &[f64]) -> Option<Mat3> {
    let a1 = Vector3::new(f[0], f[2], f[4]);
    let a2 = Vector3::new(f[1], f[3], f[5]);
    let b1 = a1.try_normalize(1e-12)?;
    let b2 = (a2 - b1 * b1.dot(&a2)).try_normalize(1e-12)?;
    let b3 = b1.cross(&b2);
    Some(from_na(&Matrix3::from_columns(&[b1, b2, b3])))
}

pub(crate) fn matrix_to_rot6d(m: &Mat3) -> [f64; 6] {
    [m[0][0], m[0][1], m[1][0], m[1][1], m[2][0], m[2][1]]
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub(crate) fn to_na(m: &Mat3) -> Matrix3<f64> {
    Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    )
}

pub(crate) fn from_na(m: &Matrix3<f64>) -> Mat3 {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() <= tol))
    }

    #[test]
    fn zero_is_identity_exactly() {
        assert_eq!(axis_angle_to_matrix([0.0; 3]), IDENTITY);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_angle_to_matrix([0.0, 0.0, core::f64::consts::FRAC_PI_2]);
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(close(&r, &expected, 1e-15));
    }

    #[test]
    fn log_map_inverts_exp_map() {
        for r in [[0.3, -0.2, 0.9], [3.0, 0.1, 0.0], [1e-9, 0.0, 2e-9], [0.0, 3.1, 0.0]] {
            let back = matrix_to_axis_angle(&axis_angle_to_matrix(r));
            for k in 0..3 {
                assert!((back[k] - r[k]).abs() < 1e-9, "{r:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn rot6d_roundtrip() {
        let m = axis_angle_to_matrix([0.4, -1.1, 0.25]);
        let back = rot6d_to_matrix(&matrix_to_rot6d(&m)).unwrap();
        assert!(close(&m, &back, 1e-12));
        assert!(rot6d_to_matrix(&[0.0; 6]).is_none());
    }
}
