//! Small rotation/interpolation helpers shared across modules.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Derives an independent RNG seed from a master seed and a stream label
/// (splitmix64 over the mixed pair). Used everywhere a sub-task needs its
/// own deterministic stream: per-sequence, per-frame, per-joint seeds.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rotation matrix for an axis-angle vector (angle = |v|, axis = v/|v|).
/// Uses a second-order series below 1e-8 rad so the map stays smooth at zero.
pub fn rodrigues(v: &Vec3) -> Mat3 {
    let angle = v.norm();
    let k = skew(v);
    if angle < 1e-8 {
        Mat3::identity() + k + k * k * 0.5
    } else {
        let (s, c) = (angle.sin(), angle.cos());
        Mat3::identity() + k * (s / angle) + k * k * ((1.0 - c) / (angle * angle))
    }
}

/// Partial derivatives of `rodrigues(v)` with respect to the three components
/// of `v`. At the origin the derivative of the exponential map is exactly the
/// generator `[e_i]x`; away from it the closed form
/// `dR/dv_i = ((v_i [v]x + [v x (I - R) e_i]x) / |v|^2) R` applies.
pub fn rodrigues_jacobian(v: &Vec3) -> [Mat3; 3] {
    let angle2 = v.norm_squared();
    if angle2 < 1e-14 {
        return [
            skew(&Vec3::new(1.0, 0.0, 0.0)),
            skew(&Vec3::new(0.0, 1.0, 0.0)),
            skew(&Vec3::new(0.0, 0.0, 1.0)),
        ];
    }
    let r = rodrigues(v);
    let i_m_r = Mat3::identity() - r;
    let mut out = [Mat3::zeros(); 3];
    for i in 0..3 {
        let e_i = Vec3::from_fn(|r_, _| if r_ == i { 1.0 } else { 0.0 });
        let term = v[i] * skew(v) + skew(&v.cross(&(i_m_r * e_i)));
        out[i] = (term / angle2) * r;
    }
    out
}

/// Axis-angle vector of a rotation matrix (angle in [0, pi]).
pub fn log_rotation(r: &Mat3) -> Vec3 {
    let q = Quat::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    q.scaled_axis()
}

/// Smallest-angle rotation carrying unit vector `from` onto unit vector `to`
/// (zero twist about the source direction). Antiparallel inputs rotate by pi
/// about a deterministic axis orthogonal to `from`.
pub fn min_rotation(from: &Vec3, to: &Vec3) -> Mat3 {
    let c = from.dot(to);
    let axis = from.cross(to);
    let s = axis.norm();
    if s < 1e-12 {
        if c >= 0.0 {
            return Mat3::identity();
        }
        let orth = orthogonal_unit(from);
        return rodrigues(&(orth * std::f64::consts::PI));
    }
    let angle = s.atan2(c);
    rodrigues(&(axis * (angle / s)))
}

/// Deterministic unit vector orthogonal to `v` (|v| > 0).
pub fn orthogonal_unit(v: &Vec3) -> Vec3 {
    // Cross with the coordinate axis of smallest |component| to stay well
    // conditioned.
    let a = v.map(f64::abs);
    let basis = if a.x <= a.y && a.x <= a.z {
        Vec3::new(1.0, 0.0, 0.0)
    } else if a.y <= a.z {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    v.cross(&basis).normalize()
}

/// Frobenius distance of `R^T R` from the identity; zero for orthonormal
/// matrices with determinant +1.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    let e = (r.transpose() * r - Mat3::identity()).norm();
    let det_err = (r.determinant() - 1.0).abs();
    e.max(det_err)
}

/// Re-orthonormalizes a slightly drifted rotation matrix via Gram-Schmidt on
/// its columns. Intended for drift well below 1e-4; larger errors should be
/// rejected by the caller.
pub fn reorthonormalize(r: &Mat3) -> Mat3 {
    let c0: Vec3 = r.column(0).into_owned().normalize();
    let mut c1: Vec3 = r.column(1).into_owned();
    c1 -= c0 * c0.dot(&c1);
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

/// Shortest-arc spherical interpolation between two rotations, exact at both
/// endpoints and with constant angular rate in between. Falls back to
/// normalized lerp for nearly identical inputs, where the rate deviation is
/// O(angle^3) and far below measurement tolerance.
pub fn slerp(q0: &Quat, q1: &Quat, t: f64) -> Quat {
    if t == 0.0 {
        return *q0;
    }
    let mut b = *q1.quaternion();
    let mut dot = q0.quaternion().dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if t == 1.0 {
        return Quat::from_quaternion(b);
    }
    if dot > 1.0 - 1e-9 {
        let lerped = q0.quaternion().lerp(&b, t);
        return Quat::from_quaternion(lerped);
    }
    let theta = dot.min(1.0).acos();
    let s = theta.sin();
    let w0 = ((1.0 - t) * theta).sin() / s;
    let w1 = (t * theta).sin() / s;
    Quat::from_quaternion(q0.quaternion() * w0 + b * w1)
}

/// Angle of the relative rotation between two quaternions, in [0, pi].
pub fn rotation_angle_between(q0: &Quat, q1: &Quat) -> f64 {
    q0.rotation_to(q1).angle()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    #[test]
    fn rodrigues_matches_nalgebra_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v = random_vec(&mut rng, 2.5);
            let ours = rodrigues(&v);
            let theirs = Rotation3::from_scaled_axis(v);
            assert_relative_eq!(ours, *theirs.matrix(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rodrigues_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let eps = 1e-6;
        for _ in 0..50 {
            let v = random_vec(&mut rng, 2.0);
            let jac = rodrigues_jacobian(&v);
            for i in 0..3 {
                let mut vp = v;
                let mut vm = v;
                vp[i] += eps;
                vm[i] -= eps;
                let fd = (rodrigues(&vp) - rodrigues(&vm)) / (2.0 * eps);
                assert_relative_eq!(jac[i], fd, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn rodrigues_jacobian_at_zero_is_generator() {
        let jac = rodrigues_jacobian(&Vec3::zeros());
        assert_relative_eq!(jac[0], skew(&Vec3::new(1.0, 0.0, 0.0)), epsilon = 1e-15);
    }

    #[test]
    fn min_rotation_aligns_and_has_smallest_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let a = random_vec(&mut rng, 1.0).normalize();
            let b = random_vec(&mut rng, 1.0).normalize();
            let r = min_rotation(&a, &b);
            assert_relative_eq!(r * a, b, epsilon = 1e-12);
            let angle = log_rotation(&r).norm();
            assert_relative_eq!(angle, a.dot(&b).clamp(-1.0, 1.0).acos(), epsilon = 1e-9);
        }
    }

    #[test]
    fn min_rotation_handles_antiparallel() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let r = min_rotation(&a, &(-a));
        assert_relative_eq!(r * a, -a, epsilon = 1e-12);
        assert!(orthonormality_error(&r) < 1e-12);
    }

    #[test]
    fn slerp_is_exact_at_endpoints() {
        let q0 = Quat::from_scaled_axis(Vec3::new(0.3, -0.2, 0.9));
        let q1 = Quat::from_scaled_axis(Vec3::new(-1.2, 0.4, 0.1));
        assert_eq!(slerp(&q0, &q1, 0.0), q0);
        let at_one = slerp(&q0, &q1, 1.0);
        assert!(rotation_angle_between(&at_one, &q1) < 1e-15);
    }

    #[test]
    fn slerp_has_constant_geodesic_rate() {
        let q0 = Quat::from_scaled_axis(Vec3::new(0.5, 0.1, -0.3));
        let q1 = Quat::from_scaled_axis(Vec3::new(-0.4, 1.1, 0.6));
        let n = 17;
        let frames: Vec<Quat> = (0..=n)
            .map(|i| slerp(&q0, &q1, i as f64 / n as f64))
            .collect();
        let step0 = rotation_angle_between(&frames[0], &frames[1]);
        for w in frames.windows(2) {
            let step = rotation_angle_between(&w[0], &w[1]);
            assert!((step - step0).abs() < 1e-9, "rate drift {}", step - step0);
        }
    }

    #[test]
    fn slerp_takes_shortest_arc_under_sign_flip() {
        let q0 = Quat::from_scaled_axis(Vec3::new(0.1, 0.0, 0.0));
        let q1_mat = Quat::from_scaled_axis(Vec3::new(0.4, 0.0, 0.0));
        // Same rotation, opposite quaternion sign.
        let q1 = Quat::from_quaternion(-q1_mat.quaternion());
        let mid = slerp(&q0, &q1, 0.5);
        assert!(rotation_angle_between(&q0, &mid) < 0.2);
    }

    #[test]
    fn reorthonormalize_fixes_small_drift() {
        let r = rodrigues(&Vec3::new(0.4, -0.7, 0.2));
        let drifted = r + Mat3::from_element(3e-5);
        let fixed = reorthonormalize(&drifted);
        assert!(orthonormality_error(&fixed) < 1e-12);
        assert!((fixed - r).norm() < 1e-4);
    }
}
