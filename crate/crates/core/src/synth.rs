//! Synthetic datasets: the sinusoidal inverse problem and the two-link arm.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{HmeError, Result};

pub const TOY_NOISE_SD: f64 = 0.05;
pub const TOY_SIZE: usize = 200;

/// `x = t + 0.3 sin(2πt)` without noise.
pub fn toy_forward(t: f64) -> f64 {
    t + 0.3 * libm::sin(2.0 * PI * t)
}

/// Draws `t ~ U(0, 1)` and `x = t + 0.3 sin(2πt) + ε`. The input is `x`
/// (with a bias column) and the target is `t`.
pub fn gen_toy(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(HmeError::InvalidArgument("toy dataset needs n ≥ 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(HmeError::InvalidArgument(alloc::format!("invalid noise sd {noise_sd}")));
    }
    let noise = Normal::new(0.0, noise_sd).expect("checked sd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for _ in 0..n {
        let t: f64 = rng.random_range(0.0..1.0);
        xs.push(toy_forward(t) + noise.sample(&mut rng));
        ts.push(t);
    }
    Dataset::from_columns(&[xs], &[ts], true)
}

/// Link lengths and joint-angle ranges of a planar two-link arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub link1: f64,
    pub link2: f64,
    pub theta1_range: (f64, f64),
    pub theta2_range: (f64, f64),
}

impl Default for ArmGeometry {
    fn default() -> Self {
        ArmGeometry {
            link1: 0.8,
            link2: 0.2,
            theta1_range: (0.3, 1.2),
            theta2_range: (PI / 2.0, 3.0 * PI / 2.0),
        }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !(self.link1 > 0.0 && self.link2 > 0.0) {
            return Err(HmeError::InvalidArgument("arm links must be positive".into()));
        }
        if !ok_range(self.theta1_range) || !ok_range(self.theta2_range) {
            return Err(HmeError::InvalidArgument("arm angle ranges must be nonempty".into()));
        }
        Ok(())
    }
}

/// End-effector position. The second link enters with a minus sign, so
/// `θ2 = π` is the straight arm.
pub fn forward_kinematics(theta1: f64, theta2: f64, geometry: &ArmGeometry) -> (f64, f64) {
    let (l1, l2) = (geometry.link1, geometry.link2);
    let s = theta1 + theta2;
    (
        l1 * libm::cos(theta1) - l2 * libm::cos(s),
        l1 * libm::sin(theta1) - l2 * libm::sin(s),
    )
}

/// Uniform joint angles in the geometry's ranges; inputs are the noiseless
/// end-effector positions `(x1, x2)` plus bias, targets `(θ1, θ2)`.
pub fn gen_arm_dataset(n: usize, geometry: &ArmGeometry, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(HmeError::InvalidArgument("arm dataset needs n ≥ 1".into()));
    }
    geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 2);
    let mut t = DMatrix::zeros(n, 2);
    let (a1, b1) = geometry.theta1_range;
    let (a2, b2) = geometry.theta2_range;
    for row in 0..n {
        let th1 = a1 + (b1 - a1) * rng.random::<f64>();
        let th2 = a2 + (b2 - a2) * rng.random::<f64>();
        let (p1, p2) = forward_kinematics(th1, th2, geometry);
        x[(row, 0)] = p1;
        x[(row, 1)] = p2;
        t[(row, 0)] = th1;
        t[(row, 1)] = th2;
    }
    Dataset::new(
        x,
        t,
        true,
        vec![String::from("x1"), String::from("x2")],
        vec![String::from("theta1"), String::from("theta2")],
    )
}

/// Distance between the position reached by `predicted_angles` and `position`.
pub fn end_effector_error(predicted_angles: (f64, f64), position: (f64, f64), geometry: &ArmGeometry) -> f64 {
    let (p1, p2) = forward_kinematics(predicted_angles.0, predicted_angles.1, geometry);
    libm::hypot(p1 - position.0, p2 - position.1)
}

/// Which joint configurations reach a position. Elbow down means
/// `θ2 ≥ π` here, elbow up `θ2 ≤ π`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmRegion {
    /// Elbow down only.
    A,
    /// Both configurations.
    B,
    /// Elbow up only.
    C,
    Unreachable,
}

/// Joint-angle solutions for a position, elbow down first.
pub fn inverse_kinematics(position: (f64, f64), geometry: &ArmGeometry) -> Option<[(f64, f64); 2]> {
    let (l1, l2) = (geometry.link1, geometry.link2);
    let r2 = position.0 * position.0 + position.1 * position.1;
    // |x|² = L1² + L2² − 2 L1 L2 cos θ2
    let c = (l1 * l1 + l2 * l2 - r2) / (2.0 * l1 * l2);
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&c) {
        return None;
    }
    let delta = PI - libm::acos(c.clamp(-1.0, 1.0));
    let heading = libm::atan2(position.1, position.0);
    let solve = |theta2: f64| {
        // x = e^{iθ1} (L1 − L2 e^{iθ2})
        let re = l1 - l2 * libm::cos(theta2);
        let im = -l2 * libm::sin(theta2);
        (heading - libm::atan2(im, re), theta2)
    };
    Some([solve(PI + delta), solve(PI - delta)])
}

/// Classifies a position by the inverse solutions that respect the angle
/// ranges (with `tol` slack on every bound).
pub fn arm_region(position: (f64, f64), geometry: &ArmGeometry, tol: f64) -> ArmRegion {
    let Some([down, up]) = inverse_kinematics(position, geometry) else {
        return ArmRegion::Unreachable;
    };
    let within = |v: f64, r: (f64, f64)| v >= r.0 - tol && v <= r.1 + tol;
    let valid = |s: (f64, f64)| within(s.0, geometry.theta1_range) && within(s.1, geometry.theta2_range);
    match (valid(down), valid(up)) {
        (true, true) => ArmRegion::B,
        (true, false) => ArmRegion::A,
        (false, true) => ArmRegion::C,
        (false, false) => ArmRegion::Unreachable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn toy_examples() {
        assert_abs_diff_eq!(toy_forward(0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(toy_forward(0.25), 0.55, epsilon = 1e-15);
        let d = gen_toy(TOY_SIZE, TOY_NOISE_SD, 3).unwrap();
        assert_eq!(d.len(), 200);
        assert_eq!(d.raw_input_names(), ["x"]);
        assert_eq!(d.target_names(), ["t"]);
        assert_eq!(d, gen_toy(TOY_SIZE, TOY_NOISE_SD, 3).unwrap());
        assert_ne!(d, gen_toy(TOY_SIZE, TOY_NOISE_SD, 4).unwrap());
        let noiseless = gen_toy(50, 0.0, 1).unwrap();
        for n in 0..50 {
            let t = noiseless.targets()[(n, 0)];
            assert!((0.0..1.0).contains(&t));
            assert_eq!(noiseless.inputs()[(n, 0)], toy_forward(t));
        }
        assert!(gen_toy(0, 0.05, 0).is_err());
        assert!(gen_toy(5, -1.0, 0).is_err());
    }

    #[test]
    fn kinematics_examples() {
        let g = ArmGeometry::default();
        let (x1, x2) = forward_kinematics(PI / 2.0, PI, &g);
        assert_abs_diff_eq!(x1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x2, 1.0, epsilon = 1e-15);
        for k in 0..20 {
            let (x1, x2) = forward_kinematics(0.3 * k as f64, PI, &g);
            assert_abs_diff_eq!(libm::hypot(x1, x2), 1.0, epsilon = 1e-15);
        }
        let single = ArmGeometry { link2: 0.0, ..g };
        let (x1, x2) = forward_kinematics(0.7, 2.0, &single);
        assert_abs_diff_eq!(libm::hypot(x1, x2), 0.8, epsilon = 1e-15);
    }

    // Position as a chain of rotation matrices applied to the link vectors.
    fn rotation_fk(theta1: f64, theta2: f64, g: &ArmGeometry) -> (f64, f64) {
        let rot = |a: f64| nalgebra::Matrix2::new(libm::cos(a), -libm::sin(a), libm::sin(a), libm::cos(a));
        let first = rot(theta1) * nalgebra::Vector2::new(g.link1, 0.0);
        let second = rot(theta1) * rot(theta2) * nalgebra::Vector2::new(-g.link2, 0.0);
        let p = first + second;
        (p[0], p[1])
    }

    #[test]
    fn kinematics_match_rotation_matrices() {
        let g = ArmGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(-7.0..7.0);
            let b: f64 = rng.random_range(-7.0..7.0);
            let (x1, x2) = forward_kinematics(a, b, &g);
            let (y1, y2) = rotation_fk(a, b, &g);
            assert_abs_diff_eq!(x1, y1, epsilon = 1e-14);
            assert_abs_diff_eq!(x2, y2, epsilon = 1e-14);
        }
    }

    #[test]
    fn end_effector_error_examples() {
        let g = ArmGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Euclidean Lipschitz constant: the straight arm with aligned joints.
        let l2_constant = libm::hypot(g.link1 + g.link2, g.link2);
        for _ in 0..10_000 {
            let th = (rng.random_range(0.3..1.2), rng.random_range(PI / 2.0..1.5 * PI));
            let pos = forward_kinematics(th.0, th.1, &g);
            assert_eq!(end_effector_error(th, pos, &g), 0.0);
            let d: (f64, f64) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            let err = end_effector_error((th.0 + d.0, th.1 + d.1), pos, &g);
            assert!(err <= (g.link1 + g.link2) * (d.0.abs() + d.1.abs()) + 1e-15);
            assert!(err <= l2_constant * libm::hypot(d.0, d.1) + 1e-15);
        }
        // straight arm along the same heading: error is the radial gap
        let pos = forward_kinematics(0.8, PI + 0.9, &g);
        let r = libm::hypot(pos.0, pos.1);
        let heading = libm::atan2(pos.1, pos.0);
        assert_abs_diff_eq!(end_effector_error((heading, PI), pos, &g), 1.0 - r, epsilon = 1e-14);
    }

    #[test]
    fn inverse_kinematics_recovers_both_branches() {
        let g = ArmGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let th = (rng.random_range(0.3..1.2), rng.random_range(PI / 2.0..1.5 * PI));
            let pos = forward_kinematics(th.0, th.1, &g);
            let sols = inverse_kinematics(pos, &g).unwrap();
            for s in sols {
                let back = forward_kinematics(s.0, s.1, &g);
                assert_abs_diff_eq!(back.0, pos.0, epsilon = 1e-12);
                assert_abs_diff_eq!(back.1, pos.1, epsilon = 1e-12);
            }
            let own = if th.1 >= PI { sols[0] } else { sols[1] };
            assert_abs_diff_eq!(own.0, th.0, epsilon = 1e-7);
            assert_abs_diff_eq!(own.1, th.1, epsilon = 1e-7);
        }
        assert!(inverse_kinematics((0.1, 0.1), &g).is_none());
        assert_eq!(arm_region((2.0, 0.0), &g, 1e-9), ArmRegion::Unreachable);
    }

    #[test]
    fn arm_dataset_properties() {
        let g = ArmGeometry::default();
        let d = gen_arm_dataset(2000, &g, 11).unwrap();
        assert_eq!(d.input_names(), ["x1", "x2", "bias"]);
        assert_eq!(d, gen_arm_dataset(2000, &g, 11).unwrap());
        let mut counts = [0usize; 3];
        for n in 0..d.len() {
            let (th1, th2) = (d.targets()[(n, 0)], d.targets()[(n, 1)]);
            let pos = (d.inputs()[(n, 0)], d.inputs()[(n, 1)]);
            assert_eq!(forward_kinematics(th1, th2, &g), pos);
            assert!((0.3..=1.2).contains(&th1) && (PI / 2.0..=1.5 * PI).contains(&th2));
            match arm_region(pos, &g, 1e-9) {
                ArmRegion::A => counts[0] += 1,
                ArmRegion::B => counts[1] += 1,
                ArmRegion::C => counts[2] += 1,
                ArmRegion::Unreachable => panic!("{pos:?} outside A ∪ B ∪ C"),
            }
        }
        assert!(counts.iter().all(|&c| c > 100), "{counts:?}");

        // two distinct angle pairs land near the same region-B position
        let b_rows: Vec<usize> = (0..d.len())
            .filter(|&n| arm_region((d.inputs()[(n, 0)], d.inputs()[(n, 1)]), &g, 1e-9) == ArmRegion::B)
            .collect();
        let found = b_rows.iter().any(|&i| {
            b_rows.iter().any(|&j| {
                let dx = libm::hypot(d.inputs()[(i, 0)] - d.inputs()[(j, 0)], d.inputs()[(i, 1)] - d.inputs()[(j, 1)]);
                dx < 0.02 && (d.targets()[(i, 1)] - d.targets()[(j, 1)]).abs() > 0.5
            })
        });
        assert!(found);
        assert!(gen_arm_dataset(0, &g, 0).is_err());
        assert!(gen_arm_dataset(3, &ArmGeometry { link1: -1.0, ..g }, 0).is_err());
    }
}
