//! Quadratic-exponential lower bound on the logistic sigmoid,
//! `σ(x) ≥ σ(ξ) exp{(x − ξ)/2 − λ(ξ)(x² − ξ²)}`, tight at `x = ±ξ`.

use nalgebra::DMatrix;

use crate::math::log_sigmoid;

/// `λ(ξ) = tanh(ξ/2) / (4ξ)`, with the limit `1/8` at the origin.
pub fn lambda(xi: f64) -> f64 {
    let a = libm::fabs(xi);
    if a < 1e-4 {
        // tanh(u)/u = 1 - u²/3 + ..., u = ξ/2
        0.125 - a * a / 96.0
    } else {
        libm::tanh(0.5 * a) / (4.0 * a)
    }
}

/// Logarithm of the bound `F(x, ξ)`.
pub fn log_bound(x: f64, xi: f64) -> f64 {
    log_sigmoid(xi) + 0.5 * (x - xi) - lambda(xi) * (x * x - xi * xi)
}

/// Result of [`optimal_xi_squared`]: the value and whether a negative
/// quadratic form had to be clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiSquared {
    pub value: f64,
    pub clamped: bool,
}

/// `xᵀ ⟨v vᵀ⟩ x`, the optimal squared variational parameter.
pub fn optimal_xi_squared(x: &[f64], second_moment: &DMatrix<f64>) -> XiSquared {
    let p = x.len();
    let mut q = 0.0;
    for r in 0..p {
        let mut row = 0.0;
        for c in 0..p {
            row += second_moment[(r, c)] * x[c];
        }
        q += x[r] * row;
    }
    if q < 0.0 {
        XiSquared { value: 0.0, clamped: true }
    } else {
        XiSquared { value: q, clamped: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sigmoid;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda(0.0), 0.125);
        assert_abs_diff_eq!(lambda(1.0), 0.115_529_289_315_002_43, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prev = lambda(0.0);
        for k in 1..2000 {
            let xi = k as f64 * 0.01;
            let l = lambda(xi);
            assert!(l > 0.0 && l < prev);
            prev = l;
        }
        for _ in 0..100 {
            let xi: f64 = rng.random_range(-20.0..20.0);
            assert_eq!(lambda(xi), lambda(-xi));
        }
        // Taylor branch meets the closed form.
        let edge = 1e-4;
        assert_abs_diff_eq!(lambda(edge * 0.999_999), libm::tanh(edge / 2.0) / (4.0 * edge), epsilon = 1e-15);
    }

    #[test]
    fn bound_is_exact_at_plus_minus_xi() {
        for &xi in &[0.0, 0.3, 1.0, 4.0, 12.0] {
            assert_abs_diff_eq!(log_bound(xi, xi), log_sigmoid(xi), epsilon = 1e-12);
            assert_abs_diff_eq!(log_bound(-xi, xi), log_sigmoid(-xi), epsilon = 1e-12);
        }
    }

    #[test]
    fn bound_example_at_origin() {
        let got = libm::exp(log_bound(0.0, 1.0));
        let expected = sigmoid(1.0) * libm::exp(-0.5 + lambda(1.0));
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.497_712_639_209_386_1, epsilon = 1e-12);
        assert!(got <= 0.5);
    }

    #[test]
    fn bound_never_exceeds_sigmoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100_000 {
            let x: f64 = rng.random_range(-15.0..15.0);
            let xi: f64 = rng.random_range(-15.0..15.0);
            assert!(libm::exp(log_bound(x, xi)) <= sigmoid(x) + 1e-12);
        }
    }

    #[test]
    fn xi_squared_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(optimal_xi_squared(&[1.0, 0.0], &id).value, 1.0);
        assert_eq!(optimal_xi_squared(&[1.0, 3.0], &DMatrix::zeros(2, 2)).value, 0.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![4.0, 1.0]));
        assert_eq!(optimal_xi_squared(&[1.0, 2.0], &d).value, 8.0);
        let neg = -DMatrix::<f64>::identity(2, 2);
        let r = optimal_xi_squared(&[1.0, 0.0], &neg);
        assert!(r.clamped && r.value == 0.0);
    }
}
