//! Scalar special functions used throughout the crate.

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + libm::exp(-a))
    } else {
        let e = libm::exp(a);
        e / (1.0 + e)
    }
}

/// `(σ(a), σ(−a))` from a single exponential.
#[inline]
pub fn sigmoid_pair(a: f64) -> (f64, f64) {
    let e = libm::exp(-libm::fabs(a));
    let big = 1.0 / (1.0 + e);
    let small = e / (1.0 + e);
    if a >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

/// `ln(1 + e^a)` without overflow.
#[inline]
pub fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + libm::log1p(libm::exp(-a))
    } else {
        libm::log1p(libm::exp(a))
    }
}

/// `ln σ(a)`.
#[inline]
pub fn log_sigmoid(a: f64) -> f64 {
    -softplus(-a)
}

/// Entropy of a Bernoulli variable whose success probability is `σ(logit)`.
#[inline]
pub fn bernoulli_entropy_from_logit(logit: f64) -> f64 {
    // H = softplus(h) - h σ(h)
    softplus(logit) - logit * sigmoid(logit)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma function ψ(x) for x > 0: recurrence up to x ≥ 6, then the
/// asymptotic expansion.
pub fn digamma(mut x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + libm::log(x) - 0.5 * inv - series
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        for &a in &[-800.0, -30.0, -1.5, 0.0, 2.0, 40.0, 800.0] {
            assert_abs_diff_eq!(sigmoid(a) + sigmoid(-a), 1.0, epsilon = 1e-15);
            assert!(log_sigmoid(a).is_finite());
        }
        assert_abs_diff_eq!(log_sigmoid(2.0), libm::log(0.880_797_077_977_882_3), epsilon = 1e-14);
    }

    #[test]
    fn sigmoid_pair_matches_sigmoid() {
        for &a in &[-800.0, -37.0, -2.5, -1e-9, 0.0, 0.3, 19.0, 800.0] {
            let (p, q) = sigmoid_pair(a);
            assert_eq!(p, sigmoid(a));
            assert_abs_diff_eq!(q, sigmoid(-a), epsilon = 1e-300);
            assert!((q - sigmoid(-a)).abs() <= 1e-15 * sigmoid(-a));
        }
    }

    #[test]
    fn digamma_known_values() {
        // ψ(1) = -γ, ψ(1/2) = -γ - 2 ln 2
        let euler = 0.577_215_664_901_532_9;
        assert_abs_diff_eq!(digamma(1.0), -euler, epsilon = 1e-13);
        assert_abs_diff_eq!(digamma(0.5), -euler - 2.0 * core::f64::consts::LN_2, epsilon = 1e-13);
        // ψ(x+1) = ψ(x) + 1/x
        for &x in &[0.01, 0.3, 2.5, 17.0, 1e4] {
            assert_abs_diff_eq!(digamma(x + 1.0), digamma(x) + 1.0 / x, epsilon = 1e-10);
        }
    }

    #[test]
    fn bernoulli_entropy_matches_direct_formula() {
        for &h in &[-5.0, -0.3, 0.0, 1.7, 9.0] {
            let q = sigmoid(h);
            let direct = -(q * libm::log(q) + (1.0 - q) * libm::log(1.0 - q));
            assert_abs_diff_eq!(bernoulli_entropy_from_logit(h), direct, epsilon = 1e-12);
        }
        assert_eq!(bernoulli_entropy_from_logit(800.0), 0.0);
    }

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        let v = [-1000.0, -1000.0];
        assert_abs_diff_eq!(log_sum_exp(&v), -1000.0 + core::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
