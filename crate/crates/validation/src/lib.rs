//! Reference values computed without the engine: closed forms, series and
//! direct continuant enumeration. The acceptance suite compares against these.

/// `π² / (6 ln 2)`, the entropy of the Gauss measure.
pub const GAUSS_ENTROPY: f64 = 2.373_138_220_831_251;
/// `log₂(4/3)`, the Gauss measure of the first-digit-1 cylinder.
pub const GAUSS_DIGIT_ONE: f64 = 0.415_037_499_278_843_8;
/// `1/ln 2 − 1`, the Gauss-measure mean of `x`.
pub const GAUSS_IDENTITY: f64 = 0.442_695_040_888_963_4;

/// Rate function of the fair coin frequency: `s ln 2s + (1−s) ln 2(1−s)`.
pub fn coin_rate(s: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { x * (2.0 * x).ln() } else { 0.0 };
    term(s) + term(1.0 - s)
}

/// `P(Bin(n, 1/2) ≥ k)`.
pub fn binomial_tail(n: u64, k: u64) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0f64;
    for j in 0..=n {
        if j >= k {
            total += c;
        }
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    total / 2f64.powi(n as i32)
}

/// `ln Σ_{|w| = n} q_n(w)^{-2β}` over all words in `digits`, from continuants.
pub fn log_continuant_sum(digits: &[u64], n: usize, beta: f64) -> f64 {
    let mut layer: Vec<(f64, f64)> = vec![(1.0, 0.0)];
    for _ in 0..n {
        layer = layer
            .iter()
            .flat_map(|&(q, qp)| digits.iter().map(move |&a| (a as f64 * q + qp, q)))
            .collect();
    }
    let logs: Vec<f64> = layer.iter().map(|&(q, _)| -2.0 * beta * q.ln()).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Hausdorff dimension of the digit-restricted continued fractions as the
/// root of `β ↦ ln Z_{n+1}(β) − ln Z_n(β)`.
pub fn continuant_dimension(digits: &[u64], n: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if log_continuant_sum(digits, n + 1, mid) - log_continuant_sum(digits, n, mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((GAUSS_ENTROPY - std::f64::consts::PI.powi(2) / (6.0 * 2f64.ln())).abs() < 1e-15);
        assert!((GAUSS_DIGIT_ONE - (4.0f64 / 3.0).log2()).abs() < 1e-15);
        assert!((GAUSS_IDENTITY - (1.0 / 2f64.ln() - 1.0)).abs() < 1e-15);
        assert_eq!(coin_rate(0.5), 0.0);
        assert!((binomial_tail(16, 12) - 2517.0 / 65536.0).abs() < 1e-15);
    }

    #[test]
    fn golden_digit_set() {
        // A single digit has dimension 0: Z_n(β) = q_n^{-2β} decays for every β > 0.
        assert!(continuant_dimension(&[1], 12) < 1e-12);
        assert!((continuant_dimension(&[1, 2], 14) - 0.531280506).abs() < 1e-7);
    }
}
