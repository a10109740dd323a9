//! The Gauss continued-fraction map `T x = 1/x − ⌊1/x⌋` coded by its digits,
//! with potential `φ = −log|T′| = 2 ln x`.

use nalgebra::{Complex, DMatrix, DVector};
use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::numeric::{integrate, NeumaierSum};
use crate::potential::{Potential, TailDescriptor};

/// Continuants of a digit word in log-scaled form: `ln q_n` and the ratios
/// `q_{n−1}/q_n`, `p_n/q_n`, `p_{n−1}/q_n`.
#[derive(Debug, Clone, Copy)]
struct ScaledContinuants {
    log_q: f64,
    q_prev: f64,
    p: f64,
    p_prev: f64,
}

fn scaled_continuants(digits: impl Iterator<Item = u64>) -> ScaledContinuants {
    // Normalised by q_k at every step so nothing overflows.
    let (mut p, mut p_prev, mut q_prev) = (0.0f64, 1.0f64, 0.0f64);
    let mut log_q = 0.0;
    for a in digits {
        let a = a as f64;
        let q_new = a + q_prev;
        let p_new = (a * p + p_prev) / q_new;
        p_prev = p / q_new;
        p = p_new;
        q_prev = 1.0 / q_new;
        log_q += q_new.ln();
    }
    ScaledContinuants {
        log_q,
        q_prev,
        p,
        p_prev,
    }
}

/// `(inf, sup)` of `S_nφ` on the cylinder of `digits`:
/// `S_nφ(x) = −2 ln(q_n + q_{n−1} T^n x)` with `T^n x ∈ [0, 1]`.
pub fn cylinder_birkhoff_bounds(digits: impl Iterator<Item = u64>) -> (f64, f64) {
    let c = scaled_continuants(digits);
    let sup = -2.0 * c.log_q;
    let inf = -2.0 * (c.log_q + c.q_prev.ln_1p());
    (inf, sup)
}

/// Endpoints `(left, right)` of the cylinder interval of `digits`.
pub fn cylinder_interval(digits: impl Iterator<Item = u64>) -> (f64, f64) {
    let c = scaled_continuants(digits);
    let a = c.p;
    let b = (c.p + c.p_prev) / (1.0 + c.q_prev);
    (a.min(b), a.max(b))
}

/// Gauss potential on a truncation whose symbol `i` is digit `digits[i]`.
#[derive(Debug, Clone)]
pub struct GaussPotential {
    digits: Vec<u64>,
    tail: TailDescriptor,
}

impl GaussPotential {
    pub fn new(digits: Vec<u64>, tail: TailDescriptor) -> Result<Self> {
        if digits.is_empty() || digits.contains(&0) {
            return Err(Error::invalid("Gauss digits must be positive and nonempty"));
        }
        Ok(Self { digits, tail })
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }
}

impl Potential for GaussPotential {
    fn birkhoff_bounds(&self, word: &[usize]) -> (f64, f64) {
        cylinder_birkhoff_bounds(word.iter().map(|&i| self.digits[i]))
    }

    fn value_bounds(&self, word: &[usize]) -> (f64, f64) {
        let (a, b) = cylinder_interval(word.iter().map(|&i| self.digits[i]));
        (2.0 * a.ln(), 2.0 * b.ln())
    }

    fn tail(&self) -> Option<&TailDescriptor> {
        Some(&self.tail)
    }

    fn periodic_sum(&self, word: &[usize]) -> Option<f64> {
        let orbit = periodic_orbit_f64(&word.iter().map(|&i| self.digits[i]).collect::<Vec<_>>());
        let mut s = NeumaierSum::new();
        for x in orbit {
            s.add(2.0 * x.ln());
        }
        Some(s.value())
    }
}

/// The orbit `x, Tx, …, T^{n−1}x` of the purely periodic point with period
/// word `digits`, by backward iteration of the inverse branches.
pub fn periodic_orbit_f64(digits: &[u64]) -> Vec<f64> {
    let n = digits.len();
    let mut orbit = vec![0.5; n];
    let mut y = 0.5;
    for _ in 0..200 {
        let before = y;
        for i in (0..n).rev() {
            y = 1.0 / (digits[i] as f64 + y);
            orbit[i] = y;
        }
        if (y - before).abs() <= 1e-17 * y {
            break;
        }
    }
    orbit
}

/// Purely periodic quadratic irrational with period word `a_1 … a_n`:
/// the root in (0,1) of `A x² + B x − C = 0` with `A = q_{n−1}`,
/// `B = q_n − p_{n−1}`, `C = p_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticIrrational {
    pub digits: Vec<u64>,
    pub p_n: BigInt,
    pub q_n: BigInt,
    pub p_prev: BigInt,
    pub q_prev: BigInt,
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
    /// `B² + 4AC`.
    pub discriminant: BigInt,
}

impl QuadraticIrrational {
    pub fn from_period(digits: &[u64]) -> Result<Self> {
        if digits.is_empty() || digits.contains(&0) {
            return Err(Error::invalid("period word must be nonempty with positive digits"));
        }
        let (mut p, mut p_prev) = (BigInt::zero(), BigInt::one());
        let (mut q, mut q_prev) = (BigInt::one(), BigInt::zero());
        for &d in digits {
            let d = BigInt::from(d);
            let p_new = &d * &p + &p_prev;
            let q_new = &d * &q + &q_prev;
            p_prev = std::mem::replace(&mut p, p_new);
            q_prev = std::mem::replace(&mut q, q_new);
        }
        let a = q_prev.clone();
        let b = &q - &p_prev;
        let c = p.clone();
        let discriminant = &b * &b + BigInt::from(4) * &a * &c;
        Ok(Self {
            digits: digits.to_vec(),
            p_n: p,
            q_n: q,
            p_prev,
            q_prev,
            a,
            b,
            c,
            discriminant,
        })
    }

    /// `x = 2C / (B + √D)`, the cancellation-free form of the positive root.
    pub fn value(&self) -> f64 {
        let (d, scale) = big_to_scaled_f64(&self.discriminant);
        let (b, bs) = big_to_scaled_f64(&self.b);
        let (c, cs) = big_to_scaled_f64(&self.c);
        // Bring everything to a common exponent 2^k before combining.
        let k = (scale / 2).max(bs).max(cs);
        let sqrt_d = (d * 2f64.powi(scale - 2 * k)).sqrt();
        let b = b * 2f64.powi(bs - k);
        let c = c * 2f64.powi(cs - k);
        2.0 * c / (b + sqrt_d)
    }

    pub fn is_square_discriminant(&self) -> bool {
        let r = self.discriminant.sqrt();
        &r * &r == self.discriminant
    }

    /// Verifies `T^n x = x` exactly by running the Gauss map on the surd
    /// `1/x = (P + √D)/Q` with integer `P`, `Q`, checking the digits emitted.
    pub fn verify_period(&self) -> bool {
        if self.is_square_discriminant() || !self.a.is_positive() {
            return false;
        }
        let d = &self.discriminant;
        let root = d.sqrt();
        let p0 = self.b.clone();
        let q0 = BigInt::from(2) * &self.c;
        let (mut p, mut q) = (p0.clone(), q0.clone());
        for &digit in &self.digits {
            if !q.is_positive() {
                return false;
            }
            let a = (&p + &root).div_floor(&q);
            if a != BigInt::from(digit) {
                return false;
            }
            let p_next = &a * &q - &p;
            let num = d - &p_next * &p_next;
            let (q_next, rem) = num.div_rem(&q);
            if !rem.is_zero() {
                return false;
            }
            p = p_next;
            q = q_next;
        }
        p == p0 && q == q0
    }

    /// `|(T^n)′ x|^{-1} = (q_n + q_{n−1} x)^{-2}`.
    pub fn weight(&self) -> f64 {
        let x = self.value();
        let (qn, s1) = big_to_scaled_f64(&self.q_n);
        let (qp, s2) = big_to_scaled_f64(&self.q_prev);
        let denom = qn + qp * x * 2f64.powi(s2 - s1);
        (-2.0 * (denom.ln() + s1 as f64 * std::f64::consts::LN_2)).exp()
    }

    /// `∏_{i<n} (T^i x)²` along the orbit from [`periodic_orbit_f64`].
    pub fn orbit_weight(&self) -> f64 {
        let mut log = NeumaierSum::new();
        for x in periodic_orbit_f64(&self.digits) {
            log.add(2.0 * x.ln());
        }
        log.value().exp()
    }
}

/// `(mantissa, exponent)` with `value = mantissa · 2^exponent`, safe for
/// integers beyond the f64 range.
fn big_to_scaled_f64(x: &BigInt) -> (f64, i32) {
    let bits = x.bits();
    if bits <= 1000 {
        return (x.to_f64().unwrap_or(f64::NAN), 0);
    }
    let shift = bits - 64;
    let top = x >> shift;
    let mut m = top.to_f64().unwrap();
    if x.sign() == Sign::Minus {
        m = -m.abs();
    }
    (m, shift as i32)
}

/// One entry per length-`n` word over `digit_set`, in lexicographic order.
pub fn gauss_periodic_points(n: usize, digit_set: &[u64], cap: u64) -> Result<Vec<(QuadraticIrrational, f64)>> {
    if n == 0 {
        return Err(Error::invalid("period must be at least 1"));
    }
    let mut digits = digit_set.to_vec();
    digits.sort_unstable();
    digits.dedup();
    let count = (digits.len() as f64).powi(n as i32);
    if count > cap as f64 {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; n];
    loop {
        let word: Vec<u64> = idx.iter().map(|&i| digits[i]).collect();
        let qi = QuadraticIrrational::from_period(&word)?;
        let w = qi.weight();
        out.push((qi, w));
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < digits.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Observables integrated against the Gauss measure `dx / ((1+x) ln 2)`.
pub enum GaussIntegrand<'a> {
    Constant(f64),
    /// Indicator of the interval `(lo, hi]`.
    Interval(f64, f64),
    /// Indicator of a digit cylinder.
    Cylinder(&'a [u64]),
    Function(&'a dyn Fn(f64) -> f64),
}

/// Gauss-measure expectation; closed forms for indicators, adaptive
/// quadrature (tolerance 10⁻¹²) for functions.
pub fn gauss_integral_oracle(psi: GaussIntegrand<'_>) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    match psi {
        GaussIntegrand::Constant(c) => c,
        GaussIntegrand::Interval(lo, hi) => {
            let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
            ((1.0 + hi) / (1.0 + lo)).ln() / ln2
        }
        GaussIntegrand::Cylinder(word) => {
            let (a, b) = cylinder_interval(word.iter().copied());
            ((1.0 + b) / (1.0 + a)).ln() / ln2
        }
        GaussIntegrand::Function(f) => integrate(|x| f(x) / (1.0 + x), 0.0, 1.0, 1e-12).0 / ln2,
    }
}

/// Chebyshev collocation of the transfer operator
/// `L_{s} f(x) = Σ_k w_k (k+x)^{-2s} f(1/(k+x))` on `[0, 1]`, with optional
/// per-digit multipliers `w_k`.
#[derive(Debug, Clone)]
pub struct GaussOperator {
    digits: Vec<u64>,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

/// Dominant eigen-data of a collocated operator.
#[derive(Debug, Clone)]
pub struct OperatorPerron {
    pub lambda: f64,
    /// Nodal values of the eigenfunction `h`.
    pub right: DVector<f64>,
    /// Nodal representation of the eigenmeasure, normalised so `left · right = 1`.
    pub left: DVector<f64>,
}

pub const DEFAULT_NODES: usize = 40;

impl GaussOperator {
    pub fn new(digits: Vec<u64>, nodes: usize) -> Result<Self> {
        if digits.is_empty() || digits.contains(&0) || nodes < 2 {
            return Err(Error::invalid("operator needs positive digits and at least 2 nodes"));
        }
        let m = nodes as f64;
        let xs: Vec<f64> = (0..nodes)
            .map(|i| {
                let theta = (2 * i + 1) as f64 * std::f64::consts::PI / (2.0 * m);
                0.5 * (1.0 - theta.cos())
            })
            .collect();
        let bary: Vec<f64> = (0..nodes)
            .map(|j| {
                let theta = (2 * j + 1) as f64 * std::f64::consts::PI / (2.0 * m);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * theta.sin()
            })
            .collect();
        Ok(Self {
            digits,
            nodes: xs,
            bary,
        })
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Lagrange basis values `ℓ_j(y)` at the collocation nodes.
    fn lagrange_row(&self, y: f64, out: &mut [f64]) {
        if let Some(j) = self.nodes.iter().position(|&x| x == y) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j] = 1.0;
            return;
        }
        let mut total = 0.0;
        for (j, (&x, &w)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let v = w / (y - x);
            out[j] = v;
            total += v;
        }
        out.iter_mut().for_each(|v| *v /= total);
    }

    /// Collocation matrix of the single branch with digit index `i`.
    pub fn branch(&self, i: usize, s: f64, multiplier: f64) -> DMatrix<f64> {
        let m = self.size();
        let k = self.digits[i] as f64;
        let mut mat = DMatrix::zeros(m, m);
        let mut row = vec![0.0; m];
        for (r, &x) in self.nodes.iter().enumerate() {
            let y = 1.0 / (k + x);
            let w = multiplier * (k + x).powf(-2.0 * s);
            self.lagrange_row(y, &mut row);
            for (c, &l) in row.iter().enumerate() {
                mat[(r, c)] = w * l;
            }
        }
        mat
    }

    /// `Σ_k multiplier_k · B_k(s)`.
    pub fn matrix(&self, s: f64, multipliers: Option<&[f64]>) -> DMatrix<f64> {
        let m = self.size();
        let mut mat = DMatrix::zeros(m, m);
        let mut row = vec![0.0; m];
        // Accumulate digit by digit in index order for reproducibility.
        for (i, &k) in self.digits.iter().enumerate() {
            let mult = multipliers.map_or(1.0, |v| v[i]);
            if mult == 0.0 {
                continue;
            }
            let k = k as f64;
            for (r, &x) in self.nodes.iter().enumerate() {
                let y = 1.0 / (k + x);
                let w = mult * (k + x).powf(-2.0 * s);
                self.lagrange_row(y, &mut row);
                for (c, &l) in row.iter().enumerate() {
                    mat[(r, c)] += w * l;
                }
            }
        }
        mat
    }

    /// Leading eigenvalue and eigenvectors by power iteration from the
    /// all-ones vector.
    pub fn perron(&self, s: f64, multipliers: Option<&[f64]>) -> Result<OperatorPerron> {
        let mat = self.matrix(s, multipliers);
        perron_dense(&mat)
    }

    pub fn log_lambda(&self, s: f64, multipliers: Option<&[f64]>) -> Result<f64> {
        Ok(self.perron(s, multipliers)?.lambda.ln())
    }
}

/// Power iteration for the dominant (positive) eigenvalue of a dense matrix.
pub fn perron_dense(mat: &DMatrix<f64>) -> Result<OperatorPerron> {
    let (lambda, right) = power_iterate(mat)?;
    let (lambda_t, left) = power_iterate(&mat.transpose())?;
    if ((lambda - lambda_t) / lambda).abs() > 1e-9 {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: (lambda - lambda_t).abs(),
        });
    }
    let norm = left.dot(&right);
    Ok(OperatorPerron {
        lambda,
        right,
        left: left / norm,
    })
}

fn power_iterate(mat: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = mat.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    let max_iter = 100_000;
    for it in 0..max_iter {
        let w = mat * &v;
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        let next = w / total;
        let diff = (&next - &v).amax() / next.amax();
        let lam_change = ((total - lambda) / total).abs();
        v = next;
        lambda = total;
        if diff <= 1e-14 && lam_change <= 1e-13 {
            return Ok((lambda, v));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: f64::NAN,
    })
}

/// Taylor-basis representation of the same operator on holomorphic
/// functions of the disc `|z − 1| < 3/2`, which every branch maps strictly
/// inside itself. The operator is nuclear there, so matrix traces converge
/// geometrically to the operator traces; collocated traces do not.
#[derive(Debug, Clone)]
pub struct TaylorOperator {
    digits: Vec<u64>,
    size: usize,
}

pub const TAYLOR_SIZE: usize = 64;
const TAYLOR_CENTER: f64 = 1.0;
const TAYLOR_RADIUS: f64 = 1.5;

impl TaylorOperator {
    pub fn new(digits: Vec<u64>, size: usize) -> Result<Self> {
        if digits.is_empty() || digits.contains(&0) || size < 2 {
            return Err(Error::invalid(
                "operator needs positive digits and at least 2 coefficients",
            ));
        }
        Ok(Self { digits, size })
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Matrix of the branch with digit index `i`: column `j` holds the
    /// Taylor coefficients of `L_k u^j`, `u = (z − 1)/(3/2)`, obtained by a
    /// discrete Fourier transform on the boundary circle.
    pub fn branch(&self, i: usize, s: f64) -> DMatrix<f64> {
        let m = self.size;
        let samples = 2 * m;
        let k = self.digits[i] as f64;
        let mut mat = DMatrix::zeros(m, m);
        let circle: Vec<Complex<f64>> = (0..samples)
            .map(|l| Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * l as f64 / samples as f64))
            .collect();
        let mut weight = Vec::with_capacity(samples);
        let mut image = Vec::with_capacity(samples);
        for e in &circle {
            let z = TAYLOR_CENTER + e * TAYLOR_RADIUS;
            let kz = z + k;
            weight.push((-2.0 * s * kz.ln()).exp());
            image.push((kz.inv() - TAYLOR_CENTER) / TAYLOR_RADIUS);
        }
        let mut vals: Vec<Complex<f64>> = weight.clone();
        for j in 0..m {
            for r in 0..m {
                let mut acc = Complex::new(0.0, 0.0);
                for (l, v) in vals.iter().enumerate() {
                    acc += v * circle[(r * l) % samples].conj();
                }
                mat[(r, j)] = acc.re / samples as f64;
            }
            for (v, u) in vals.iter_mut().zip(&image) {
                *v *= u;
            }
        }
        mat
    }

    /// `Σ_k B_k(s)`.
    pub fn matrix(&self, s: f64) -> DMatrix<f64> {
        let mut mat = DMatrix::zeros(self.size, self.size);
        for i in 0..self.digits.len() {
            mat += self.branch(i, s);
        }
        mat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_fixed_point() {
        let qi = QuadraticIrrational::from_period(&[1]).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((qi.value() - golden).abs() < 1e-15);
        assert!((qi.weight() - golden * golden).abs() < 1e-15);
        assert!(qi.verify_period());
    }

    #[test]
    fn period_two_example() {
        let qi = QuadraticIrrational::from_period(&[1, 2]).unwrap();
        // x² + 2x − 2 = 0
        assert_eq!(
            (qi.a.clone(), qi.b.clone(), qi.c.clone()),
            (BigInt::from(1), BigInt::from(2), BigInt::from(2))
        );
        let x = 3f64.sqrt() - 1.0;
        assert!((qi.value() - x).abs() < 1e-15);
        let w = (2.0 - 3f64.sqrt()).powi(2);
        assert!((qi.weight() - w).abs() < 1e-15);
        assert!(qi.verify_period());
    }

    #[test]
    fn surd_check_rejects_wrong_digits() {
        let mut qi = QuadraticIrrational::from_period(&[2, 3, 1]).unwrap();
        assert!(qi.verify_period());
        qi.digits = vec![2, 1, 3];
        assert!(!qi.verify_period());
    }

    #[test]
    fn digit_one_cylinder() {
        let (inf, sup) = cylinder_birkhoff_bounds([1u64].into_iter());
        assert!((sup - 0.0).abs() < 1e-15);
        assert!((sup - inf - 2.0 * 2f64.ln()).abs() < 1e-15);
        let (a, b) = cylinder_interval([1u64].into_iter());
        assert!((a - 0.5).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_values() {
        let t = gauss_integral_oracle(GaussIntegrand::Cylinder(&[1]));
        assert!((t - (4.0f64 / 3.0).ln() / 2f64.ln()).abs() < 1e-15);
        let f = |x: f64| x;
        let t = gauss_integral_oracle(GaussIntegrand::Function(&f));
        assert!((t - (1.0 / 2f64.ln() - 1.0)).abs() < 1e-12);
        assert_eq!(gauss_integral_oracle(GaussIntegrand::Constant(1.0)), 1.0);
    }

    #[test]
    fn operator_of_single_digit() {
        // With one digit the pressure of sφ is −2s ln(golden ratio).
        let op = GaussOperator::new(vec![1], DEFAULT_NODES).unwrap();
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        for s in [0.5, 1.0, 2.0] {
            let p = op.log_lambda(s, None).unwrap();
            assert!((p + 2.0 * s * g.ln()).abs() < 1e-12, "s={s} p={p}");
        }
    }
}
