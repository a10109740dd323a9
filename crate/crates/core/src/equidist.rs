//! Weighted periodic-point measures `p_n` and their convergence to the
//! equilibrium state.
//!
//! `p_n` averages the orbit measures `δ_x^n` over `x ∈ Per_n` with weights
//! `e^{S_nφ(x)}`. Integrals of cylinder observables are computed either by
//! enumerating necklaces or, when enumeration is out of reach, through traces
//! of transfer matrices (exact for locally constant potentials, collocated
//! for the Gauss map).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::gauss::TAYLOR_SIZE;
use crate::models::{CylinderObservable, QuadraticIrrational, System, SystemKind, TaylorOperator};
use crate::numeric::{compensated_sum, LogSumExp, NeumaierSum};
use crate::potential::BlockPotential;
use crate::shift::{for_each_admissible, for_each_necklace, DEFAULT_CAP};
use crate::thermo::gibbs_measure;

/// A necklace of `Per_n` standing for its `prime_period` distinct points.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    /// Lexicographically least rotation.
    pub word: Vec<usize>,
    pub prime_period: usize,
    /// Cylinder bracket of `S_nφ` on the orbit.
    pub log_weight_inf: f64,
    pub log_weight_sup: f64,
    /// Exact `S_nφ(x)` when the model evaluates it.
    pub log_weight_exact: Option<f64>,
    /// Exact point data (Gauss model).
    pub point: Option<QuadraticIrrational>,
}

impl PeriodicOrbit {
    /// The log-weight used for `p_n`: exact when available, else the sup.
    pub fn log_weight(&self) -> f64 {
        self.log_weight_exact.unwrap_or(self.log_weight_sup)
    }
}

/// Normalised weights on `q`-cylinders.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub level: usize,
    pub weights: BTreeMap<Vec<usize>, f64>,
}

impl EmpiricalDistribution {
    /// Marginal on `(level − 1)`-cylinders (drops the last symbol).
    pub fn marginal(&self) -> EmpiricalDistribution {
        let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (w, &p) in &self.weights {
            *out.entry(w[..w.len() - 1].to_vec()).or_default() += p;
        }
        EmpiricalDistribution {
            level: self.level - 1,
            weights: out,
        }
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.values().copied())
    }
}

/// Cyclic window of length `q` starting at `i`.
fn window(word: &[usize], i: usize, q: usize, buf: &mut Vec<usize>) {
    let n = word.len();
    buf.clear();
    buf.extend((0..q).map(|j| word[(i + j) % n]));
}

/// `δ_x^n` projected to `q`-cylinders: weight of `[ω]` is the fraction of
/// cyclic windows of the period word equal to `ω`.
pub fn orbit_empirical(word: &[usize], q: usize) -> Result<EmpiricalDistribution> {
    let n = word.len();
    if q == 0 || q > n {
        return Err(Error::invalid("level must lie in 1..=n"));
    }
    let mut weights: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut buf = Vec::with_capacity(q);
    for i in 0..n {
        window(word, i, q, &mut buf);
        *weights.entry(buf.clone()).or_default() += 1.0;
    }
    weights.values_mut().for_each(|v| *v /= n as f64);
    Ok(EmpiricalDistribution { level: q, weights })
}

/// `∫ψ dδ_x^n` for the periodic point with period word `word`.
pub fn orbit_average(word: &[usize], psi: &CylinderObservable) -> f64 {
    let n = word.len();
    let q = psi.level();
    let mut buf = Vec::with_capacity(q);
    let mut s = NeumaierSum::new();
    for i in 0..n {
        window(word, i, q, &mut buf);
        s.add(psi.eval(&buf));
    }
    s.value() / n as f64
}

/// Necklaces of `Per_n` with weights `e^{S_nφ}`.
#[derive(Debug, Clone)]
pub struct WeightedPeriodicMeasure {
    pub n: usize,
    pub orbits: Vec<PeriodicOrbit>,
    /// `log Σ_{x ∈ Per_n} e^{S_nφ(x)}`.
    pub log_normalizer: f64,
    /// Number of points (necklaces counted with multiplicity).
    pub n_points: usize,
}

impl WeightedPeriodicMeasure {
    /// Normalised weight of each single point of the orbit.
    pub fn point_weight(&self, orbit: &PeriodicOrbit) -> f64 {
        (orbit.log_weight() - self.log_normalizer).exp()
    }

    /// `η_n`: mass of each necklace (all of its points).
    pub fn orbit_masses(&self) -> Vec<f64> {
        self.orbits
            .iter()
            .map(|o| o.prime_period as f64 * self.point_weight(o))
            .collect()
    }

    /// `∫ψ dp_n` by orbit averaging.
    pub fn integral(&self, psi: &CylinderObservable) -> f64 {
        compensated_sum(
            self.orbits
                .iter()
                .zip(self.orbit_masses())
                .map(|(o, m)| m * orbit_average(&o.word, psi)),
        )
    }

    /// `p_n` projected to `q`-cylinders.
    pub fn empirical(&self, q: usize) -> Result<EmpiricalDistribution> {
        let mut weights: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (o, m) in self.orbits.iter().zip(self.orbit_masses()) {
            for (w, p) in orbit_empirical(&o.word, q)?.weights {
                *weights.entry(w).or_default() += m * p;
            }
        }
        Ok(EmpiricalDistribution { level: q, weights })
    }
}

/// Enumerates `Per_n` on the truncation with exact or bracketed weights.
pub fn weighted_periodic_measure(
    system: &System,
    n: usize,
    with_points: bool,
    cap: u64,
) -> Result<WeightedPeriodicMeasure> {
    let mut orbits = Vec::new();
    let mut n_points = 0usize;
    let digits = system.gauss_digits().map(<[u64]>::to_vec);
    let mut failure = None;
    for_each_necklace(&system.structure, n, cap, |w, d| {
        let (lo, hi) = system.potential.birkhoff_bounds(w);
        let exact = system.potential.periodic_sum(w);
        let point = match (&digits, with_points) {
            (Some(dg), true) => {
                let ds: Vec<u64> = w.iter().map(|&i| dg[i]).collect();
                match QuadraticIrrational::from_period(&ds) {
                    Ok(q) => Some(q),
                    Err(e) => {
                        failure.get_or_insert(e);
                        None
                    }
                }
            }
            _ => None,
        };
        n_points += d;
        orbits.push(PeriodicOrbit {
            word: w.to_vec(),
            prime_period: d,
            log_weight_inf: lo,
            log_weight_sup: hi,
            log_weight_exact: exact,
            point,
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut acc = LogSumExp::new();
    for o in &orbits {
        acc.add(o.log_weight() + (o.prime_period as f64).ln());
    }
    Ok(WeightedPeriodicMeasure {
        n,
        orbits,
        log_normalizer: acc.value(),
        n_points,
    })
}

/// How `∫ψ dp_n` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Enumeration,
    Trace,
}

/// Route selection for [`equidist_diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteChoice {
    /// Enumerate when `|Per_n|` is at most `enumeration_limit`, else trace.
    Auto,
    Enumeration,
    Trace,
}

#[derive(Debug, Clone)]
pub struct EquidistOptions {
    pub route: RouteChoice,
    pub enumeration_limit: u64,
    /// Hard cap on enumerated periodic points.
    pub cap: u64,
    /// Largest alphabet for dense transfer-matrix traces.
    pub dense_limit: usize,
}

impl Default for EquidistOptions {
    fn default() -> Self {
        Self {
            route: RouteChoice::Auto,
            enumeration_limit: 2_000_000,
            cap: DEFAULT_CAP,
            dense_limit: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquidistRow {
    pub n: usize,
    pub integral: f64,
    /// Integrals under the inf/sup weight brackets (equal for exact models).
    pub integral_inf_weights: f64,
    pub integral_sup_weights: f64,
    pub target: f64,
    pub signed_error: f64,
    pub abs_error: f64,
    /// `|Per_n|` on the truncation.
    pub n_orbits: f64,
    pub log_normalizer: f64,
    pub route: Route,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquidistReport {
    pub observable: String,
    pub target: f64,
    /// Whether the target is an external oracle rather than the truncated equilibrium state.
    pub target_is_reference: bool,
    /// Equilibrium-state expectation on the truncation.
    pub truncated_target: f64,
    pub rows: Vec<EquidistRow>,
    /// `|error|` nonincreasing along the rows.
    pub monotone: bool,
}

/// Expectation of `ψ` under the equilibrium state of the truncation.
pub fn equilibrium_expectation(system: &System, psi: &CylinderObservable) -> Result<f64> {
    if let Some(op) = system.gauss_operator() {
        let perron = op.perron(1.0, None)?;
        let branches: Vec<DMatrix<f64>> = (0..op.digits().len()).map(|i| op.branch(i, 1.0, 1.0)).collect();
        let g = prefix_sum_matrix(&branches, psi)?;
        let v = &g * &perron.right;
        return Ok(perron.left.dot(&v) / perron.lambda.powi(psi.level() as i32));
    }
    let values = system
        .potential
        .symbol_values()
        .ok_or_else(|| Error::Unsupported("equilibrium state of a non-locally-constant potential".into()))?;
    let block = BlockPotential::from_values(values, system.structure.clone());
    let (mu, _) = gibbs_measure(&block)?;
    if let Some(v) = psi.symbol_values() {
        return Ok(mu.expectation(v));
    }
    let mut s = NeumaierSum::new();
    for_each_admissible(&system.structure, psi.level(), DEFAULT_CAP, |w| {
        s.add(mu.cylinder_mass(w) * psi.eval(w));
    })?;
    Ok(s.value())
}

/// `Σ_{b ∈ D^q} ψ(b) B_{b_q} ⋯ B_{b_1}` for the given branch matrices.
fn prefix_sum_matrix(branches: &[DMatrix<f64>], psi: &CylinderObservable) -> Result<DMatrix<f64>> {
    let k = branches.len();
    let q = psi.level();
    let count = (k as f64).powi(q as i32);
    if count > DEFAULT_CAP as f64 {
        return Err(Error::CapExceeded {
            count,
            cap: DEFAULT_CAP,
        });
    }
    let m = branches[0].nrows();
    let mut total = DMatrix::zeros(m, m);
    let mut word = Vec::with_capacity(q);
    fn rec(
        branches: &[DMatrix<f64>],
        psi: &CylinderObservable,
        q: usize,
        word: &mut Vec<usize>,
        product: &DMatrix<f64>,
        total: &mut DMatrix<f64>,
    ) {
        let m = product.nrows();
        if word.len() == q - 1 {
            let mut last = DMatrix::zeros(m, m);
            for (i, b) in branches.iter().enumerate() {
                word.push(i);
                let v = psi.eval(word);
                word.pop();
                if v != 0.0 {
                    last += b * v;
                }
            }
            *total += last * product;
            return;
        }
        for (i, b) in branches.iter().enumerate() {
            word.push(i);
            let next = b * product;
            rec(branches, psi, q, word, &next, total);
            word.pop();
        }
    }
    rec(branches, psi, q, &mut word, &DMatrix::identity(m, m), &mut total);
    Ok(total)
}

/// `(log Σ_{Per_n} w, Σ_{Per_n} w ψ / Σ w)` through traces.
fn trace_integral(system: &System, psi: &CylinderObservable, n: usize, dense_limit: usize) -> Result<(f64, f64)> {
    let q = psi.level();
    if n < q {
        return Err(Error::Unsupported("trace route needs n ≥ observable level".into()));
    }
    if let Some(digits) = system.gauss_digits() {
        let op = TaylorOperator::new(digits.to_vec(), TAYLOR_SIZE)?;
        // Σ_{Per_n} |(T^n)'|^{-1} F = tr(L_1^{n-q} G_1) − (−1)^n tr(L_2^{n-q} G_2).
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let ones = CylinderObservable::from_fn(q, |_| 1.0, "one");
        let mut parts = [0.0f64; 2];
        let per_s: Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)> = [1.0, 2.0]
            .into_iter()
            .map(|s| {
                let b: Vec<DMatrix<f64>> = (0..digits.len()).map(|i| op.branch(i, s)).collect();
                let l = b.iter().fold(DMatrix::zeros(op.size(), op.size()), |acc, x| acc + x);
                (l, b)
            })
            .collect();
        for (slot, f) in [&ones, psi].into_iter().enumerate() {
            let mut val = 0.0;
            for (j, (l, b)) in per_s.iter().enumerate() {
                let g = prefix_sum_matrix(b, f)?;
                let tr = (l.pow((n - q) as u32) * g).trace();
                val += if j == 0 { tr } else { -sign * tr };
            }
            parts[slot] = val;
        }
        if !(parts[0] > 0.0) {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: parts[0],
            });
        }
        return Ok((parts[0].ln(), parts[1] / parts[0]));
    }
    let values = system
        .potential
        .symbol_values()
        .ok_or_else(|| Error::Unsupported("trace route needs a locally constant potential".into()))?;
    let s = system.len();
    if s > dense_limit {
        return Err(Error::Unsupported(format!(
            "alphabet of {s} symbols too large for dense traces"
        )));
    }
    let t = &system.structure;
    let shift = values.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut a = DMatrix::zeros(s, s);
    let mut mm = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in t.successors(i) {
            a[(i, j)] = 1.0;
            mm[(i, j)] = (values[i] - shift).exp();
        }
    }
    // Σ_x w ψ = Σ_{ω ∈ E^q} ψ(ω) e^{S_qφ(ω)} (A M^{n−q})(ω_{q−1}, ω_0), shifted by e^{−n·shift}.
    let g = a * mm.pow((n - q) as u32);
    let mut total = NeumaierSum::new();
    let mut weighted = NeumaierSum::new();
    for_each_admissible(t, q, DEFAULT_CAP, |w| {
        let pre: f64 = w.iter().map(|&i| (values[i] - shift).exp()).product();
        let v = pre * g[(w[q - 1], w[0])];
        total.add(v);
        weighted.add(v * psi.eval(w));
    })?;
    let z = total.value();
    Ok((z.ln() + n as f64 * shift, weighted.value() / z))
}

/// `∫ψ dp_n` for each `n`, against the equilibrium target.
pub fn equidist_diagnostics(
    system: &System,
    psi: &CylinderObservable,
    n_range: &[usize],
    opts: &EquidistOptions,
) -> Result<EquidistReport> {
    let truncated_target = equilibrium_expectation(system, psi)?;
    let (target, target_is_reference) = match psi.reference() {
        Some(r) => (r, true),
        None => (truncated_target, false),
    };
    let mut rows = Vec::with_capacity(n_range.len());
    for &n in n_range {
        let count = system.structure.count_periodic(n);
        let enumerate = match opts.route {
            RouteChoice::Enumeration => true,
            RouteChoice::Trace => false,
            RouteChoice::Auto => count <= opts.enumeration_limit as f64 || n < psi.level(),
        };
        let row = if enumerate {
            let wpm = weighted_periodic_measure(system, n, false, opts.cap)?;
            let integral = wpm.integral(psi);
            let bracket = |pick: fn(&PeriodicOrbit) -> f64| -> f64 {
                let mut acc = LogSumExp::new();
                for o in &wpm.orbits {
                    acc.add(pick(o) + (o.prime_period as f64).ln());
                }
                let z = acc.value();
                compensated_sum(
                    wpm.orbits
                        .iter()
                        .map(|o| o.prime_period as f64 * (pick(o) - z).exp() * orbit_average(&o.word, psi)),
                )
            };
            EquidistRow {
                n,
                integral,
                integral_inf_weights: bracket(|o| o.log_weight_inf),
                integral_sup_weights: bracket(|o| o.log_weight_sup),
                target,
                signed_error: integral - target,
                abs_error: (integral - target).abs(),
                n_orbits: wpm.n_points as f64,
                log_normalizer: wpm.log_normalizer,
                route: Route::Enumeration,
            }
        } else {
            let (log_z, integral) = trace_integral(system, psi, n, opts.dense_limit)?;
            EquidistRow {
                n,
                integral,
                integral_inf_weights: integral,
                integral_sup_weights: integral,
                target,
                signed_error: integral - target,
                abs_error: (integral - target).abs(),
                n_orbits: count,
                log_normalizer: log_z,
                route: Route::Trace,
            }
        };
        rows.push(row);
    }
    let monotone = rows.windows(2).all(|w| w[1].abs_error <= w[0].abs_error);
    Ok(EquidistReport {
        observable: psi.description().to_string(),
        target,
        target_is_reference,
        truncated_target,
        rows,
        monotone,
    })
}

/// Whether the system's potential is evaluated exactly on periodic points.
pub fn has_exact_weights(system: &System) -> bool {
    matches!(system.kind, SystemKind::Gauss { .. }) || system.potential.symbol_values().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussModel, Model};

    #[test]
    fn orbit_empirical_examples() {
        let d = orbit_empirical(&[0, 0, 0, 0], 1).unwrap();
        assert_eq!(d.weights.get(&vec![0]), Some(&1.0));
        let d = orbit_empirical(&[0, 1], 1).unwrap();
        assert_eq!(d.weights.values().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
        let d = orbit_empirical(&[0, 1], 2).unwrap();
        assert_eq!(d.weights.get(&vec![0, 1]), Some(&0.5));
        assert_eq!(d.weights.get(&vec![1, 0]), Some(&0.5));
    }

    #[test]
    fn gauss_fixed_points_weighted_by_square() {
        let sys = GaussModel::new(5, None).unwrap().system(5).unwrap();
        let wpm = weighted_periodic_measure(&sys, 1, true, DEFAULT_CAP).unwrap();
        let masses = wpm.orbit_masses();
        let xs: Vec<f64> = (1..=5)
            .map(|k| {
                let k = k as f64;
                (-k + (k * k + 4.0).sqrt()) / 2.0
            })
            .collect();
        let z: f64 = xs.iter().map(|x| x * x).sum();
        for (m, x) in masses.iter().zip(&xs) {
            assert!((m - x * x / z).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_matches_enumeration_for_gauss() {
        let sys = GaussModel::new(6, None).unwrap().system(6).unwrap();
        for spec in ["digit:1", "midpoint:2"] {
            let psi: crate::models::ObservableSpec = spec.parse().unwrap();
            let psi = psi.resolve(&sys).unwrap();
            for n in [2, 3, 5] {
                let wpm = weighted_periodic_measure(&sys, n, false, DEFAULT_CAP).unwrap();
                let (lz, v) = trace_integral(&sys, &psi, n, 2000).unwrap();
                assert!(
                    (lz - wpm.log_normalizer).abs() < 1e-10,
                    "{spec} n={n} {lz} {}",
                    wpm.log_normalizer
                );
                assert!(
                    (v - wpm.integral(&psi)).abs() < 1e-10,
                    "{spec} n={n} {v} {}",
                    wpm.integral(&psi)
                );
            }
        }
    }

    #[test]
    fn trace_matches_enumeration_for_markov_shift() {
        let sys = crate::models::BowenSeriesModel::new(2, 2).unwrap().system(2).unwrap();
        let cusp = crate::models::ObservableSpec::Cusp.resolve(&sys).unwrap();
        let pair = CylinderObservable::from_fn(2, |w| (w[0] + 2 * w[1]) as f64, "pair");
        for psi in [cusp, pair] {
            for n in [2, 4] {
                let wpm = weighted_periodic_measure(&sys, n, false, DEFAULT_CAP).unwrap();
                let (lz, v) = trace_integral(&sys, &psi, n, 2000).unwrap();
                assert!((lz - wpm.log_normalizer).abs() < 1e-11);
                assert!((v - wpm.integral(&psi)).abs() < 1e-11 * v.abs().max(1.0));
            }
        }
    }
}
