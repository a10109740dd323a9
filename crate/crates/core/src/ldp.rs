//! Level-1 large deviations: pressure curves `t ↦ P(φ + tψ)`, their
//! Legendre transforms, Monte Carlo deviation probabilities under Markov
//! Gibbs measures and decay rates of weighted periodic points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{Model, ObservableSpec, System};
use crate::numeric::{compensated_sum, LogSumExp, NeumaierSum};
use crate::shift::for_each_necklace;
use crate::thermo::{power_iteration, system_pressure, MarkovMeasure, PressureCurve, PressureOptions, Rows};

/// Largest second-difference deficit tolerated before a curve counts as non-convex.
pub const CONVEXITY_TOL: f64 = 1e-8;
/// `I(s) ≤ ZERO_TOL` marks a zero of the sampled rate function.
pub const ZERO_TOL: f64 = 1e-6;

fn level_one_values(spec: &ObservableSpec, system: &System) -> Result<Vec<f64>> {
    let obs = spec.resolve(system)?;
    obs.symbol_values()
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::Unsupported(format!("{} is not constant on 1-cylinders", obs.description())))
}

/// `P(φ + tψ)` at each grid point on one system.
pub fn pressure_curve_on(system: &System, psi: &[f64], t_grid: &[f64], opts: &PressureOptions) -> Result<Vec<f64>> {
    if psi.len() != system.len() {
        return Err(Error::invalid("observable does not match the alphabet"));
    }
    t_grid
        .par_iter()
        .map(|&t| system_pressure(system, 1.0, Some((psi, t)), opts).map(|v| v.estimate))
        .collect()
}

/// `t ↦ P(φ + tψ)` at truncation `p`, with the difference against `p/2`.
pub fn pressure_curve(
    model: &dyn Model,
    p: usize,
    psi: &ObservableSpec,
    t_grid: &[f64],
    opts: &PressureOptions,
) -> Result<PressureCurve> {
    let sys = model.system(p)?;
    let half = model.system((p / 2).max(1))?;
    let values = pressure_curve_on(&sys, &level_one_values(psi, &sys)?, t_grid, opts)?;
    let half_values = pressure_curve_on(&half, &level_one_values(psi, &half)?, t_grid, opts)?;
    let base = system_pressure(&sys, 1.0, None, opts)?.estimate;
    let delta = values.iter().zip(&half_values).map(|(a, b)| a - b).collect();
    let curve = PressureCurve::new(t_grid.to_vec(), values, delta, base)?;
    curve.check_convex(CONVEXITY_TOL)?;
    Ok(curve)
}

/// Sampled rate function `I(s) = sup_t (t s − [P(φ+tψ) − P(φ)])`.
#[derive(Debug, Clone, Serialize)]
pub struct RateFunctionSample {
    pub s_grid: Vec<f64>,
    pub i_values: Vec<f64>,
    /// Grid `t` attaining the supremum.
    pub argmax_t: Vec<f64>,
    /// Supremum attained at a `t`-grid endpoint: `I(s)` is then only a lower bound.
    pub endpoint_attained: Vec<bool>,
    pub minimizer_s: f64,
    /// Whether `s_grid` includes the curve's slope at `t = 0`, inserted by [`level1_rate`].
    pub stationary_inserted: bool,
    /// Grid points with `I ≤ ZERO_TOL`.
    pub zeros: Vec<f64>,
    /// The zeros form a single cluster no wider than one grid step.
    pub unique_zero: bool,
    /// Largest spacing of the requested grid.
    pub grid_step: f64,
    pub warnings: Vec<String>,
}

impl RateFunctionSample {
    /// `I` at the grid point closest to `s`.
    pub fn at(&self, s: f64) -> f64 {
        let i = self
            .s_grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map_or(0, |x| x.0);
        self.i_values[i]
    }
}

/// Slope of the curve at `t = 0` by central differences, when `0` is an
/// interior grid point.
pub fn slope_at_zero(curve: &PressureCurve) -> Option<f64> {
    let step = curve.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let i = curve.grid.iter().position(|&t| t.abs() <= 1e-12 * step)?;
    if i == 0 || i + 1 >= curve.grid.len() {
        return None;
    }
    let (t0, t2) = (curve.grid[i - 1], curve.grid[i + 1]);
    Some((curve.values[i + 1] - curve.values[i - 1]) / (t2 - t0))
}

fn legendre(curve: &PressureCurve, s: f64) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (j, (&t, &v)) in curve.grid.iter().zip(&curve.values).enumerate() {
        let val = t * s - (v - curve.base);
        if val > best {
            best = val;
            arg = j;
        }
    }
    (best.max(0.0), arg)
}

/// `I(s)`, the maximising grid `t`, and whether it is a grid endpoint.
pub fn rate_at(curve: &PressureCurve, s: f64) -> (f64, f64, bool) {
    let (v, j) = legendre(curve, s);
    (v, curve.grid[j], (j == 0 || j + 1 == curve.grid.len()) && v > 0.0)
}

/// Legendre transform of the curve on `s_grid`. The slope at `t = 0`, when
/// available, is added to the grid so that the minimizer is sampled.
pub fn level1_rate(curve: &PressureCurve, s_grid: &[f64]) -> Result<RateFunctionSample> {
    curve.check_convex(CONVEXITY_TOL)?;
    if s_grid.is_empty() || s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("s grid must be nonempty and strictly increasing"));
    }
    let grid_step = s_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut grid = s_grid.to_vec();
    let stationary = slope_at_zero(curve);
    let mut inserted = false;
    if let Some(m) = stationary {
        let near = grid.iter().any(|&s| (s - m).abs() <= 1e-12 * grid_step.max(1e-300));
        if m > grid[0] && m < grid[grid.len() - 1] && !near {
            let pos = grid.partition_point(|&x| x < m);
            grid.insert(pos, m);
            inserted = true;
        }
    }
    let last = curve.grid.len() - 1;
    let mut i_values = Vec::with_capacity(grid.len());
    let mut argmax_t = Vec::with_capacity(grid.len());
    let mut endpoint_attained = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for &s in &grid {
        let (v, j) = legendre(curve, s);
        i_values.push(v);
        argmax_t.push(curve.grid[j]);
        let edge = (j == 0 || j == last) && v > 0.0;
        if edge {
            warnings.push(format!("supremum at t-grid endpoint for s = {s}: grid too coarse"));
        }
        endpoint_attained.push(edge);
    }
    let (imin, _) = i_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let zeros: Vec<f64> = grid
        .iter()
        .zip(&i_values)
        .filter(|(_, &v)| v <= ZERO_TOL)
        .map(|(&s, _)| s)
        .collect();
    if i_values[imin] > ZERO_TOL {
        warnings.push(format!("minimum {} exceeds the zero tolerance", i_values[imin]));
    }
    Ok(RateFunctionSample {
        minimizer_s: grid[imin],
        unique_zero: !zeros.is_empty() && zeros[zeros.len() - 1] - zeros[0] <= grid_step * (1.0 + 1e-9),
        zeros,
        s_grid: grid,
        i_values,
        argmax_t,
        endpoint_attained,
        stationary_inserted: inserted,
        grid_step,
        warnings,
    })
}

/// Evenly spaced grid `lo, lo + h, …, hi`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let m = (points - 1) as f64;
    (0..points)
        .map(|i| {
            let i = i as f64;
            (lo * (m - i) + hi * i) / m
        })
        .collect()
}

/// Trajectory sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Plain frequencies of the event under `μ`.
    Direct,
    /// Trajectories from the exponentially tilted (Doob-transformed) chain
    /// reweighted by the exact likelihood ratio.
    Tilted,
}

/// Raw trajectory data: `S_nψ` and the log-likelihood ratio of each path.
#[derive(Debug, Clone, Serialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub n: usize,
    pub count: usize,
    pub mode: SamplingMode,
    /// Tilt parameter of the sampling chain (0 for direct sampling).
    pub tilt: f64,
    pub sums: Vec<f64>,
    pub log_likelihood: Vec<f64>,
}

/// Sampling chain with cumulative rows for inverse-CDF draws.
struct Sampler {
    initial: Vec<f64>,
    cumulative: Vec<Vec<(usize, f64)>>,
    /// `ln Q(a,b) − ln Q_t(a,b)` looked up alongside each draw.
    log_ratio: Vec<Vec<f64>>,
}

fn cumulative_rows(rows: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, f64)>> {
    rows.iter()
        .map(|row| {
            let mut acc = 0.0;
            let mut out: Vec<(usize, f64)> = row
                .iter()
                .filter(|x| x.1 > 0.0)
                .map(|&(b, p)| {
                    acc += p;
                    (b, acc)
                })
                .collect();
            if let Some(last) = out.last_mut() {
                last.1 = f64::INFINITY;
            }
            out
        })
        .collect()
}

fn draw_initial(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&x| x <= u).min(cdf.len() - 1)
}

fn dense_rows(mu: &MarkovMeasure) -> Vec<Vec<(usize, f64)>> {
    (0..mu.len()).map(|a| mu.row(a)).collect()
}

/// Rows of the Doob transform `Q_t(a,b) = Q(a,b) e^{tψ(b)} r(b) / (λ r(a))`
/// and the stationary mean of `ψ` under it.
fn tilted_rows(mu: &MarkovMeasure, psi: &[f64], t: f64) -> Result<(Vec<Vec<(usize, f64)>>, f64)> {
    let rows = dense_rows(mu);
    let s = rows.len();
    let shift = psi.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e: Vec<f64> = psi.iter().map(|&x| (t * (x - shift)).exp()).collect();
    let out = match mu.rows() {
        Rows::Iid(p) => {
            let z = compensated_sum(p.iter().zip(&e).map(|(a, b)| a * b));
            let row: Vec<(usize, f64)> = p.iter().zip(&e).map(|(a, b)| a * b / z).enumerate().collect();
            vec![row; s]
        }
        Rows::Sparse(_) => {
            let bound = rows
                .iter()
                .map(|row| compensated_sum(row.iter().map(|&(b, q)| q * e[b])))
                .fold(0.0, f64::max);
            let (_, r, _) = power_iteration(s, bound, |v, out| {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = compensated_sum(rows[a].iter().map(|&(b, q)| q * e[b] * v[b]));
                }
            })?;
            rows.iter()
                .map(|row| {
                    let z = compensated_sum(row.iter().map(|&(b, q)| q * e[b] * r[b]));
                    row.iter().map(|&(b, q)| (b, q * e[b] * r[b] / z)).collect()
                })
                .collect()
        }
    };
    // Stationary law of the tilted chain.
    let (_, pi, _) = power_iteration(s, 1.0, |v, o| {
        o.iter_mut().for_each(|x| *x = 0.0);
        for (a, row) in out.iter().enumerate() {
            for &(b, q) in row {
                o[b] += v[a] * q;
            }
        }
    })?;
    let mean = compensated_sum(pi.iter().zip(psi).map(|(p, x)| p * x));
    Ok((out, mean))
}

/// Tilt `t ≥ 0` whose Doob transform has stationary mean `a` (capped when
/// `a` is at or beyond `max ψ`).
fn solve_tilt(mu: &MarkovMeasure, psi: &[f64], a: f64) -> Result<f64> {
    let base = mu.expectation(psi);
    if a <= base {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while tilted_rows(mu, psi, hi)?.1 < a {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Ok(64.0);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if tilted_rows(mu, psi, mid)?.1 < a {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn build_sampler(mu: &MarkovMeasure, psi: &[f64], tilt: f64) -> Result<Sampler> {
    let base_rows = dense_rows(mu);
    let rows = if tilt == 0.0 {
        base_rows.clone()
    } else {
        tilted_rows(mu, psi, tilt)?.0
    };
    let log_ratio = rows
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .filter(|x| x.1 > 0.0)
                .map(|&(b, q)| mu.transition(a, b).ln() - q.ln())
                .collect()
        })
        .collect();
    let mut acc = 0.0;
    let mut initial: Vec<f64> = mu
        .stationary()
        .iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = initial.last_mut() {
        *last = f64::INFINITY;
    }
    Ok(Sampler {
        initial,
        cumulative: cumulative_rows(&rows),
        log_ratio,
    })
}

/// Draws `count` trajectories of length `n`; trajectory `i` uses the ChaCha8
/// stream `i` of `seed`, so results do not depend on scheduling.
pub fn sample_batch(
    mu: &MarkovMeasure,
    psi: &[f64],
    a: f64,
    n: usize,
    count: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<SampleBatch> {
    if psi.len() != mu.len() {
        return Err(Error::invalid("observable does not match the alphabet"));
    }
    if n == 0 || count == 0 {
        return Err(Error::invalid("n and count must be positive"));
    }
    let tilt = match mode {
        SamplingMode::Direct => 0.0,
        SamplingMode::Tilted => solve_tilt(mu, psi, a)?,
    };
    let sampler = build_sampler(mu, psi, tilt)?;
    let paths: Vec<(f64, f64)> = (0..count as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            let mut x = draw_initial(&sampler.initial, rng.random::<f64>());
            let mut sum = NeumaierSum::new();
            let mut llr = NeumaierSum::new();
            sum.add(psi[x]);
            for _ in 1..n {
                let cdf = &sampler.cumulative[x];
                let i = cdf.partition_point(|c| c.1 <= rng.random::<f64>()).min(cdf.len() - 1);
                llr.add(sampler.log_ratio[x][i]);
                x = cdf[i].0;
                sum.add(psi[x]);
            }
            (sum.value(), llr.value())
        })
        .collect();
    let (sums, log_likelihood) = paths.into_iter().unzip();
    Ok(SampleBatch {
        seed,
        n,
        count,
        mode,
        tilt,
        sums,
        log_likelihood,
    })
}

/// Deviation probability `μ{S_nψ/n ≥ a}` and its rate `−(1/n) ln`.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationEstimate {
    pub a: f64,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    pub tilt: f64,
    pub hits: usize,
    pub probability: f64,
    /// 95% interval on the probability: Wilson for direct sampling, normal
    /// for the reweighted estimator.
    pub ci_low: f64,
    pub ci_high: f64,
    pub rate: f64,
    pub rate_ci_low: f64,
    pub rate_ci_high: f64,
    /// No trajectory hit the event: `rate` is then the lower bound from `ci_high`.
    pub zero_hits: bool,
}

const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `hits` successes in `count` trials.
pub fn wilson_interval(hits: usize, count: usize) -> (f64, f64) {
    let n = count as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    let lo = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if hits == count { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

fn to_rate(p: f64, n: usize) -> f64 {
    if p <= 0.0 {
        f64::INFINITY
    } else {
        (-p.ln() / n as f64).max(0.0)
    }
}

/// Estimate from a batch. The event is `S_nψ ≥ n a` with a relative
/// tolerance of `1e-12` to absorb summation rounding.
pub fn estimate_from_batch(batch: &SampleBatch, a: f64) -> DeviationEstimate {
    let threshold = batch.n as f64 * a;
    let slack = 1e-12 * threshold.abs().max(1.0);
    let hit = |s: f64| s >= threshold - slack;
    let hits = batch.sums.iter().filter(|&&s| hit(s)).count();
    let count = batch.count;
    let (probability, ci_low, ci_high) = match batch.mode {
        SamplingMode::Direct => {
            let (lo, hi) = wilson_interval(hits, count);
            (hits as f64 / count as f64, lo, hi)
        }
        SamplingMode::Tilted => {
            let w: Vec<f64> = batch
                .sums
                .iter()
                .zip(&batch.log_likelihood)
                .map(|(&s, &l)| if hit(s) { l.exp() } else { 0.0 })
                .collect();
            let mean = compensated_sum(w.iter().copied()) / count as f64;
            let var = compensated_sum(w.iter().map(|x| (x - mean) * (x - mean))) / (count as f64 - 1.0).max(1.0);
            let half = Z95 * (var / count as f64).sqrt();
            (mean, (mean - half).max(0.0), mean + half)
        }
    };
    let zero_hits = hits == 0;
    let rate = if zero_hits {
        to_rate(ci_high, batch.n)
    } else {
        to_rate(probability, batch.n)
    };
    DeviationEstimate {
        a,
        n: batch.n,
        count,
        seed: batch.seed,
        mode: batch.mode,
        tilt: batch.tilt,
        hits,
        probability,
        ci_low,
        ci_high,
        rate,
        rate_ci_low: to_rate(ci_high, batch.n),
        rate_ci_high: to_rate(ci_low, batch.n),
        zero_hits,
    }
}

/// Monte Carlo estimate of `−(1/n) ln μ{S_nψ/n ≥ a}` from `count` stationary trajectories.
pub fn sample_empirical_deviation(
    mu: &MarkovMeasure,
    psi: &[f64],
    a: f64,
    n: usize,
    count: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<DeviationEstimate> {
    let batch = sample_batch(mu, psi, a, n, count, seed, mode)?;
    Ok(estimate_from_batch(&batch, a))
}

/// One row of [`periodic_deviation_rate`].
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicDeviationRow {
    pub n: usize,
    /// `log Σ_{x ∈ Per_n, ∫ψ dδ_x^n ≥ a} e^{S_nφ(x)}`.
    pub log_restricted: f64,
    pub log_total: f64,
    /// `−(1/n)(log_restricted − log_total)`; infinite when no orbit qualifies.
    pub rate: f64,
    pub n_points: usize,
    pub n_restricted_points: usize,
}

/// Decay of the `p_n`-mass of `{∫ψ dδ_x^n ≥ a}` by necklace enumeration.
/// Weights use exact periodic sums when the model provides them and the
/// cylinder sup otherwise.
pub fn periodic_deviation_rate(
    system: &System,
    psi: &[f64],
    a: f64,
    n_range: &[usize],
    cap: u64,
) -> Result<Vec<PeriodicDeviationRow>> {
    if psi.len() != system.len() {
        return Err(Error::invalid("observable does not match the alphabet"));
    }
    n_range
        .iter()
        .map(|&n| {
            let mut total = LogSumExp::new();
            let mut restricted = LogSumExp::new();
            let mut n_points = 0;
            let mut n_restricted = 0;
            let threshold = n as f64 * a;
            let slack = 1e-12 * threshold.abs().max(1.0);
            for_each_necklace(&system.structure, n, cap, |w, d| {
                let lw = system
                    .potential
                    .periodic_sum(w)
                    .unwrap_or_else(|| system.potential.birkhoff_bounds(w).1)
                    + (d as f64).ln();
                total.add(lw);
                n_points += d;
                let s = compensated_sum(w.iter().map(|&i| psi[i]));
                if s >= threshold - slack {
                    restricted.add(lw);
                    n_restricted += d;
                }
            })?;
            let log_total = total.value();
            let log_restricted = restricted.value();
            let rate = if n_restricted == 0 {
                f64::INFINITY
            } else {
                ((log_total - log_restricted) / n as f64).max(0.0)
            };
            Ok(PeriodicDeviationRow {
                n,
                log_restricted,
                log_total,
                rate,
                n_points,
                n_restricted_points: n_restricted,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli_curve(grid: &[f64]) -> PressureCurve {
        let values = grid.iter().map(|&t| ((t.exp() + 1.0) / 2.0).ln()).collect();
        PressureCurve::new(grid.to_vec(), values, vec![0.0; grid.len()], 0.0).unwrap()
    }

    fn closed_form(s: f64) -> f64 {
        let f = |x: f64| if x > 0.0 { x * (2.0 * x).ln() } else { 0.0 };
        f(s) + f(1.0 - s)
    }

    #[test]
    fn legendre_of_bernoulli_curve() {
        let curve = bernoulli_curve(&linspace(-10.0, 10.0, 2001));
        let rate = level1_rate(&curve, &linspace(0.05, 0.95, 91)).unwrap();
        assert!((rate.at(0.7) - closed_form(0.7)).abs() < 1e-4);
        assert!((rate.minimizer_s - 0.5).abs() < 1e-9);
        assert!(rate.unique_zero);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn sampling_is_reproducible() {
        let mu = MarkovMeasure::bernoulli(vec![0.5, 0.5]).unwrap();
        let psi = [1.0, 0.0];
        let a = sample_empirical_deviation(&mu, &psi, 0.6, 50, 2000, 7, SamplingMode::Direct).unwrap();
        let b = sample_empirical_deviation(&mu, &psi, 0.6, 50, 2000, 7, SamplingMode::Direct).unwrap();
        assert_eq!(a.probability.to_bits(), b.probability.to_bits());
        let trivial = sample_empirical_deviation(&mu, &psi, 0.0, 50, 1000, 7, SamplingMode::Direct).unwrap();
        assert_eq!(trivial.probability, 1.0);
        assert_eq!(trivial.rate, 0.0);
    }

    #[test]
    fn tilted_chain_of_markov_measure_hits_target_mean() {
        let rows = vec![vec![(0, 0.3), (1, 0.7)], vec![(0, 1.0)]];
        let mu = MarkovMeasure::from_rows(crate::shift::SymbolSet::indexed(2).unwrap(), rows, 1).unwrap();
        let psi = [1.0, 0.0];
        let t = solve_tilt(&mu, &psi, 0.75).unwrap();
        let (_, mean) = tilted_rows(&mu, &psi, t).unwrap();
        assert!((mean - 0.75).abs() < 1e-9);
    }
}
