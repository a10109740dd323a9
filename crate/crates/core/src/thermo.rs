//! Pressure, Gibbs Markov measures with Bowen–Gibbs constants, entropy and
//! free-energy functionals, and the symbol-collapse truncation machinery.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{Model, System};
use crate::numeric::{compensated_sum, xlogx, LogSumExp, NeumaierSum};
use crate::potential::{induce_block_potential, BlockPotential, Potential, Tilted};
use crate::shift::{is_primitive, SymbolSet, TransitionStructure, DEFAULT_CAP};

const PERRON_TOL: f64 = 1e-12;
const PERRON_MAX_ITER: usize = 100_000;
const PAR_THRESHOLD: usize = 4096;

/// Perron data of `M(a,b) = [a → b] · e^{Φ(a)}`.
#[derive(Debug, Clone, Serialize)]
pub struct PerronData {
    pub log_lambda: f64,
    /// Left eigenvector, normalised with `Σ left·right = 1`.
    pub left: Vec<f64>,
    /// Right eigenvector, normalised to sum 1.
    pub right: Vec<f64>,
    pub iterations: usize,
}

fn normalise(v: &mut [f64]) -> f64 {
    let s = compensated_sum(v.iter().copied());
    v.iter_mut().for_each(|x| *x /= s);
    s
}

/// Iterations of plain power iteration before switching to the shifted one.
const PLAIN_ITER: usize = 5_000;

fn iterate<F>(size: usize, shift: f64, max_iter: usize, apply: &F) -> Result<(f64, Vec<f64>, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut v = vec![1.0 / size as f64; size];
    let mut w = vec![0.0; size];
    let mut total_prev = 0.0;
    let mut residual = f64::NAN;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        if shift != 0.0 {
            w.iter_mut().zip(&v).for_each(|(x, y)| *x += shift * y);
        }
        let total = normalise(&mut w);
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        let max = w.iter().fold(0.0f64, |m, &x| m.max(x));
        residual = w.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / max;
        let change = ((total - total_prev) / total).abs();
        std::mem::swap(&mut v, &mut w);
        total_prev = total;
        if residual <= PERRON_TOL && change <= PERRON_TOL {
            return Ok((total, v, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Perron eigenvalue and vector (`|v|₁ = 1`) of a nonnegative operator by
/// power iteration from the uniform vector. When plain iteration stalls
/// (eigenvalues of modulus close to `λ`), it restarts on `A + shift·I`,
/// which has the same Perron vector; `shift` should bound `λ` above, e.g. a
/// maximal row sum. Returns `(λ, v, iterations)`.
pub(crate) fn power_iteration<F>(size: usize, shift: f64, apply: F) -> Result<(f64, Vec<f64>, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    match iterate(size, 0.0, PLAIN_ITER, &apply) {
        Err(Error::NonConvergence { .. }) if shift > 0.0 => {
            let (_, v, it) = iterate(size, shift, PERRON_MAX_ITER, &apply)?;
            let mut w = vec![0.0; size];
            apply(&v, &mut w);
            Ok((compensated_sum(w.iter().copied()), v, PLAIN_ITER + it))
        }
        other => other,
    }
}

fn matvec_right(t: &TransitionStructure, e: &[f64], v: &[f64], out: &mut [f64]) {
    if t.is_full() {
        let total = compensated_sum(v.iter().copied());
        out.iter_mut().zip(e).for_each(|(o, &x)| *o = x * total);
        return;
    }
    let row = |a: usize| e[a] * compensated_sum(t.successors(a).map(|b| v[b]));
    if out.len() >= PAR_THRESHOLD {
        out.par_iter_mut().enumerate().for_each(|(a, o)| *o = row(a));
    } else {
        out.iter_mut().enumerate().for_each(|(a, o)| *o = row(a));
    }
}

fn matvec_left(t: &TransitionStructure, e: &[f64], v: &[f64], out: &mut [f64]) {
    if t.is_full() {
        let total = compensated_sum(v.iter().zip(e).map(|(x, y)| x * y));
        out.iter_mut().for_each(|o| *o = total);
        return;
    }
    let col = |b: usize| compensated_sum(t.predecessors(b).map(|a| v[a] * e[a]));
    if out.len() >= PAR_THRESHOLD {
        out.par_iter_mut().enumerate().for_each(|(b, o)| *o = col(b));
    } else {
        out.iter_mut().enumerate().for_each(|(b, o)| *o = col(b));
    }
}

/// Spectral radius and Perron vectors of the Ruelle matrix of a block potential.
pub fn transfer_perron(phi: &BlockPotential) -> Result<PerronData> {
    perron_of_values(&phi.sup, &phi.structure)
}

/// As [`transfer_perron`] for per-symbol values on a structure.
pub fn perron_of_values(values: &[f64], t: &TransitionStructure) -> Result<PerronData> {
    if values.len() != t.len() {
        return Err(Error::invalid("potential and structure sizes differ"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("potential must be finite"));
    }
    if !is_primitive(t) {
        return Err(Error::NotPrimitive {
            a: 0,
            b: 0,
            bound: t.len(),
        });
    }
    let shift = values.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e: Vec<f64> = values.iter().map(|x| (x - shift).exp()).collect();
    let s = t.len();
    let bound = (0..s).map(|a| e[a] * t.out_degree(a) as f64).fold(0.0, f64::max);
    let (lambda, right, it_r) = power_iteration(s, bound, |v, out| matvec_right(t, &e, v, out))?;
    let (lambda_l, mut left, it_l) = power_iteration(s, bound, |v, out| matvec_left(t, &e, v, out))?;
    if ((lambda - lambda_l) / lambda).abs() > 1e-9 {
        return Err(Error::NonConvergence {
            iterations: it_r.max(it_l),
            residual: (lambda - lambda_l).abs(),
        });
    }
    let dot = compensated_sum(left.iter().zip(&right).map(|(a, b)| a * b));
    left.iter_mut().for_each(|x| *x /= dot);
    Ok(PerronData {
        log_lambda: lambda.ln() + shift,
        left,
        right,
        iterations: it_r.max(it_l),
    })
}

/// Which estimator produced the headline pressure value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureMethod {
    /// Leading eigenvalue of the collocated transfer operator (interval maps).
    Conformal,
    /// `(1/q) log λ` of the locally constant block induction.
    Block,
}

#[derive(Debug, Clone)]
pub struct PressureOptions {
    pub q: usize,
    /// Use the block estimator even when a conformal operator exists.
    pub force_block: bool,
    pub cap: u64,
    /// Largest `|E^n|` enumerated for the `(1/n) log Z_n` cross-check.
    pub zn_budget: u64,
}

impl Default for PressureOptions {
    fn default() -> Self {
        Self {
            q: 1,
            force_block: false,
            cap: DEFAULT_CAP,
            zn_budget: 2_000_000,
        }
    }
}

/// Pressure of `βφ` on one truncation.
#[derive(Debug, Clone, Serialize)]
pub struct PressureValue {
    pub estimate: f64,
    pub method: PressureMethod,
    /// `(1/q) log λ` of the block induction.
    pub block_estimate: f64,
    /// `D_q / q`.
    pub oscillation_per_symbol: f64,
}

/// Pressure of `β(φ + tψ)`-type potentials on a single system: the
/// conformal estimate when available, and always the block estimate.
pub fn system_pressure(
    system: &System,
    beta: f64,
    tilt: Option<(&[f64], f64)>,
    opts: &PressureOptions,
) -> Result<PressureValue> {
    let base = system.scaled(beta);
    let potential: std::sync::Arc<dyn Potential> = match tilt {
        Some((psi, t)) => std::sync::Arc::new(Tilted::new(base.potential.clone(), psi.to_vec(), t)),
        None => base.potential.clone(),
    };
    let block = induce_block_potential(potential.as_ref(), opts.q, &system.structure, opts.cap)?;
    let block_estimate = transfer_perron(&block)?.log_lambda / opts.q as f64;
    let oscillation_per_symbol = block.oscillation / opts.q as f64;
    if !opts.force_block {
        if let Some(op) = system.gauss_operator() {
            let mult: Option<Vec<f64>> = tilt.map(|(psi, t)| psi.iter().map(|x| (t * x).exp()).collect());
            let estimate = op.log_lambda(beta, mult.as_deref())?;
            return Ok(PressureValue {
                estimate,
                method: PressureMethod::Conformal,
                block_estimate,
                oscillation_per_symbol,
            });
        }
    }
    Ok(PressureValue {
        estimate: block_estimate,
        method: PressureMethod::Block,
        block_estimate,
        oscillation_per_symbol,
    })
}

/// Result of [`pressure`].
#[derive(Debug, Clone, Serialize)]
pub struct PressureReport {
    pub beta: f64,
    pub p: usize,
    pub p_half: usize,
    pub q: usize,
    pub estimate: f64,
    pub estimate_half: f64,
    /// `|estimate(p) − estimate(p/2)|`.
    pub delta: f64,
    pub method: PressureMethod,
    pub block_estimate: f64,
    pub block_estimate_half: f64,
    /// `D_q / q` at truncation `p`.
    pub oscillation_per_symbol: f64,
    /// `(1/n) log Z_n(βφ)` at the largest `n` within the enumeration budget.
    pub zn_estimate: f64,
    pub zn_n: usize,
    /// `|block_estimate − zn_estimate| ≤ delta + D_q/q`.
    pub consistent: bool,
    /// Upper bound on the truncated-away part of `Z_1(βφ)`, when a tail model exists.
    pub tail_bound: Option<f64>,
}

/// Pressure of `βφ` at truncation `p` with block length `q`, with the
/// truncation delta against `p/2` and a partition-sum cross-check.
pub fn pressure(model: &dyn Model, beta: f64, p: usize, opts: &PressureOptions) -> Result<PressureReport> {
    if opts.q == 0 {
        return Err(Error::invalid("block length must be at least 1"));
    }
    let sys = model.system(p)?;
    if let Some(tail) = sys.potential.tail() {
        if beta > 0.0 && !tail.converges(beta) {
            return Err(Error::NotSummable { beta });
        }
    }
    let p_half = (p / 2).max(1);
    let sys_half = model.system(p_half)?;
    let full = system_pressure(&sys, beta, None, opts)?;
    let half = system_pressure(&sys_half, beta, None, opts)?;
    let scaled = sys.scaled(beta);
    let mut n = 1;
    while sys.structure.count_admissible(n + 1) <= opts.zn_budget as f64 && n < 64 {
        n += 1;
    }
    let zn = crate::potential::log_partition_sum(
        scaled.potential.as_ref(),
        1.0,
        n,
        &sys.structure,
        opts.cap.max(opts.zn_budget),
    )? / n as f64;
    let delta = (full.estimate - half.estimate).abs();
    let consistent = (full.block_estimate - zn).abs() <= delta + full.oscillation_per_symbol + 1e-12;
    let tail_bound = sys.potential.tail().map(|t| t.tail_bound(beta, sys.truncation));
    Ok(PressureReport {
        beta,
        p: sys.truncation,
        p_half: sys_half.truncation,
        q: opts.q,
        estimate: full.estimate,
        estimate_half: half.estimate,
        delta,
        method: full.method,
        block_estimate: full.block_estimate,
        block_estimate_half: half.block_estimate,
        oscillation_per_symbol: full.oscillation_per_symbol,
        zn_estimate: zn,
        zn_n: n,
        consistent,
        tail_bound,
    })
}

/// Transition rows of a stationary Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    /// Every row equals this distribution (full shift, i.i.d. chain).
    Iid(Vec<f64>),
    /// Row `a` lists `(b, Q(a,b))` over allowed successors, increasing in `b`.
    Sparse(Vec<Vec<(usize, f64)>>),
}

/// Stationary Markov measure on a (possibly block) alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMeasure {
    symbols: SymbolSet,
    stationary: Vec<f64>,
    rows: Rows,
    /// Block length of the alphabet, used to express rates per original symbol.
    q: usize,
}

impl MarkovMeasure {
    /// Checks stochasticity, stationarity and normalisation.
    pub fn new(symbols: SymbolSet, stationary: Vec<f64>, rows: Rows, q: usize) -> Result<Self> {
        let m = Self {
            symbols,
            stationary,
            rows,
            q: q.max(1),
        };
        m.validate()?;
        Ok(m)
    }

    /// Bernoulli measure with marginal `p`.
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        Self::new(SymbolSet::indexed(p.len())?, p.clone(), Rows::Iid(p), 1)
    }

    /// Markov chain with the given rows and its stationary vector.
    pub fn from_rows(symbols: SymbolSet, rows: Vec<Vec<(usize, f64)>>, q: usize) -> Result<Self> {
        let s = rows.len();
        let (_, stationary, _) = power_iteration(s, 1.0, |v, out| {
            out.iter_mut().for_each(|x| *x = 0.0);
            for (a, row) in rows.iter().enumerate() {
                for &(b, p) in row {
                    out[b] += v[a] * p;
                }
            }
        })?;
        Self::new(symbols, stationary, Rows::Sparse(rows), q)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.symbols.len();
        if self.stationary.len() != s {
            return Err(Error::invalid("stationary vector has wrong length"));
        }
        if self.stationary.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("stationary vector must be nonnegative"));
        }
        if (compensated_sum(self.stationary.iter().copied()) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("stationary vector must sum to 1"));
        }
        let mut pushed = vec![NeumaierSum::new(); s];
        match &self.rows {
            Rows::Iid(p) => {
                if p.len() != s || (compensated_sum(p.iter().copied()) - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("row must be a probability vector"));
                }
                for (b, acc) in pushed.iter_mut().enumerate() {
                    acc.add(p[b]);
                }
            }
            Rows::Sparse(rows) => {
                if rows.len() != s {
                    return Err(Error::invalid("wrong number of rows"));
                }
                for (a, row) in rows.iter().enumerate() {
                    if row.iter().any(|&(b, p)| b >= s || !(p >= 0.0)) {
                        return Err(Error::invalid(format!("row {a} has an invalid entry")));
                    }
                    if (compensated_sum(row.iter().map(|x| x.1)) - 1.0).abs() > 1e-12 {
                        return Err(Error::invalid(format!("row {a} does not sum to 1")));
                    }
                    for &(b, p) in row {
                        pushed[b].add(self.stationary[a] * p);
                    }
                }
            }
        }
        for (b, acc) in pushed.iter().enumerate() {
            if (acc.value() - self.stationary[b]).abs() > 1e-10 {
                return Err(Error::invalid("stationary vector is not invariant"));
            }
        }
        Ok(())
    }

    pub fn symbols(&self) -> &SymbolSet {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.stationary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stationary.is_empty()
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    pub fn block_length(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn transition(&self, a: usize, b: usize) -> f64 {
        match &self.rows {
            Rows::Iid(p) => p[b],
            Rows::Sparse(rows) => rows[a].binary_search_by_key(&b, |x| x.0).map_or(0.0, |i| rows[a][i].1),
        }
    }

    /// Row `a` as `(b, Q(a,b))` pairs with positive probability.
    pub fn row(&self, a: usize) -> Vec<(usize, f64)> {
        match &self.rows {
            Rows::Iid(p) => p.iter().copied().enumerate().filter(|x| x.1 > 0.0).collect(),
            Rows::Sparse(rows) => rows[a].clone(),
        }
    }

    /// Whether every positive transition is allowed by `t`.
    pub fn supported_on(&self, t: &TransitionStructure) -> bool {
        (0..self.len()).all(|a| self.row(a).iter().all(|&(b, p)| p == 0.0 || t.allowed(a, b)))
    }

    /// `μ[ω]`.
    pub fn cylinder_mass(&self, word: &[usize]) -> f64 {
        let mut m = self.stationary[word[0]];
        for w in word.windows(2) {
            m *= self.transition(w[0], w[1]);
        }
        m
    }

    /// `−Σ_a π(a) Σ_b Q(a,b) ln Q(a,b)` per alphabet symbol.
    pub fn entropy_per_block(&self) -> f64 {
        match &self.rows {
            Rows::Iid(p) => -compensated_sum(p.iter().map(|&x| xlogx(x))),
            Rows::Sparse(rows) => -compensated_sum(
                rows.iter()
                    .zip(&self.stationary)
                    .map(|(row, &pi)| pi * compensated_sum(row.iter().map(|x| xlogx(x.1)))),
            ),
        }
    }

    /// `∫ f dμ` for `f` constant on alphabet symbols.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        compensated_sum(self.stationary.iter().zip(f).map(|(p, x)| p * x))
    }
}

/// The Markov Gibbs measure of a block potential:
/// `π = left ⊙ right`, `Q(a,b) = [a→b] e^{Φ(a)} right(b) / (λ right(a))`.
pub fn gibbs_measure(phi: &BlockPotential) -> Result<(MarkovMeasure, PerronData)> {
    let perron = transfer_perron(phi)?;
    let t = &phi.structure;
    let s = t.len();
    let stationary: Vec<f64> = perron.left.iter().zip(&perron.right).map(|(l, r)| l * r).collect();
    let total = compensated_sum(stationary.iter().copied());
    let stationary: Vec<f64> = stationary.into_iter().map(|x| x / total).collect();
    let rows = if t.is_full() {
        let p = perron.right.clone();
        Rows::Iid(p)
    } else {
        let lambda = perron.log_lambda;
        Rows::Sparse(
            (0..s)
                .map(|a| {
                    let log_scale = phi.sup[a] - lambda - perron.right[a].ln();
                    let mut row: Vec<(usize, f64)> = t
                        .successors(a)
                        .map(|b| (b, (log_scale + perron.right[b].ln()).exp()))
                        .collect();
                    let z = compensated_sum(row.iter().map(|x| x.1));
                    row.iter_mut().for_each(|x| x.1 /= z);
                    row
                })
                .collect(),
        )
    };
    let measure = MarkovMeasure::new(t.symbols().clone(), stationary, rows, phi.q)?;
    Ok((measure, perron))
}

/// Bowen–Gibbs constant verified on all cylinders up to a length.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsCertificate {
    pub c: f64,
    /// Pressure per alphabet symbol used in the ratios.
    pub pressure: f64,
    pub n_checked: usize,
    /// Running constant after each length `1..=n_checked`.
    pub c_by_length: Vec<f64>,
    /// Cylinder attaining `c`.
    pub attaining: Vec<usize>,
    /// Whether `c` comes from the upper ratio (`μ[ω]` too large).
    pub attained_above: bool,
}

/// `c = max over cylinders ω with |ω| ≤ n_max of max(ratio, 1/ratio)`, where
/// `ratio = μ[ω] / exp(−Pn + S_nΦ)` uses the cylinder inf of `S_nΦ` for the
/// upper ratio and the sup for the lower one. Computed exactly by a
/// max-plus recursion over paths.
pub fn gibbs_certificate(
    mu: &MarkovMeasure,
    phi: &BlockPotential,
    pressure: f64,
    n_max: usize,
) -> Result<GibbsCertificate> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let s = mu.len();
    if phi.len() != s {
        return Err(Error::invalid("measure and potential alphabets differ"));
    }
    let t = &phi.structure;
    let neg = f64::NEG_INFINITY;
    let ln = |x: f64| if x > 0.0 { x.ln() } else { neg };
    // hi[b]: max over length-k words ending at b of the log upper ratio;
    // lo[b]: min of the log lower ratio.
    let mut hi: Vec<f64> = (0..s).map(|a| ln(mu.stationary()[a]) - phi.inf[a] + pressure).collect();
    let mut lo: Vec<f64> = (0..s).map(|a| ln(mu.stationary()[a]) - phi.sup[a] + pressure).collect();
    let mut back_hi: Vec<Vec<usize>> = Vec::with_capacity(n_max);
    let mut back_lo: Vec<Vec<usize>> = Vec::with_capacity(n_max);
    let mut best = f64::NEG_INFINITY;
    let mut best_at = (1usize, 0usize, true);
    let mut c_by_length = Vec::with_capacity(n_max);
    let update = |hi: &[f64], lo: &[f64], k: usize, best: &mut f64, at: &mut (usize, usize, bool)| {
        for b in 0..s {
            if hi[b] > *best {
                *best = hi[b];
                *at = (k, b, true);
            }
            if lo[b] > neg && -lo[b] > *best {
                *best = -lo[b];
                *at = (k, b, false);
            }
        }
    };
    update(&hi, &lo, 1, &mut best, &mut best_at);
    c_by_length.push(best.exp());
    for k in 2..=n_max {
        let mut nh = vec![neg; s];
        let mut nl = vec![f64::INFINITY; s];
        let mut bh = vec![usize::MAX; s];
        let mut bl = vec![usize::MAX; s];
        if let Rows::Iid(p) = mu.rows() {
            if t.is_full() {
                let (ah, mh) = argmax(&hi);
                let (al, ml) = argmin_finite(&lo);
                for b in 0..s {
                    let lq = ln(p[b]);
                    if lq > neg {
                        nh[b] = mh + lq - phi.inf[b] + pressure;
                        bh[b] = ah;
                        nl[b] = ml + lq - phi.sup[b] + pressure;
                        bl[b] = al;
                    }
                }
            }
        }
        if bh.iter().all(|&x| x == usize::MAX) {
            for a in 0..s {
                if hi[a] == neg {
                    continue;
                }
                for (b, q) in mu.row(a) {
                    if !t.allowed(a, b) {
                        continue;
                    }
                    let lq = q.ln();
                    let vh = hi[a] + lq - phi.inf[b] + pressure;
                    if vh > nh[b] {
                        nh[b] = vh;
                        bh[b] = a;
                    }
                    let vl = lo[a] + lq - phi.sup[b] + pressure;
                    if vl < nl[b] {
                        nl[b] = vl;
                        bl[b] = a;
                    }
                }
            }
        }
        for x in nl.iter_mut() {
            if *x == f64::INFINITY {
                *x = neg;
            }
        }
        hi = nh;
        lo = nl;
        back_hi.push(bh);
        back_lo.push(bl);
        update(&hi, &lo, k, &mut best, &mut best_at);
        c_by_length.push(best.exp());
    }
    let (len, end, above) = best_at;
    let mut word = vec![end];
    let back = if above { &back_hi } else { &back_lo };
    let mut cur = end;
    for k in (2..=len).rev() {
        cur = back[k - 2][cur];
        word.push(cur);
    }
    word.reverse();
    Ok(GibbsCertificate {
        c: best.exp().max(1.0),
        pressure,
        n_checked: n_max,
        c_by_length: c_by_length.into_iter().map(|c| c.max(1.0)).collect(),
        attaining: word,
        attained_above: above,
    })
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |m, (i, x)| if x > m.1 { (i, x) } else { m })
}

fn argmin_finite(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .filter(|x| x.1 > f64::NEG_INFINITY)
        .fold((0, f64::INFINITY), |m, (i, x)| if x < m.1 { (i, x) } else { m })
}

/// Entropy, integral and free energy of a measure, per original symbol.
#[derive(Debug, Clone, Serialize)]
pub struct Functionals {
    pub h: f64,
    /// `∫φ dμ` from the block values `Φ` (cylinder sups).
    pub integral: f64,
    pub integral_lower: f64,
    pub integral_upper: f64,
    /// `F = −P + h + ∫φ dμ`.
    pub free_energy: f64,
}

/// `h(μ)/q`, `∫Φ dμ / q` with inf/sup bracket, and `F = −P + h + ∫φ`.
pub fn measure_functionals(mu: &MarkovMeasure, phi: &BlockPotential, pressure: f64) -> Result<Functionals> {
    if mu.len() != phi.len() {
        return Err(Error::invalid("measure and potential alphabets differ"));
    }
    let q = phi.q as f64;
    let h = mu.entropy_per_block() / q;
    let upper = mu.expectation(&phi.sup) / q;
    let lower = mu.expectation(&phi.inf) / q;
    Ok(Functionals {
        h,
        integral: upper,
        integral_lower: lower,
        integral_upper: upper,
        free_energy: -pressure + h + upper,
    })
}

/// Output of [`project_truncate`].
#[derive(Debug, Clone)]
pub struct Truncation {
    /// Markov measure with the two-step marginals of the collapsed chain.
    pub measure: MarkovMeasure,
    pub c_p: f64,
    pub k_p: f64,
    pub defect_bound: f64,
    pub k_delta: f64,
    pub beta0: f64,
}

/// Collapses symbols `> p` onto `p`.
///
/// `c_p = Σ_{k>p} μ[k]`, `K_p = −Σ_{k>p} φ(k) μ[k]`,
/// `defect = −(1−c_p)ln(1−c_p) − c_p ln c_p + (β_∞+δ) K_p`, and
/// `K(δ) = P(β₀φ)/(β₀ − β_∞ − δ)` with `β₀ = β_∞ + δ/2`.
pub fn project_truncate(
    mu: &MarkovMeasure,
    p: usize,
    phi: &[f64],
    delta: f64,
    beta_inf: f64,
    pressure_at: &dyn Fn(f64) -> Result<f64>,
) -> Result<Truncation> {
    let s = mu.len();
    if phi.len() != s {
        return Err(Error::invalid("potential must have one value per symbol"));
    }
    if p == 0 || p >= s {
        return Err(Error::invalid(format!("p must lie in 1..{s}")));
    }
    if !(delta > 0.0) || delta >= 1.0 - beta_inf {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1 − β_∞) = (0, {})",
            1.0 - beta_inf
        )));
    }
    let map: Vec<usize> = (0..s).map(|a| a.min(p)).collect();
    let measure = aggregate(mu, &map, p + 1)?;
    let c_p = compensated_sum(mu.stationary()[p + 1..].iter().copied());
    let k_p = -compensated_sum((p + 1..s).map(|k| phi[k] * mu.stationary()[k]));
    let defect_bound = -xlogx(1.0 - c_p) - xlogx(c_p) + (beta_inf + delta) * k_p;
    let beta0 = beta_inf + delta / 2.0;
    let k_delta = pressure_at(beta0)? / (beta0 - beta_inf - delta);
    Ok(Truncation {
        measure,
        c_p,
        k_p,
        defect_bound,
        k_delta,
        beta0,
    })
}

/// Markov measure with the stationary two-step marginals of the factor `map`.
pub fn aggregate(mu: &MarkovMeasure, map: &[usize], size: usize) -> Result<MarkovMeasure> {
    let mut pi = vec![NeumaierSum::new(); size];
    let mut joint = vec![vec![NeumaierSum::new(); size]; size];
    for a in 0..mu.len() {
        let pa = mu.stationary()[a];
        pi[map[a]].add(pa);
        for (b, q) in mu.row(a) {
            joint[map[a]][map[b]].add(pa * q);
        }
    }
    let pi: Vec<f64> = pi.iter().map(NeumaierSum::value).collect();
    let rows = joint
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let vals: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .map(|(j, x)| (j, x.value()))
                .filter(|x| x.1 > 0.0)
                .collect();
            let z = compensated_sum(vals.iter().map(|x| x.1));
            if z > 0.0 {
                vals.into_iter().map(|(j, x)| (j, x / z)).collect()
            } else {
                vec![(i, 1.0)]
            }
        })
        .collect();
    MarkovMeasure::new(SymbolSet::indexed(size)?, pi, Rows::Sparse(rows), mu.block_length())
}

/// Bounds `H(Y_d | Y_{d−1..1}, X_1) ≤ h(Y) ≤ H(Y_d | Y_{d−1..1})` on the
/// entropy of the factor process `Y = map(X)` of a Markov chain `X`.
pub fn factor_entropy_bounds(mu: &MarkovMeasure, map: &[usize], size: usize, depth: usize) -> (f64, f64) {
    let s = mu.len();
    let depth = depth.max(1);
    // h_y[k] = H(Y_1..Y_k), h_xy[k] = H(X_1, Y_1..Y_k).
    let mut h_y = vec![NeumaierSum::new(); depth + 1];
    let mut h_xy = vec![NeumaierSum::new(); depth + 1];
    let rows: Vec<Vec<(usize, f64)>> = (0..s).map(|a| mu.row(a)).collect();
    // alpha[x1 * s + x] = P(X_1 = x1, Y_1..Y_k = y, X_k = x)
    fn rec(
        k: usize,
        depth: usize,
        s: usize,
        size: usize,
        map: &[usize],
        rows: &[Vec<(usize, f64)>],
        alpha: &[f64],
        h_y: &mut [NeumaierSum],
        h_xy: &mut [NeumaierSum],
    ) {
        let py: f64 = alpha.iter().sum();
        if py <= 0.0 {
            return;
        }
        h_y[k].add(-xlogx(py));
        for x1 in 0..s {
            let v: f64 = alpha[x1 * s..(x1 + 1) * s].iter().sum();
            h_xy[k].add(-xlogx(v));
        }
        if k == depth {
            return;
        }
        for y in 0..size {
            let mut next = vec![0.0; s * s];
            let mut any = false;
            for x1 in 0..s {
                for x in 0..s {
                    let a = alpha[x1 * s + x];
                    if a == 0.0 {
                        continue;
                    }
                    for &(b, q) in &rows[x] {
                        if map[b] == y {
                            next[x1 * s + b] += a * q;
                            any = true;
                        }
                    }
                }
            }
            if any {
                rec(k + 1, depth, s, size, map, rows, &next, h_y, h_xy);
            }
        }
    }
    for y in 0..size {
        let mut alpha = vec![0.0; s * s];
        for x in 0..s {
            if map[x] == y {
                alpha[x * s + x] = mu.stationary()[x];
            }
        }
        rec(1, depth, s, size, map, &rows, &alpha, &mut h_y, &mut h_xy);
    }
    let hy: Vec<f64> = h_y.iter().map(NeumaierSum::value).collect();
    let hxy: Vec<f64> = h_xy.iter().map(NeumaierSum::value).collect();
    let upper = hy[depth] - if depth > 1 { hy[depth - 1] } else { 0.0 };
    let lower = if depth > 1 {
        hxy[depth] - hxy[depth - 1]
    } else {
        // H(Y_1 | X_1) = 0.
        0.0
    };
    (lower, upper)
}

/// Full-shift Markov measure with i.i.d. uniform row weights, normalised.
pub fn random_markov_measure<R: rand::Rng>(size: usize, rng: &mut R) -> Result<MarkovMeasure> {
    let rows = (0..size)
        .map(|_| {
            let w: Vec<f64> = (0..size).map(|_| rng.random::<f64>() + 1e-3).collect();
            let z = compensated_sum(w.iter().copied());
            w.into_iter().map(|x| x / z).enumerate().collect()
        })
        .collect();
    MarkovMeasure::from_rows(SymbolSet::indexed(size)?, rows, 1)
}

/// One check of `h(μ) − h(μ|_p) ≤ defect_bound`.
#[derive(Debug, Clone, Serialize)]
pub struct DefectTrial {
    pub h: f64,
    /// Bracket on the entropy of the collapsed process.
    pub h_collapsed_lower: f64,
    pub h_collapsed_upper: f64,
    /// Entropy of the two-step Markov approximation of the collapsed process.
    pub h_markov: f64,
    pub c_p: f64,
    pub k_p: f64,
    pub defect_bound: f64,
    pub k_delta: f64,
    /// `h − h_collapsed_lower > defect_bound`: conservative, never misses a violation.
    pub violated: bool,
}

/// Entropy-defect check for a potential constant on 1-cylinders.
pub fn entropy_defect_trial(
    mu: &MarkovMeasure,
    p: usize,
    phi: &[f64],
    delta: f64,
    beta_inf: f64,
    pressure_at: &dyn Fn(f64) -> Result<f64>,
    depth: usize,
) -> Result<DefectTrial> {
    let tr = project_truncate(mu, p, phi, delta, beta_inf, pressure_at)?;
    let map: Vec<usize> = (0..mu.len()).map(|a| a.min(p)).collect();
    let (lower, upper) = factor_entropy_bounds(mu, &map, p + 1, depth);
    let h = mu.entropy_per_block();
    Ok(DefectTrial {
        h,
        h_collapsed_lower: lower,
        h_collapsed_upper: upper,
        h_markov: tr.measure.entropy_per_block(),
        c_p: tr.c_p,
        k_p: tr.k_p,
        defect_bound: tr.defect_bound,
        k_delta: tr.k_delta,
        violated: h - lower > tr.defect_bound,
    })
}

/// Sampled convex curve `θ ↦ P(φ_θ)`.
#[derive(Debug, Clone, Serialize)]
pub struct PressureCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `value(p) − value(p/2)` at each grid point.
    pub truncation_delta: Vec<f64>,
    /// `P(φ)` at parameter 0 on the same truncation.
    pub base: f64,
}

impl PressureCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, truncation_delta: Vec<f64>, base: f64) -> Result<Self> {
        if grid.len() != values.len() || grid.len() != truncation_delta.len() {
            return Err(Error::invalid("curve arrays differ in length"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        Ok(Self {
            grid,
            values,
            truncation_delta,
            base,
        })
    }

    /// Fails with the first index whose divided second difference is below `−tol`.
    pub fn check_convex(&self, tol: f64) -> Result<()> {
        for i in 1..self.grid.len().saturating_sub(1) {
            let (x0, x1, x2) = (self.grid[i - 1], self.grid[i], self.grid[i + 1]);
            let s1 = (self.values[i] - self.values[i - 1]) / (x1 - x0);
            let s2 = (self.values[i + 1] - self.values[i]) / (x2 - x1);
            let second = s2 - s1;
            if second < -tol {
                return Err(Error::NotConvex {
                    index: i,
                    second_difference: second,
                });
            }
        }
        Ok(())
    }
}

/// `log Σ exp` helper for weight vectors kept in log space.
pub fn log_total(logs: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &x in logs {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{induce_block_potential, LocallyConstant};

    fn full(n: usize) -> TransitionStructure {
        TransitionStructure::full(SymbolSet::indexed(n).unwrap())
    }

    fn golden() -> f64 {
        (1.0 + 5f64.sqrt()) / 2.0
    }

    #[test]
    fn perron_of_simple_matrices() {
        let b = BlockPotential::from_values(&[0.0, 0.0], full(2));
        let d = transfer_perron(&b).unwrap();
        assert!((d.log_lambda - 2f64.ln()).abs() < 1e-14);
        assert!((d.right[0] - d.right[1]).abs() < 1e-15);

        let p: [f64; 3] = [0.2, 0.3, 0.5];
        let b = BlockPotential::from_values(&p.map(f64::ln), full(3));
        assert!(transfer_perron(&b).unwrap().log_lambda.abs() < 1e-14);

        let b = BlockPotential::from_values(&[0.0, 0.0], TransitionStructure::golden_mean());
        assert!((transfer_perron(&b).unwrap().log_lambda - golden().ln()).abs() < 1e-12);
    }

    #[test]
    fn non_primitive_is_rejected() {
        let t = TransitionStructure::from_successors(SymbolSet::indexed(2).unwrap(), vec![vec![1], vec![0]]).unwrap();
        let b = BlockPotential::from_values(&[0.0, 0.0], t);
        assert!(matches!(transfer_perron(&b), Err(Error::NotPrimitive { .. })));
    }

    #[test]
    fn parry_measure() {
        let b = BlockPotential::from_values(&[0.0, 0.0], TransitionStructure::golden_mean());
        let (mu, _) = gibbs_measure(&b).unwrap();
        let g = 1.0 + 5f64.sqrt();
        let expected = g * g / (g * g + 4.0);
        assert!((mu.stationary()[0] - expected).abs() < 1e-12);
        assert!((mu.transition(0, 0) - 1.0 / golden()).abs() < 1e-12);
        assert_eq!(mu.transition(1, 1), 0.0);
    }

    #[test]
    fn bernoulli_certificate_is_exact() {
        let p: [f64; 3] = [0.2, 0.3, 0.5];
        let b = BlockPotential::from_values(&p.map(f64::ln), full(3));
        let (mu, perron) = gibbs_measure(&b).unwrap();
        let cert = gibbs_certificate(&mu, &b, perron.log_lambda, 6).unwrap();
        assert!((cert.c - 1.0).abs() < 1e-12);
        for (a, &x) in mu.stationary().iter().enumerate() {
            assert!((x - p[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn certificate_matches_brute_force() {
        let phi = LocallyConstant::new(vec![0.3, -0.5, 0.1], None).unwrap();
        let t = TransitionStructure::from_dense(
            SymbolSet::indexed(3).unwrap(),
            &[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]],
        )
        .unwrap();
        let b = induce_block_potential(&phi, 1, &t, DEFAULT_CAP).unwrap();
        let (mu, perron) = gibbs_measure(&b).unwrap();
        let cert = gibbs_certificate(&mu, &b, perron.log_lambda, 5).unwrap();
        let mut brute: f64 = 1.0;
        for n in 1..=5 {
            crate::shift::for_each_admissible(&t, n, DEFAULT_CAP, |w| {
                let s: f64 = w.iter().map(|&a| b.sup[a]).sum();
                let r = mu.cylinder_mass(w) / (-perron.log_lambda * n as f64 + s).exp();
                brute = brute.max(r).max(1.0 / r);
            })
            .unwrap();
        }
        assert!((cert.c - brute).abs() < 1e-12 * brute);
        let w = &cert.attaining;
        let s: f64 = w.iter().map(|&a| b.sup[a]).sum();
        let r = mu.cylinder_mass(w) / (-perron.log_lambda * w.len() as f64 + s).exp();
        assert!((r.max(1.0 / r) - cert.c).abs() < 1e-12 * cert.c);
    }

    #[test]
    fn functionals_of_fair_coin() {
        let b = BlockPotential::from_values(&[0.5f64.ln(), 0.5f64.ln()], full(2));
        let mu = MarkovMeasure::bernoulli(vec![0.5, 0.5]).unwrap();
        let f = measure_functionals(&mu, &b, 0.0).unwrap();
        assert!((f.h - 2f64.ln()).abs() < 1e-15);
        assert!((f.integral + 2f64.ln()).abs() < 1e-15);
        assert!(f.free_energy.abs() < 1e-15);
    }

    #[test]
    fn dirac_functionals() {
        let mu = MarkovMeasure::new(
            SymbolSet::indexed(2).unwrap(),
            vec![1.0, 0.0],
            Rows::Sparse(vec![vec![(0, 1.0)], vec![(0, 1.0)]]),
            1,
        )
        .unwrap();
        let b = BlockPotential::from_values(&[-0.7, 0.2], full(2));
        let f = measure_functionals(&mu, &b, 0.3).unwrap();
        assert_eq!(f.h, 0.0);
        assert!((f.integral + 0.7).abs() < 1e-15);
        assert!((f.free_energy + 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_of_supported_measure_is_trivial() {
        let mu = MarkovMeasure::from_rows(
            SymbolSet::indexed(4).unwrap(),
            vec![
                vec![(0, 0.5), (1, 0.5)],
                vec![(0, 0.3), (1, 0.7)],
                vec![(0, 1.0)],
                vec![(1, 1.0)],
            ],
            1,
        )
        .unwrap();
        let phi = [-1.0, -2.0, -3.0, -4.0];
        let tr = project_truncate(&mu, 2, &phi, 0.2, 0.5, &|_| Ok(0.1)).unwrap();
        assert!(tr.c_p.abs() < 1e-15);
        assert_eq!(tr.k_p, 0.0);
        assert_eq!(tr.defect_bound, 0.0);
        let (lo, hi) = factor_entropy_bounds(&mu, &[0, 1, 2, 2], 3, 4);
        assert!((mu.entropy_per_block() - lo).abs() < 1e-12);
        assert!((mu.entropy_per_block() - hi).abs() < 1e-12);
        assert!(project_truncate(&mu, 2, &phi, 0.5, 0.5, &|_| Ok(0.1)).is_err());
    }

    #[test]
    fn convexity_check() {
        let c = PressureCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5], vec![0.0; 3], 0.0).unwrap();
        assert!(matches!(c.check_convex(1e-8), Err(Error::NotConvex { index: 1, .. })));
        let c = PressureCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 0.0], vec![0.0; 3], 0.0).unwrap();
        assert!(c.check_convex(1e-8).is_ok());
    }
}
