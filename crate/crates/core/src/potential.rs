//! Potentials given by cylinder bounds on Birkhoff sums, their analytic tail
//! models, partition sums, the summability exponent and block inductions.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::LogSumExp;
use crate::shift::{admissible_words, for_each_admissible, SymbolSet, TransitionStructure, Word};

/// A potential with summable variations on a truncated shift.
///
/// Symbol indices refer to the truncation the potential was built for.
pub trait Potential: Debug + Send + Sync {
    /// `(inf, sup)` of `S_nφ` over the cylinder `[word]`, `n = word.len()`.
    fn birkhoff_bounds(&self, word: &[usize]) -> (f64, f64);

    /// `(inf, sup)` of `φ` itself over `[word]`.
    fn value_bounds(&self, word: &[usize]) -> (f64, f64);

    fn tail(&self) -> Option<&TailDescriptor>;

    /// Per-symbol values when `φ` is constant on 1-cylinders.
    fn symbol_values(&self) -> Option<&[f64]> {
        None
    }

    /// Exact `S_nφ` at the periodic point whose period word is `word`,
    /// when the model can evaluate it.
    fn periodic_sum(&self, word: &[usize]) -> Option<f64> {
        self.symbol_values()
            .map(|v| crate::numeric::compensated_sum(word.iter().map(|&a| v[a])))
    }
}

/// Analytic description of the truncated-away part of `Z_1(βφ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailDescriptor {
    /// Nothing is truncated away.
    Finite,
    /// `e^{φ(k)} ≤ constant · k^{-exponent} (ln k)^{-log_exponent}` for the
    /// k-th symbol.
    Power {
        exponent: f64,
        #[serde(default)]
        log_exponent: f64,
        #[serde(default = "one")]
        constant: f64,
    },
    /// `multiplicity` symbols at level `n` with `e^{φ} = ratio^n`.
    Geometric {
        ratio: f64,
        #[serde(default = "one")]
        multiplicity: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl TailDescriptor {
    /// Whether `Z_1(βφ)` is finite.
    pub fn converges(&self, beta: f64) -> bool {
        match *self {
            TailDescriptor::Finite => true,
            TailDescriptor::Power {
                exponent, log_exponent, ..
            } => {
                let e = beta * exponent;
                let l = beta * log_exponent;
                e > 1.0 || (e == 1.0 && l > 1.0)
            }
            TailDescriptor::Geometric { ratio, .. } => beta > 0.0 && ratio < 1.0,
        }
    }

    /// Upper bound on `Σ_{k > cutoff} e^{βφ(k)}`; infinite when divergent.
    /// For geometric tails `cutoff` is the last retained level.
    pub fn tail_bound(&self, beta: f64, cutoff: usize) -> f64 {
        if !self.converges(beta) {
            return f64::INFINITY;
        }
        let k = cutoff.max(2) as f64;
        match *self {
            TailDescriptor::Finite => 0.0,
            TailDescriptor::Power {
                exponent,
                log_exponent,
                constant,
            } => {
                let e = beta * exponent;
                let l = beta * log_exponent;
                let c = constant.powf(beta);
                let log_factor = if l >= 0.0 { k.ln().powf(-l) } else { 1.0 };
                if e > 1.0 {
                    c * log_factor * k.powf(1.0 - e) / (e - 1.0)
                } else {
                    c * k.ln().powf(1.0 - l) / (l - 1.0)
                }
            }
            TailDescriptor::Geometric { ratio, multiplicity } => {
                let r = ratio.powf(beta);
                multiplicity * r.powi(cutoff as i32 + 1) / (1.0 - r)
            }
        }
    }

    /// Descriptor of `cφ` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        match *self {
            TailDescriptor::Finite => TailDescriptor::Finite,
            TailDescriptor::Power {
                exponent,
                log_exponent,
                constant,
            } => TailDescriptor::Power {
                exponent: c * exponent,
                log_exponent: c * log_exponent,
                constant: constant.powf(c),
            },
            TailDescriptor::Geometric { ratio, multiplicity } => TailDescriptor::Geometric {
                ratio: ratio.powf(c),
                multiplicity,
            },
        }
    }
}

/// Potential constant on 1-cylinders.
#[derive(Debug, Clone)]
pub struct LocallyConstant {
    values: Vec<f64>,
    tail: Option<TailDescriptor>,
}

impl LocallyConstant {
    pub fn new(values: Vec<f64>, tail: Option<TailDescriptor>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential values must be finite and nonempty"));
        }
        Ok(Self { values, tail })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Potential for LocallyConstant {
    fn birkhoff_bounds(&self, word: &[usize]) -> (f64, f64) {
        let s = crate::numeric::compensated_sum(word.iter().map(|&a| self.values[a]));
        (s, s)
    }

    fn value_bounds(&self, word: &[usize]) -> (f64, f64) {
        let v = self.values[word[0]];
        (v, v)
    }

    fn tail(&self) -> Option<&TailDescriptor> {
        self.tail.as_ref()
    }

    fn symbol_values(&self) -> Option<&[f64]> {
        Some(&self.values)
    }
}

/// `βφ` for a real `β`; bounds swap when `β < 0`.
#[derive(Debug, Clone)]
pub struct Scaled {
    inner: Arc<dyn Potential>,
    beta: f64,
    tail: Option<TailDescriptor>,
    values: Option<Vec<f64>>,
}

impl Scaled {
    pub fn new(inner: Arc<dyn Potential>, beta: f64) -> Self {
        let tail = if beta > 0.0 {
            inner.tail().map(|t| t.scaled(beta))
        } else {
            None
        };
        let values = inner.symbol_values().map(|v| v.iter().map(|x| beta * x).collect());
        Self {
            inner,
            beta,
            tail,
            values,
        }
    }

    fn scale(&self, (lo, hi): (f64, f64)) -> (f64, f64) {
        if self.beta == 0.0 {
            (0.0, 0.0)
        } else if self.beta > 0.0 {
            (self.beta * lo, self.beta * hi)
        } else {
            (self.beta * hi, self.beta * lo)
        }
    }
}

impl Potential for Scaled {
    fn birkhoff_bounds(&self, word: &[usize]) -> (f64, f64) {
        self.scale(self.inner.birkhoff_bounds(word))
    }

    fn value_bounds(&self, word: &[usize]) -> (f64, f64) {
        self.scale(self.inner.value_bounds(word))
    }

    fn tail(&self) -> Option<&TailDescriptor> {
        self.tail.as_ref()
    }

    fn symbol_values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    fn periodic_sum(&self, word: &[usize]) -> Option<f64> {
        if self.beta == 0.0 {
            return Some(0.0);
        }
        self.inner.periodic_sum(word).map(|s| self.beta * s)
    }
}

/// `φ + tψ` for an observable `ψ` constant on 1-cylinders.
#[derive(Debug, Clone)]
pub struct Tilted {
    inner: Arc<dyn Potential>,
    psi: Vec<f64>,
    t: f64,
    values: Option<Vec<f64>>,
}

impl Tilted {
    pub fn new(inner: Arc<dyn Potential>, psi: Vec<f64>, t: f64) -> Self {
        let values = inner
            .symbol_values()
            .map(|v| v.iter().zip(&psi).map(|(x, y)| x + t * y).collect());
        Self { inner, psi, t, values }
    }

    fn shift(&self, word: &[usize]) -> f64 {
        self.t * crate::numeric::compensated_sum(word.iter().map(|&a| self.psi[a]))
    }
}

impl Potential for Tilted {
    fn birkhoff_bounds(&self, word: &[usize]) -> (f64, f64) {
        let (lo, hi) = self.inner.birkhoff_bounds(word);
        let s = self.shift(word);
        (lo + s, hi + s)
    }

    fn value_bounds(&self, word: &[usize]) -> (f64, f64) {
        let (lo, hi) = self.inner.value_bounds(word);
        let s = self.t * self.psi[word[0]];
        (lo + s, hi + s)
    }

    // A bounded perturbation leaves the tail exponent unchanged.
    fn tail(&self) -> Option<&TailDescriptor> {
        self.inner.tail()
    }

    fn symbol_values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    fn periodic_sum(&self, word: &[usize]) -> Option<f64> {
        self.inner.periodic_sum(word).map(|s| s + self.shift(word))
    }
}

/// Locally constant induction of `φ` on non-overlapping `q`-blocks.
#[derive(Debug, Clone)]
pub struct BlockPotential {
    pub q: usize,
    /// Retained `q`-words in lexicographic order; block symbol `i` is `words[i]`.
    pub words: Vec<Word>,
    /// `Φ(ω)`: sup of `S_qφ` over `[ω]`.
    pub sup: Vec<f64>,
    /// inf of `S_qφ` over `[ω]`.
    pub inf: Vec<f64>,
    /// `D_q`: the largest `sup − inf` over retained blocks.
    pub oscillation: f64,
    /// Transitions between blocks by admissible concatenation.
    pub structure: TransitionStructure,
}

impl BlockPotential {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Block potential of a potential constant on 1-cylinders, without enumeration.
    pub fn from_values(values: &[f64], structure: TransitionStructure) -> Self {
        Self {
            q: 1,
            words: (0..values.len()).map(|a| Word::new(vec![a])).collect(),
            sup: values.to_vec(),
            inf: values.to_vec(),
            oscillation: 0.0,
            structure,
        }
    }
}

/// `V_n = Σ_{m ≤ n} var_m(φ)` with `var_m` the largest oscillation of `φ`
/// over retained `m`-cylinders.
pub fn variation_partial_sums(
    phi: &dyn Potential,
    t: &TransitionStructure,
    n_max: usize,
    cap: u64,
) -> Result<Vec<f64>> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let mut out = Vec::with_capacity(n_max);
    let mut total = 0.0;
    for m in 1..=n_max {
        let mut var: f64 = 0.0;
        for_each_admissible(t, m, cap, |w| {
            let (lo, hi) = phi.value_bounds(w);
            var = var.max(hi - lo);
        })?;
        total += var;
        out.push(total);
    }
    Ok(out)
}

/// `log Z_n(βφ)` over the truncation, from `sup_{[ω]} βS_nφ`.
pub fn log_partition_sum(phi: &dyn Potential, beta: f64, n: usize, t: &TransitionStructure, cap: u64) -> Result<f64> {
    let mut acc = LogSumExp::new();
    for_each_admissible(t, n, cap, |w| {
        let (lo, hi) = phi.birkhoff_bounds(w);
        acc.add(if beta >= 0.0 { beta * hi } else { beta * lo });
    })?;
    Ok(acc.value())
}

/// `max(0, inf{β : Z_1(βφ) < ∞})` to within `tol`, by bisection on the tail
/// descriptor's convergence predicate.
pub fn beta_infinity(phi: &dyn Potential, tol: f64) -> Result<f64> {
    let tail = phi.tail().ok_or(Error::MissingTailDescriptor)?;
    beta_infinity_of(tail, tol)
}

pub fn beta_infinity_of(tail: &TailDescriptor, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if tail.converges(0.0) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !tail.converges(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NotSummable { beta: hi });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if tail.converges(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Induces `φ` on non-overlapping `q`-blocks: `Φ(ω) = sup_{[ω]} S_qφ`,
/// `D_q = max_ω (sup − inf)`, block `ω → ω'` allowed iff `ωω'` is admissible.
pub fn induce_block_potential(
    phi: &dyn Potential,
    q: usize,
    t: &TransitionStructure,
    cap: u64,
) -> Result<BlockPotential> {
    if q == 0 {
        return Err(Error::invalid("block length must be at least 1"));
    }
    let words = admissible_words(t, q, cap)?;
    let mut sup = Vec::with_capacity(words.len());
    let mut inf = Vec::with_capacity(words.len());
    let mut osc: f64 = 0.0;
    for w in &words {
        let (lo, hi) = phi.birkhoff_bounds(w.symbols());
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("block potential must be finite"));
        }
        osc = osc.max(hi - lo);
        sup.push(hi);
        inf.push(lo);
    }
    let structure = if q == 1 { t.clone() } else { block_structure(t, &words)? };
    Ok(BlockPotential {
        q,
        words,
        sup,
        inf,
        oscillation: osc,
        structure,
    })
}

fn block_structure(t: &TransitionStructure, words: &[Word]) -> Result<TransitionStructure> {
    let labels = words
        .iter()
        .map(|w| {
            w.symbols()
                .iter()
                .map(|&a| t.symbols().label(a))
                .collect::<Vec<_>>()
                .join(".")
        })
        .collect();
    let symbols = SymbolSet::new(labels)?;
    if t.is_full() {
        return Ok(TransitionStructure::full(symbols));
    }
    // Words are sorted, so blocks sharing a first symbol form a contiguous range.
    let mut range = vec![(0usize, 0usize); t.len()];
    let mut i = 0;
    while i < words.len() {
        let first = words[i].symbols()[0];
        let start = i;
        while i < words.len() && words[i].symbols()[0] == first {
            i += 1;
        }
        range[first] = (start, i);
    }
    let succ = words
        .iter()
        .map(|w| {
            let last = *w.symbols().last().unwrap();
            t.successors(last).flat_map(|b| range[b].0..range[b].1).collect()
        })
        .collect();
    TransitionStructure::from_successors(symbols, succ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::DEFAULT_CAP;

    fn full(n: usize) -> TransitionStructure {
        TransitionStructure::full(SymbolSet::indexed(n).unwrap())
    }

    #[test]
    fn locally_constant_has_no_variation() {
        let phi = LocallyConstant::new(vec![0.3, -1.2, 0.5], None).unwrap();
        let v = variation_partial_sums(&phi, &full(3), 4, DEFAULT_CAP).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn partition_sums_of_simple_shifts() {
        let zero = LocallyConstant::new(vec![0.0, 0.0], None).unwrap();
        for n in 1..6 {
            let z = log_partition_sum(&zero, 1.0, n, &full(2), DEFAULT_CAP).unwrap();
            assert!((z - n as f64 * 2f64.ln()).abs() < 1e-12);
        }
        let p = [0.5, 0.25, 0.125, 0.125];
        let phi = LocallyConstant::new(p.iter().map(|x: &f64| x.ln()).collect(), None).unwrap();
        let z = log_partition_sum(&phi, 1.0, 1, &full(4), DEFAULT_CAP).unwrap();
        assert!(z.abs() < 1e-15);
    }

    #[test]
    fn beta_infinity_from_tails() {
        let power = LocallyConstant::new(
            vec![-2.0 * 2f64.ln()],
            Some(TailDescriptor::Power {
                exponent: 2.0,
                log_exponent: 0.0,
                constant: 1.0,
            }),
        )
        .unwrap();
        let b = beta_infinity(&power, 1e-6).unwrap();
        assert!((b - 0.5).abs() < 1e-6);
        let finite = LocallyConstant::new(vec![0.0], Some(TailDescriptor::Finite)).unwrap();
        assert_eq!(beta_infinity(&finite, 1e-6).unwrap(), 0.0);
        let bare = LocallyConstant::new(vec![0.0], None).unwrap();
        assert!(matches!(beta_infinity(&bare, 1e-6), Err(Error::MissingTailDescriptor)));
    }

    #[test]
    fn blocks_of_locally_constant_potential_are_additive() {
        let phi = LocallyConstant::new(vec![0.1, -0.7], None).unwrap();
        let g = TransitionStructure::golden_mean();
        let b = induce_block_potential(&phi, 3, &g, DEFAULT_CAP).unwrap();
        assert_eq!(b.oscillation, 0.0);
        for (w, &v) in b.words.iter().zip(&b.sup) {
            let direct: f64 = w.symbols().iter().map(|&a| [0.1, -0.7][a]).sum();
            assert!((v - direct).abs() < 1e-15);
        }
        let idx = |s: &[usize]| b.words.iter().position(|w| w.symbols() == s).unwrap();
        assert!(b.structure.allowed(idx(&[0, 1, 0]), idx(&[1, 0, 0])));
        assert!(!b.structure.allowed(idx(&[0, 0, 1]), idx(&[1, 0, 1])));
    }

    #[test]
    fn tail_bound_is_integral_comparison() {
        let t = TailDescriptor::Power {
            exponent: 2.0,
            log_exponent: 0.0,
            constant: 1.0,
        };
        let exact: f64 = (11..2_000_000).map(|k| (k as f64).powi(-2)).sum();
        let bound = t.tail_bound(1.0, 10);
        assert!(bound >= exact && bound < exact * 1.2);
        assert_eq!(t.tail_bound(0.5, 10), f64::INFINITY);
    }
}
