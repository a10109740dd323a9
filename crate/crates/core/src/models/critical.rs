//! Bernoulli measure with `p_k ∝ 1/(k (ln k)²)`, whose entropy and
//! `∫ ln p dμ` are infinite on the full alphabet.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{xlogx, NeumaierSum};
use crate::potential::{beta_infinity_of, LocallyConstant, TailDescriptor};
use crate::shift::{SymbolSet, TransitionStructure};

use super::{Model, System, SystemKind};

#[derive(Debug, Clone)]
pub struct CriticalBernoulli {
    pub cutoff: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalDiagnostic {
    pub cutoff: usize,
    /// `|Σ p_k − 1|` after renormalisation.
    pub normalization_error: f64,
    /// `(K, −Σ_{k ≤ K} p_k ln p_k)` with `p` renormalised on `2..=K`.
    pub entropy_partial_sums: Vec<(usize, f64)>,
    pub increasing: bool,
    pub beta_infinity: f64,
}

fn weights(cutoff: usize) -> Vec<f64> {
    (2..=cutoff)
        .map(|k| {
            let k = k as f64;
            1.0 / (k * k.ln() * k.ln())
        })
        .collect()
}

/// Probabilities on `2..=cutoff`.
pub fn critical_probabilities(cutoff: usize) -> Result<Vec<f64>> {
    if cutoff < 3 {
        return Err(Error::invalid("cutoff must be at least 3"));
    }
    let w = weights(cutoff);
    let mut z = NeumaierSum::new();
    z.extend(w.iter().copied());
    let z = z.value();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// `−Σ p_k ln p_k` for the measure renormalised on `2..=cutoff`.
pub fn critical_entropy(cutoff: usize) -> Result<f64> {
    let p = critical_probabilities(cutoff)?;
    let mut h = NeumaierSum::new();
    for x in p {
        h.add(-xlogx(x));
    }
    Ok(h.value())
}

/// The potential `φ(k) = ln p_k` on `2..=cutoff` and the divergence
/// diagnostic at the cutoffs `10³, 10⁴, …` up to `cutoff`.
pub fn critical_bernoulli(cutoff: usize) -> Result<(LocallyConstant, CriticalDiagnostic)> {
    let p = critical_probabilities(cutoff)?;
    let mut total = NeumaierSum::new();
    total.extend(p.iter().copied());
    let normalization_error = (total.value() - 1.0).abs();
    let tail = tail_descriptor(cutoff);
    let phi = LocallyConstant::new(p.iter().map(|x| x.ln()).collect(), Some(tail.clone()))?;
    let mut ks: Vec<usize> = std::iter::successors(Some(10usize), |k| k.checked_mul(10))
        .take_while(|&k| k < cutoff)
        .filter(|&k| k >= 3)
        .collect();
    ks.push(cutoff);
    let sums = ks
        .iter()
        .map(|&k| critical_entropy(k).map(|h| (k, h)))
        .collect::<Result<Vec<_>>>()?;
    let increasing = sums.windows(2).all(|w| w[1].1 > w[0].1);
    Ok((
        phi,
        CriticalDiagnostic {
            cutoff,
            normalization_error,
            entropy_partial_sums: sums,
            increasing,
            beta_infinity: beta_infinity_of(&tail, 1e-6)?,
        },
    ))
}

fn tail_descriptor(cutoff: usize) -> TailDescriptor {
    let w = weights(cutoff);
    let z: f64 = crate::numeric::compensated_sum(w);
    TailDescriptor::Power {
        exponent: 1.0,
        log_exponent: 2.0,
        constant: 1.0 / z,
    }
}

impl Model for CriticalBernoulli {
    fn name(&self) -> &'static str {
        "critical_bernoulli"
    }

    fn default_truncation(&self) -> usize {
        self.cutoff
    }

    fn system(&self, p: usize) -> Result<System> {
        let cutoff = p.max(3);
        let probs = critical_probabilities(cutoff)?;
        let labels = (2..=cutoff).map(|k| k.to_string()).collect();
        let phi = LocallyConstant::new(probs.iter().map(|x| x.ln()).collect(), Some(tail_descriptor(cutoff)))?;
        Ok(System {
            structure: TransitionStructure::full(SymbolSet::new(labels)?),
            potential: Arc::new(phi),
            kind: SystemKind::Generic,
            truncation: cutoff,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalised_and_divergent() {
        let (phi, d) = critical_bernoulli(10_000).unwrap();
        assert!(d.normalization_error < 1e-14);
        assert!(d.increasing);
        assert!((d.beta_infinity - 1.0).abs() < 1e-5);
        let z: f64 = phi.values().iter().map(|v| v.exp()).sum();
        assert!((z - 1.0).abs() < 1e-12);
    }
}
