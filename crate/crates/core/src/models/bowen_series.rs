//! Symbolic Bowen–Series induced shift of a free group of rank `r` with one
//! parabolic generator `γ`.
//!
//! Letters are `a`/`A` for `γ`/`γ⁻¹` and `b`/`B`, `c`/`C`, … for the
//! hyperbolic generators. The induced alphabet consists of the reduced words
//! `γ^n g` (`1 ≤ n ≤ N`, `g ∉ {γ, γ⁻¹}`) and `h g` (`h` hyperbolic,
//! `g ≠ h⁻¹`); a transition `ω → ω′` is allowed when `ω′` starts with the
//! last letter of `ω`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::potential::{LocallyConstant, TailDescriptor};
use crate::shift::{SymbolSet, TransitionStructure};

use super::{Model, System, SystemKind};

/// A letter of `G_0`: generator index `0..r` (0 is `γ`) and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub generator: usize,
    pub inverse: bool,
}

impl Letter {
    pub fn inv(self) -> Self {
        Self {
            generator: self.generator,
            inverse: !self.inverse,
        }
    }

    pub fn is_parabolic(self) -> bool {
        self.generator == 0
    }

    pub fn to_char(self) -> char {
        let c = (b'a' + self.generator as u8) as char;
        if self.inverse {
            c.to_ascii_uppercase()
        } else {
            c
        }
    }
}

/// One symbol of the induced alphabet: the block followed by the first
/// letter of the next block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedSymbol {
    pub block: Letter,
    pub block_length: usize,
    pub next: Letter,
}

impl InducedSymbol {
    pub fn label(&self) -> String {
        let mut s: String = std::iter::repeat_n(self.block.to_char(), self.block_length).collect();
        s.push(self.next.to_char());
        s
    }

    pub fn is_cusp(&self) -> bool {
        self.block.is_parabolic()
    }
}

#[derive(Debug, Clone)]
pub struct BowenSeriesModel {
    pub rank: usize,
    pub cusp_cutoff: usize,
}

impl BowenSeriesModel {
    pub fn new(rank: usize, cusp_cutoff: usize) -> Result<Self> {
        if rank < 2 || rank > 13 {
            return Err(Error::Config(format!("rank must lie in 2..=13, got {rank}")));
        }
        if cusp_cutoff == 0 {
            return Err(Error::Config("cusp_cutoff must be at least 1".into()));
        }
        Ok(Self { rank, cusp_cutoff })
    }

    /// `(2r−2)(2r−1) + 2N(2r−2)`.
    pub fn closed_form_count(rank: usize, cutoff: usize) -> usize {
        (2 * rank - 2) * (2 * rank - 1) + 2 * cutoff * (2 * rank - 2)
    }

    fn letters(&self) -> Vec<Letter> {
        (0..self.rank)
            .flat_map(|g| [false, true].map(|inverse| Letter { generator: g, inverse }))
            .collect()
    }

    /// The induced alphabet `F_N`: hyperbolic blocks first, then cusp blocks
    /// by increasing length, letters in generator order within each group.
    pub fn alphabet(&self, cutoff: usize) -> Vec<InducedSymbol> {
        let letters = self.letters();
        let mut out = Vec::new();
        for &h in letters.iter().filter(|l| !l.is_parabolic()) {
            for &g in letters.iter().filter(|&&g| g != h.inv()) {
                out.push(InducedSymbol {
                    block: h,
                    block_length: 1,
                    next: g,
                });
            }
        }
        for n in 1..=cutoff {
            for &c in letters.iter().filter(|l| l.is_parabolic()) {
                for &g in letters.iter().filter(|l| !l.is_parabolic()) {
                    out.push(InducedSymbol {
                        block: c,
                        block_length: n,
                        next: g,
                    });
                }
            }
        }
        out
    }
}

/// Alphabet `F_N`, its transitions and the potential `−|B_1|`.
pub fn bowen_series_alphabet(
    rank: usize,
    cutoff: usize,
) -> Result<(Vec<InducedSymbol>, TransitionStructure, LocallyConstant)> {
    let model = BowenSeriesModel::new(rank, cutoff)?;
    let alphabet = model.alphabet(cutoff);
    let labels = alphabet.iter().map(InducedSymbol::label).collect();
    let succ = alphabet
        .iter()
        .map(|w| {
            alphabet
                .iter()
                .enumerate()
                .filter(|(_, v)| v.block == w.next)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let structure = TransitionStructure::from_successors(SymbolSet::new(labels)?, succ)?;
    let values = alphabet.iter().map(|w| -(w.block_length as f64)).collect();
    let tail = TailDescriptor::Geometric {
        ratio: (-1.0f64).exp(),
        multiplicity: (2 * (2 * rank - 2)) as f64,
    };
    let potential = LocallyConstant::new(values, Some(tail))?;
    Ok((alphabet, structure, potential))
}

impl Model for BowenSeriesModel {
    fn name(&self) -> &'static str {
        "bowen_series"
    }

    fn default_truncation(&self) -> usize {
        self.cusp_cutoff
    }

    fn system(&self, p: usize) -> Result<System> {
        let (alphabet, structure, potential) = bowen_series_alphabet(self.rank, p.max(1))?;
        Ok(System {
            structure,
            potential: Arc::new(potential),
            kind: SystemKind::BowenSeries {
                cusp: alphabet.iter().map(InducedSymbol::is_cusp).collect(),
            },
            truncation: p.max(1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::is_primitive;

    #[test]
    fn alphabet_counts() {
        for (r, n) in [(2, 3), (3, 5), (2, 1), (4, 2)] {
            let (a, t, _) = bowen_series_alphabet(r, n).unwrap();
            assert_eq!(a.len(), BowenSeriesModel::closed_form_count(r, n));
            assert_eq!(t.len(), a.len());
            assert!(is_primitive(&t));
        }
        assert_eq!(BowenSeriesModel::closed_form_count(2, 3), 18);
    }

    #[test]
    fn transition_rule() {
        let (_, t, _) = bowen_series_alphabet(2, 3).unwrap();
        let idx = |s: &str| t.symbols().labels().iter().position(|l| l == s).unwrap();
        assert!(t.allowed(idx("aab"), idx("ba")));
        for g in ["b", "B"] {
            assert!(!t.allowed(idx("aab"), idx(&format!("a{g}"))));
        }
    }

    #[test]
    fn words_are_reduced() {
        let (a, _, _) = bowen_series_alphabet(3, 4).unwrap();
        for w in &a {
            assert_ne!(w.block.inv(), w.next);
            if w.is_cusp() {
                assert!(!w.next.is_parabolic());
            }
        }
    }
}
