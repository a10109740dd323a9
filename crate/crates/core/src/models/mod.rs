//! Concrete systems: Gauss map, Bowen–Series induced shift, the critical
//! Bernoulli example and explicitly specified shifts.

pub mod bowen_series;
pub mod critical;
pub mod dimension;
pub mod gauss;

use std::fmt::Debug;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::potential::{LocallyConstant, Potential, TailDescriptor};
use crate::shift::{SymbolSet, TransitionStructure};

pub use bowen_series::{bowen_series_alphabet, BowenSeriesModel};
pub use critical::{critical_bernoulli, CriticalBernoulli};
pub use dimension::{bowen_dimension, DimensionReport, ZERO_PRESSURE};
pub use gauss::{
    gauss_integral_oracle, gauss_periodic_points, GaussIntegrand, GaussOperator, GaussPotential, QuadraticIrrational,
    TaylorOperator,
};

/// Extra structure some models expose beyond shift and potential.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    /// Symbol `i` is continued-fraction digit `digits[i]`.
    Gauss {
        digits: Vec<u64>,
        nodes: usize,
    },
    /// `cusp[i]` marks parabolic blocks.
    BowenSeries {
        cusp: Vec<bool>,
    },
    Generic,
}

/// A model at one truncation level.
#[derive(Debug, Clone)]
pub struct System {
    pub structure: TransitionStructure,
    pub potential: Arc<dyn Potential>,
    pub kind: SystemKind,
    /// The model-native truncation parameter that produced this system.
    pub truncation: usize,
}

impl System {
    /// The collocated transfer operator, for conformal interval models.
    pub fn gauss_operator(&self) -> Option<GaussOperator> {
        match &self.kind {
            SystemKind::Gauss { digits, nodes } => GaussOperator::new(digits.clone(), *nodes).ok(),
            _ => None,
        }
    }

    pub fn gauss_digits(&self) -> Option<&[u64]> {
        match &self.kind {
            SystemKind::Gauss { digits, .. } => Some(digits),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.structure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structure.is_empty()
    }

    /// Same shift with potential `βφ`.
    pub fn scaled(&self, beta: f64) -> System {
        System {
            structure: self.structure.clone(),
            potential: Arc::new(crate::potential::Scaled::new(self.potential.clone(), beta)),
            kind: self.kind.clone(),
            truncation: self.truncation,
        }
    }
}

/// A countable system together with its family of truncations.
pub trait Model: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    /// The truncation used when none is requested.
    fn default_truncation(&self) -> usize;
    /// The system retaining the symbols up to truncation `p`.
    fn system(&self, p: usize) -> Result<System>;
}

/// Gauss map restricted to the digits up to a cutoff, optionally to a subset.
#[derive(Debug, Clone)]
pub struct GaussModel {
    pub cutoff: u64,
    pub digits: Option<Vec<u64>>,
    pub nodes: usize,
}

impl GaussModel {
    pub fn new(cutoff: u64, digits: Option<Vec<u64>>) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let digits = match digits {
            Some(mut d) => {
                d.sort_unstable();
                d.dedup();
                if d.is_empty() || d[0] == 0 {
                    return Err(Error::Config("digits must be positive and nonempty".into()));
                }
                Some(d)
            }
            None => None,
        };
        Ok(Self {
            cutoff,
            digits,
            nodes: gauss::DEFAULT_NODES,
        })
    }

    pub fn digits_at(&self, p: u64) -> Vec<u64> {
        match &self.digits {
            Some(d) => d.iter().copied().filter(|&k| k <= p).collect(),
            None => (1..=p).collect(),
        }
    }
}

impl Model for GaussModel {
    fn name(&self) -> &'static str {
        "gauss"
    }

    fn default_truncation(&self) -> usize {
        match &self.digits {
            Some(d) => (*d.last().unwrap()).min(self.cutoff) as usize,
            None => self.cutoff as usize,
        }
    }

    fn system(&self, p: usize) -> Result<System> {
        let digits = self.digits_at(p as u64);
        if digits.is_empty() {
            return Err(Error::invalid(format!("no Gauss digits at truncation {p}")));
        }
        // A finite digit set leaves no tail; otherwise e^{φ} ≤ k^{-2} on digit k.
        let tail = if self.digits.is_some() {
            TailDescriptor::Finite
        } else {
            TailDescriptor::Power {
                exponent: 2.0,
                log_exponent: 0.0,
                constant: 1.0,
            }
        };
        let labels = digits.iter().map(|d| d.to_string()).collect();
        Ok(System {
            structure: TransitionStructure::full(SymbolSet::new(labels)?),
            potential: Arc::new(GaussPotential::new(digits.clone(), tail)?),
            kind: SystemKind::Gauss {
                digits,
                nodes: self.nodes,
            },
            truncation: p,
        })
    }
}

/// A shift with explicit 0/1 matrix and 1-cylinder potential values.
#[derive(Debug, Clone)]
pub struct ExplicitModel {
    pub structure: TransitionStructure,
    pub phi: Vec<f64>,
    pub tail: Option<TailDescriptor>,
}

impl ExplicitModel {
    pub fn new(structure: TransitionStructure, phi: Vec<f64>, tail: Option<TailDescriptor>) -> Result<Self> {
        if phi.len() != structure.len() {
            return Err(Error::Config(format!(
                "phi has {} entries for {} symbols",
                phi.len(),
                structure.len()
            )));
        }
        LocallyConstant::new(phi.clone(), tail.clone())?;
        Ok(Self { structure, phi, tail })
    }
}

impl Model for ExplicitModel {
    fn name(&self) -> &'static str {
        "explicit"
    }

    fn default_truncation(&self) -> usize {
        self.structure.len() - 1
    }

    /// Retains symbols `0..=p`.
    fn system(&self, p: usize) -> Result<System> {
        let keep: Vec<usize> = (0..self.structure.len().min(p + 1)).collect();
        let structure = if keep.len() == self.structure.len() {
            self.structure.clone()
        } else {
            self.structure.restrict(&keep)?
        };
        let values = keep.iter().map(|&i| self.phi[i]).collect();
        Ok(System {
            structure,
            potential: Arc::new(LocallyConstant::new(values, self.tail.clone())?),
            kind: SystemKind::Generic,
            truncation: keep.len() - 1,
        })
    }
}

/// Transition matrix in a model config: a dense 0/1 matrix or a name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Dense(Vec<Vec<u8>>),
}

/// Model descriptor as found in config files.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Gauss {
        #[serde(rename = "K")]
        cutoff: u64,
        #[serde(default)]
        digits: Option<Vec<u64>>,
        #[serde(default)]
        nodes: Option<usize>,
    },
    BowenSeries {
        rank: usize,
        cusp_cutoff: usize,
    },
    Explicit {
        matrix: MatrixSpec,
        phi: Vec<f64>,
        #[serde(default)]
        tail: Option<TailDescriptor>,
    },
    CriticalBernoulli {
        #[serde(rename = "K")]
        cutoff: usize,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Box<dyn Model>> {
        Ok(match self {
            ModelConfig::Gauss { cutoff, digits, nodes } => {
                let mut m = GaussModel::new(*cutoff, digits.clone())?;
                if let Some(n) = nodes {
                    if *n < 4 {
                        return Err(Error::Config("nodes must be at least 4".into()));
                    }
                    m.nodes = *n;
                }
                Box::new(m)
            }
            ModelConfig::BowenSeries { rank, cusp_cutoff } => Box::new(BowenSeriesModel::new(*rank, *cusp_cutoff)?),
            ModelConfig::Explicit { matrix, phi, tail } => {
                let symbols = SymbolSet::indexed(phi.len()).map_err(|e| Error::Config(e.to_string()))?;
                let structure = match matrix {
                    MatrixSpec::Named(name) => match name.as_str() {
                        "full" => TransitionStructure::full(symbols),
                        "golden_mean" => {
                            if phi.len() != 2 {
                                return Err(Error::Config("golden_mean needs 2 phi values".into()));
                            }
                            TransitionStructure::golden_mean()
                        }
                        other => return Err(Error::Config(format!("unknown matrix name {other:?}"))),
                    },
                    MatrixSpec::Dense(rows) => {
                        TransitionStructure::from_dense(symbols, rows).map_err(|e| Error::Config(e.to_string()))?
                    }
                };
                Box::new(
                    ExplicitModel::new(structure, phi.clone(), tail.clone())
                        .map_err(|e| Error::Config(e.to_string()))?,
                )
            }
            ModelConfig::CriticalBernoulli { cutoff } => {
                if *cutoff < 3 {
                    return Err(Error::Config("K must be at least 3".into()));
                }
                Box::new(CriticalBernoulli { cutoff: *cutoff })
            }
        })
    }
}

/// A bounded function of the first `level` symbols.
#[derive(Clone)]
pub struct CylinderObservable {
    level: usize,
    symbol_values: Option<Vec<f64>>,
    func: Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>,
    /// Known expectation under the limiting equilibrium state, when a
    /// closed form or quadrature oracle exists.
    reference: Option<f64>,
    description: String,
}

impl Debug for CylinderObservable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CylinderObservable")
            .field("level", &self.level)
            .field("description", &self.description)
            .finish()
    }
}

impl CylinderObservable {
    /// Observable constant on 1-cylinders.
    pub fn from_symbol_values(values: Vec<f64>, description: impl Into<String>) -> Self {
        let v = values.clone();
        Self {
            level: 1,
            symbol_values: Some(values),
            func: Arc::new(move |w: &[usize]| v[w[0]]),
            reference: None,
            description: description.into(),
        }
    }

    pub fn from_fn(
        level: usize,
        func: impl Fn(&[usize]) -> f64 + Send + Sync + 'static,
        description: impl Into<String>,
    ) -> Self {
        Self {
            level,
            symbol_values: None,
            func: Arc::new(func),
            reference: None,
            description: description.into(),
        }
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn symbol_values(&self) -> Option<&[f64]> {
        self.symbol_values.as_deref()
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Value on a word of at least `level` symbols.
    #[inline]
    pub fn eval(&self, word: &[usize]) -> f64 {
        (self.func)(word)
    }

    /// `cψ`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.func.clone();
        Self {
            level: self.level,
            symbol_values: self.symbol_values.as_ref().map(|v| v.iter().map(|x| c * x).collect()),
            func: Arc::new(move |w: &[usize]| c * f(w)),
            reference: self.reference.map(|r| c * r),
            description: format!("{c}*{}", self.description),
        }
    }
}

/// Observable descriptor: `const:c`, `symbol:i`, `digit:k`, `midpoint:q`, `cusp`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    Constant(f64),
    Symbol(usize),
    Digit(u64),
    Midpoint(usize),
    Cusp,
}

impl std::str::FromStr for ObservableSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised observable {s:?}"));
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        Ok(match kind {
            "const" => ObservableSpec::Constant(arg.parse().map_err(|_| bad())?),
            "symbol" => ObservableSpec::Symbol(arg.parse().map_err(|_| bad())?),
            "digit" => ObservableSpec::Digit(arg.parse().map_err(|_| bad())?),
            "midpoint" => {
                let q: usize = arg.parse().map_err(|_| bad())?;
                if q == 0 {
                    return Err(bad());
                }
                ObservableSpec::Midpoint(q)
            }
            "cusp" if arg.is_empty() => ObservableSpec::Cusp,
            _ => return Err(bad()),
        })
    }
}

impl ObservableSpec {
    /// Resolves the descriptor on a concrete truncation.
    pub fn resolve(&self, system: &System) -> Result<CylinderObservable> {
        let n = system.len();
        match (self, &system.kind) {
            (ObservableSpec::Constant(c), _) => {
                Ok(CylinderObservable::from_symbol_values(vec![*c; n], format!("const:{c}")).with_reference(*c))
            }
            (ObservableSpec::Symbol(i), _) => {
                if *i >= n {
                    return Err(Error::Config(format!("symbol {i} not retained")));
                }
                let mut v = vec![0.0; n];
                v[*i] = 1.0;
                Ok(CylinderObservable::from_symbol_values(v, format!("symbol:{i}")))
            }
            (ObservableSpec::Digit(k), SystemKind::Gauss { digits, .. }) => {
                let v = digits.iter().map(|d| if d == k { 1.0 } else { 0.0 }).collect();
                let mut obs = CylinderObservable::from_symbol_values(v, format!("digit:{k}"));
                // The Gauss measure is the equilibrium state on the full digit set.
                if digits.len() as u64 == *digits.last().unwrap() {
                    obs = obs.with_reference(gauss_integral_oracle(GaussIntegrand::Cylinder(&[*k])));
                }
                Ok(obs)
            }
            (ObservableSpec::Midpoint(q), SystemKind::Gauss { digits, .. }) => {
                let d = digits.clone();
                let q = *q;
                let full = digits.len() as u64 == *digits.last().unwrap();
                let mut obs = CylinderObservable::from_fn(
                    q,
                    move |w: &[usize]| {
                        let (a, b) = gauss::cylinder_interval(w[..q].iter().map(|&i| d[i]));
                        0.5 * (a + b)
                    },
                    format!("midpoint:{q}"),
                );
                if full {
                    let id = |x: f64| x;
                    obs = obs.with_reference(gauss_integral_oracle(GaussIntegrand::Function(&id)));
                }
                Ok(obs)
            }
            (ObservableSpec::Cusp, SystemKind::BowenSeries { cusp }) => {
                let v = cusp.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
                Ok(CylinderObservable::from_symbol_values(v, "cusp"))
            }
            (spec, _) => Err(Error::Config(format!(
                "observable {spec:?} is not defined for this model"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_configs() {
        let c: ModelConfig = serde_json::from_str(r#"{"type":"gauss","K":64,"digits":[1,2]}"#).unwrap();
        let m = c.build().unwrap();
        assert_eq!(m.system(64).unwrap().len(), 2);
        let c: ModelConfig = serde_json::from_str(r#"{"type":"bowen_series","rank":2,"cusp_cutoff":3}"#).unwrap();
        assert_eq!(c.build().unwrap().system(3).unwrap().len(), 18);
        let c: ModelConfig = serde_json::from_str(
            r#"{"type":"explicit","matrix":[[1,1],[1,0]],"phi":[0.0,0.0],"tail":{"kind":"power","exponent":2.0}}"#,
        )
        .unwrap();
        assert!(!c.build().unwrap().system(1).unwrap().structure.is_full());
        let c: ModelConfig =
            serde_json::from_str(r#"{"type":"explicit","matrix":"full","phi":[0.1,0.2,0.3]}"#).unwrap();
        assert_eq!(c.build().unwrap().system(1).unwrap().len(), 2);
    }

    #[test]
    fn observables_parse() {
        assert_eq!("digit:1".parse::<ObservableSpec>().unwrap(), ObservableSpec::Digit(1));
        assert_eq!("cusp".parse::<ObservableSpec>().unwrap(), ObservableSpec::Cusp);
        assert!("midpoint:0".parse::<ObservableSpec>().is_err());
        assert!("nope".parse::<ObservableSpec>().is_err());
    }
}
