//! Run configuration: `{"schema": 1, "model": {...}, "params": {...}}`, or a
//! bare model descriptor, with command-line overrides applied on top.

use std::path::Path;

use cmshift::models::ModelConfig;
use cmshift::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        cmshift::ldp::linspace(self.lo, self.hi, self.points)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.hi > self.lo) || self.points < 3 {
            return Err(Error::Config(format!("{name}: need lo < hi and at least 3 points")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteParam {
    Auto,
    Enumeration,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeParam {
    Direct,
    Tilted,
}

/// Command parameters. Every field has a default so configs stay short.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Truncation; the model default when absent.
    pub p: Option<usize>,
    pub q: usize,
    pub beta: f64,
    /// Word or trajectory lengths.
    pub n: Vec<usize>,
    pub observable: Option<String>,
    pub seed: Option<u64>,
    pub count: usize,
    /// Deviation threshold.
    pub a: Option<f64>,
    pub mode: ModeParam,
    pub t_grid: Grid,
    pub s_grid: Grid,
    pub tol: f64,
    pub delta: f64,
    pub trials: usize,
    pub depth: usize,
    pub n_max: usize,
    pub route: RouteParam,
    pub cap: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            p: None,
            q: 1,
            beta: 1.0,
            n: vec![],
            observable: None,
            seed: None,
            count: 100_000,
            a: None,
            mode: ModeParam::Tilted,
            t_grid: Grid {
                lo: -5.0,
                hi: 5.0,
                points: 1001,
            },
            s_grid: Grid {
                lo: 0.0,
                hi: 1.0,
                points: 101,
            },
            tol: 1e-9,
            delta: 0.2,
            trials: 200,
            depth: 4,
            n_max: 8,
            route: RouteParam::Auto,
            cap: cmshift::shift::DEFAULT_CAP,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.delta > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.count == 0 || self.trials == 0 || self.n_max == 0 || self.depth == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        if self.n.contains(&0) {
            return Err(Error::Config("n must be positive".into()));
        }
        self.t_grid.validate("t_grid")?;
        self.s_grid.validate("s_grid")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub schema: u64,
    /// The model descriptor as written.
    pub model: Value,
    pub params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    schema: u64,
    model: Value,
    #[serde(default)]
    params: Params,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = if value.get("schema").is_some() {
            let f: RunFile = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
            if f.schema != SCHEMA_VERSION {
                return Err(Error::Config(format!("unsupported schema {}", f.schema)));
            }
            RunConfig {
                schema: f.schema,
                model: f.model,
                params: f.params,
            }
        } else {
            RunConfig {
                schema: SCHEMA_VERSION,
                model: value,
                params: Params::default(),
            }
        };
        cfg.model_config()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        serde_json::from_value(self.model.clone()).map_err(|e| Error::Config(format!("model: {e}")))
    }
}

/// Parses `12`, `4,12` or the inclusive range `2..8`.
pub fn parse_n_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    let bad = |_| format!("invalid n list {s:?}");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a > b {
            return Err(format!("empty range {s:?}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(bad)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_model_and_full_config() {
        let c = RunConfig::parse(r#"{"type":"gauss","K":64}"#).unwrap();
        assert_eq!(c.params.q, 1);
        let c =
            RunConfig::parse(r#"{"schema":1,"model":{"type":"gauss","K":30},"params":{"q":2,"n":[4,12]}}"#).unwrap();
        assert_eq!(c.params.n, vec![4, 12]);
        assert!(RunConfig::parse(r#"{"schema":2,"model":{"type":"gauss","K":30}}"#).is_err());
        assert!(RunConfig::parse(r#"{"schema":1,"model":{"type":"nope"}}"#).is_err());
        assert!(RunConfig::parse(r#"{"schema":1,"model":{"type":"gauss","K":3},"params":{"bogus":1}}"#).is_err());
    }

    #[test]
    fn n_lists() {
        assert_eq!(parse_n_list("12").unwrap(), vec![12]);
        assert_eq!(parse_n_list("4,12").unwrap(), vec![4, 12]);
        assert_eq!(parse_n_list("2..4").unwrap(), vec![2, 3, 4]);
        assert!(parse_n_list("x").is_err());
    }
}
