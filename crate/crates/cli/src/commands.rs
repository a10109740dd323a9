//! Subcommand bodies. Each writes its JSON report and CSV tables through
//! [`Artifacts`] and returns a short summary for the manifest.

use cmshift::equidist::{equidist_diagnostics, EquidistOptions, RouteChoice};
use cmshift::ldp::{
    level1_rate, periodic_deviation_rate, pressure_curve, pressure_curve_on, rate_at, sample_empirical_deviation,
    SamplingMode,
};
use cmshift::models::{bowen_dimension, critical_bernoulli, Model, ModelConfig, ObservableSpec, System};
use cmshift::potential::{beta_infinity, induce_block_potential, BlockPotential};
use cmshift::thermo::{
    entropy_defect_trial, gibbs_certificate, gibbs_measure, measure_functionals, pressure, random_markov_measure,
    system_pressure, MarkovMeasure, PressureCurve, PressureOptions,
};
use cmshift::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ModeParam, Params, RouteParam, RunConfig};
use crate::output::{Artifacts, Cell, Table};

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub model: &'a dyn Model,
    pub model_config: ModelConfig,
}

impl Context<'_> {
    fn params(&self) -> &Params {
        &self.cfg.params
    }

    fn p(&self) -> usize {
        self.params().p.unwrap_or_else(|| self.model.default_truncation())
    }

    fn pressure_options(&self) -> PressureOptions {
        PressureOptions {
            q: self.params().q,
            cap: self.params().cap,
            ..PressureOptions::default()
        }
    }

    fn observable(&self) -> Result<ObservableSpec> {
        self.params()
            .observable
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs an observable".into()))?
            .parse()
    }

    fn threshold(&self) -> Result<f64> {
        self.params()
            .a
            .ok_or_else(|| Error::Config("this command needs a threshold a".into()))
    }

    fn seed(&self) -> Result<u64> {
        self.params()
            .seed
            .ok_or_else(|| Error::Config("sampling commands need a seed".into()))
    }

    fn n_list(&self, default: &[usize]) -> Vec<usize> {
        if self.params().n.is_empty() {
            default.to_vec()
        } else {
            self.params().n.clone()
        }
    }
}

pub fn run_pressure(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let report = pressure(ctx.model, params.beta, ctx.p(), &ctx.pressure_options())?;
    art.json("pressure.json", &report)?;
    let mut t = Table::new(
        "pressure",
        &[
            "truncation",
            "beta",
            "q",
            "estimate",
            "block_estimate",
            "delta",
            "method",
        ],
    );
    let method = serde_json::to_value(report.method).ok();
    let method = method.as_ref().and_then(Value::as_str).unwrap_or("");
    for (p, est, block) in [
        (report.p, report.estimate, report.block_estimate),
        (report.p_half, report.estimate_half, report.block_estimate_half),
    ] {
        t.push(vec![
            p.into(),
            report.beta.into(),
            report.q.into(),
            est.into(),
            block.into(),
            report.delta.into(),
            method.into(),
        ]);
    }
    art.table(&t)?;
    Ok(json!({"pressure": report.estimate, "delta": report.delta, "p": report.p, "q": report.q}))
}

pub fn run_beta_inf(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let sys = ctx.model.system(ctx.p())?;
    let b = beta_infinity(sys.potential.as_ref(), ctx.params().tol.max(1e-12))?;
    let mut report = json!({
        "beta_infinity": b,
        "tail": sys.potential.tail(),
        "truncation": sys.truncation,
    });
    if let ModelConfig::CriticalBernoulli { cutoff } = ctx.model_config {
        let (_, diag) = critical_bernoulli(cutoff)?;
        report["critical"] = serde_json::to_value(&diag).map_err(|e| Error::invalid(e.to_string()))?;
        let mut t = Table::new("entropy_partial_sums", &["K", "entropy"]);
        for &(k, h) in &diag.entropy_partial_sums {
            t.push(vec![k.into(), h.into()]);
        }
        art.table(&t)?;
    }
    art.json("beta_inf.json", &report)?;
    Ok(json!({"beta_infinity": b}))
}

fn block_system(sys: &System, q: usize, cap: u64) -> Result<BlockPotential> {
    induce_block_potential(sys.potential.as_ref(), q, &sys.structure, cap)
}

pub fn run_gibbs_check(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let sys = ctx.model.system(ctx.p())?;
    let block = block_system(&sys, params.q, params.cap)?;
    let (mu, perron) = gibbs_measure(&block)?;
    let cert = gibbs_certificate(&mu, &block, perron.log_lambda, params.n_max)?;
    let per_symbol = perron.log_lambda / params.q as f64;
    let f = measure_functionals(&mu, &block, per_symbol)?;
    let report = json!({
        "pressure": per_symbol,
        "c": cert.c,
        "h": f.h,
        "integral": f.integral,
        "integral_lower": f.integral_lower,
        "integral_upper": f.integral_upper,
        "F": f.free_energy,
        "p": sys.truncation,
        "q": params.q,
        "certificate": cert,
    });
    art.json("gibbs_check.json", &report)?;
    let mut t = Table::new("gibbs", &["n", "c"]);
    for (i, c) in cert.c_by_length.iter().enumerate() {
        t.push(vec![(i + 1).into(), (*c).into()]);
    }
    art.table(&t)?;
    Ok(json!({"c": cert.c, "h": f.h, "F": f.free_energy}))
}

pub fn run_equidist(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let sys = ctx.model.system(ctx.p())?;
    let psi = ctx.observable()?.resolve(&sys)?;
    let opts = EquidistOptions {
        route: match params.route {
            RouteParam::Auto => RouteChoice::Auto,
            RouteParam::Enumeration => RouteChoice::Enumeration,
            RouteParam::Trace => RouteChoice::Trace,
        },
        cap: params.cap,
        ..EquidistOptions::default()
    };
    let report = equidist_diagnostics(&sys, &psi, &ctx.n_list(&[1, 2, 3, 4]), &opts)?;
    art.json("equidist.json", &report)?;
    let mut t = Table::new(
        "equidist",
        &[
            "n",
            "integral",
            "target",
            "abs_error",
            "n_orbits",
            "log_normalizer",
            "route",
        ],
    );
    for r in &report.rows {
        t.push(vec![
            r.n.into(),
            r.integral.into(),
            r.target.into(),
            r.abs_error.into(),
            r.n_orbits.into(),
            r.log_normalizer.into(),
            Cell::Text(format!("{:?}", r.route).to_lowercase()),
        ]);
    }
    art.table(&t)?;
    Ok(json!({"target": report.target, "monotone": report.monotone}))
}

pub fn run_dimension(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let report = bowen_dimension(ctx.model, ctx.p(), ctx.params().tol, &ctx.pressure_options())?;
    art.json("dimension.json", &report)?;
    let mut t = Table::new(
        "dimension",
        &["dimension", "beta_lo", "beta_hi", "pressure_lo", "pressure_hi"],
    );
    t.push(vec![
        report.dimension.into(),
        report.beta_lo.into(),
        report.beta_hi.into(),
        report.pressure_lo.into(),
        report.pressure_hi.into(),
    ]);
    art.table(&t)?;
    Ok(json!({"dimension": report.dimension}))
}

pub fn run_ldp_rate(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let curve = pressure_curve(
        ctx.model,
        ctx.p(),
        &ctx.observable()?,
        &params.t_grid.values(),
        &ctx.pressure_options(),
    )?;
    let rate = level1_rate(&curve, &params.s_grid.values())?;
    let at_a = params.a.map(|a| rate_at(&curve, a).0);
    let report = json!({
        "base_pressure": curve.base,
        "minimizer_s": rate.minimizer_s,
        "unique_zero": rate.unique_zero,
        "zeros": rate.zeros,
        "grid_step": rate.grid_step,
        "a": params.a,
        "rate_at_a": at_a,
        "warnings": rate.warnings,
    });
    art.json("ldp_rate.json", &report)?;
    let mut c = Table::new("pressure_curve", &["t", "pressure", "truncation_delta"]);
    for i in 0..curve.grid.len() {
        c.push(vec![
            curve.grid[i].into(),
            curve.values[i].into(),
            curve.truncation_delta[i].into(),
        ]);
    }
    art.table(&c)?;
    let mut t = Table::new("rate", &["s", "rate", "argmax_t", "endpoint_attained"]);
    for i in 0..rate.s_grid.len() {
        t.push(vec![
            rate.s_grid[i].into(),
            rate.i_values[i].into(),
            rate.argmax_t[i].into(),
            rate.endpoint_attained[i].into(),
        ]);
    }
    art.table(&t)?;
    Ok(json!({"minimizer_s": rate.minimizer_s, "rate_at_a": at_a}))
}

/// Level-1 observable values and the Gibbs measure of the 1-block potential.
fn chain_and_observable(ctx: &Context) -> Result<(System, MarkovMeasure, Vec<f64>)> {
    let sys = ctx.model.system(ctx.p())?;
    let psi = ctx.observable()?.resolve(&sys)?;
    let psi = psi
        .symbol_values()
        .ok_or_else(|| Error::Unsupported("sampling needs an observable constant on 1-cylinders".into()))?
        .to_vec();
    let block = block_system(&sys, 1, ctx.params().cap)?;
    let (mu, _) = gibbs_measure(&block)?;
    Ok((sys, mu, psi))
}

fn target_curve(ctx: &Context, sys: &System, psi: &[f64]) -> Result<PressureCurve> {
    let grid = ctx.params().t_grid.values();
    let opts = ctx.pressure_options();
    let values = pressure_curve_on(sys, psi, &grid, &opts)?;
    let base = system_pressure(sys, 1.0, None, &opts)?.estimate;
    let n = grid.len();
    PressureCurve::new(grid, values, vec![0.0; n], base)
}

pub fn run_ldp_sample(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let seed = ctx.seed()?;
    let a = ctx.threshold()?;
    let (sys, mu, psi) = chain_and_observable(ctx)?;
    let target = rate_at(&target_curve(ctx, &sys, &psi)?, a).0;
    let mode = match params.mode {
        ModeParam::Direct => SamplingMode::Direct,
        ModeParam::Tilted => SamplingMode::Tilted,
    };
    let mut t = Table::new(
        "ldp_sample",
        &[
            "n",
            "estimate",
            "ci_low",
            "ci_high",
            "target_rate",
            "probability",
            "hits",
            "zero_hits",
        ],
    );
    let mut estimates = Vec::new();
    for n in ctx.n_list(&[200]) {
        let e = sample_empirical_deviation(&mu, &psi, a, n, params.count, seed, mode)?;
        t.push(vec![
            n.into(),
            e.rate.into(),
            e.rate_ci_low.into(),
            e.rate_ci_high.into(),
            target.into(),
            e.probability.into(),
            e.hits.into(),
            e.zero_hits.into(),
        ]);
        estimates.push(e);
    }
    art.json(
        "ldp_sample.json",
        &json!({"target_rate": target, "estimates": estimates}),
    )?;
    art.table(&t)?;
    Ok(json!({"target_rate": target, "seed": seed}))
}

pub fn run_ldp_periodic(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let a = ctx.threshold()?;
    let sys = ctx.model.system(ctx.p())?;
    let psi = ctx.observable()?.resolve(&sys)?;
    let psi = psi
        .symbol_values()
        .ok_or_else(|| Error::Unsupported("periodic rates need an observable constant on 1-cylinders".into()))?
        .to_vec();
    let target = rate_at(&target_curve(ctx, &sys, &psi)?, a).0;
    let rows = periodic_deviation_rate(&sys, &psi, a, &ctx.n_list(&[4, 8]), params.cap)?;
    let mut t = Table::new(
        "ldp_periodic",
        &[
            "n",
            "estimate",
            "ci_low",
            "ci_high",
            "target_rate",
            "log_restricted",
            "log_total",
        ],
    );
    for r in &rows {
        t.push(vec![
            r.n.into(),
            r.rate.into(),
            r.rate.into(),
            r.rate.into(),
            target.into(),
            r.log_restricted.into(),
            r.log_total.into(),
        ]);
    }
    art.json("ldp_periodic.json", &json!({"target_rate": target, "rows": rows}))?;
    art.table(&t)?;
    Ok(json!({"target_rate": target}))
}

pub fn run_defect_test(ctx: &Context, art: &mut Artifacts) -> Result<Value> {
    let params = ctx.params();
    let seed = ctx.seed()?;
    let sys = ctx.model.system(ctx.model.default_truncation())?;
    let phi = sys
        .potential
        .symbol_values()
        .ok_or_else(|| Error::Unsupported("the defect test needs a potential constant on 1-cylinders".into()))?
        .to_vec();
    let p = params
        .p
        .ok_or_else(|| Error::Config("defect-test needs the collapse level p".into()))?;
    let beta_inf = beta_infinity(sys.potential.as_ref(), 1e-9)?;
    let opts = PressureOptions::default();
    let pressure_at = |beta: f64| system_pressure(&sys, beta, None, &opts).map(|v| v.estimate);
    let mut t = Table::new(
        "defect",
        &[
            "trial",
            "h",
            "h_collapsed_lower",
            "h_collapsed_upper",
            "c_p",
            "k_p",
            "defect_bound",
            "violated",
        ],
    );
    let mut violations = 0;
    for trial in 0..params.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mu = random_markov_measure(phi.len(), &mut rng)?;
        let d = entropy_defect_trial(&mu, p, &phi, params.delta, beta_inf, &pressure_at, params.depth)?;
        violations += usize::from(d.violated);
        t.push(vec![
            trial.into(),
            d.h.into(),
            d.h_collapsed_lower.into(),
            d.h_collapsed_upper.into(),
            d.c_p.into(),
            d.k_p.into(),
            d.defect_bound.into(),
            d.violated.into(),
        ]);
    }
    let report = json!({
        "trials": params.trials,
        "violations": violations,
        "p": p,
        "delta": params.delta,
        "beta_infinity": beta_inf,
    });
    art.json("defect_test.json", &report)?;
    art.table(&t)?;
    Ok(json!({"violations": violations}))
}
