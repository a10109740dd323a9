//! `cmshift`: command-line front end of the engine.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 enumeration cap exceeded, 5 I/O error. Failures print one line
//! `cmshift: error=<tag> exit=<code> message=<json string>` on stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use cmshift::{Error, Result};
use serde_json::json;

use commands::Context;
use config::{parse_n_list, RunConfig};
use output::Artifacts;

#[derive(Parser, Debug)]
#[command(
    name = "cmshift",
    version,
    about = "Thermodynamic formalism on truncated countable Markov shifts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run config (`{"schema":1,"model":..,"params":..}`) or bare model descriptor.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Lengths: `12`, `4,12` or `2..8`.
    #[arg(long, global = true, value_parser = parse_lengths)]
    n: Option<Lengths>,
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true)]
    q: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Observable: `const:c`, `symbol:i`, `digit:k`, `midpoint:q` or `cusp`.
    #[arg(long, global = true)]
    observable: Option<String>,
    /// Deviation threshold.
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, global = true, default_value = "cmshift-out")]
    out: PathBuf,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone)]
struct Lengths(Vec<usize>);

fn parse_lengths(s: &str) -> std::result::Result<Lengths, String> {
    parse_n_list(s).map(Lengths)
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    Pressure,
    BetaInf,
    GibbsCheck,
    Equidist,
    Dimension,
    LdpRate,
    LdpSample,
    LdpPeriodic,
    DefectTest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pressure => "pressure",
            Command::BetaInf => "beta-inf",
            Command::GibbsCheck => "gibbs-check",
            Command::Equidist => "equidist",
            Command::Dimension => "dimension",
            Command::LdpRate => "ldp-rate",
            Command::LdpSample => "ldp-sample",
            Command::LdpPeriodic => "ldp-periodic",
            Command::DefectTest => "defect-test",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::CapExceeded { .. } => 4,
        Error::Io(_) => 5,
        _ => 3,
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    let p = &mut cfg.params;
    if let Some(n) = &cli.n {
        p.n = n.0.clone();
    }
    p.p = cli.p.or(p.p);
    p.q = cli.q.unwrap_or(p.q);
    p.beta = cli.beta.unwrap_or(p.beta);
    p.seed = cli.seed.or(p.seed);
    p.a = cli.a.or(p.a);
    p.count = cli.count.unwrap_or(p.count);
    if cli.observable.is_some() {
        p.observable = cli.observable.clone();
    }
    p.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let cfg = load(cli)?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let model_config = cfg.model_config()?;
    let model = model_config.build()?;
    let ctx = Context {
        cfg: &cfg,
        model: model.as_ref(),
        model_config,
    };
    let mut art = Artifacts::new(&cli.out)?;
    let summary = match cli.command {
        Command::Pressure => commands::run_pressure(&ctx, &mut art),
        Command::BetaInf => commands::run_beta_inf(&ctx, &mut art),
        Command::GibbsCheck => commands::run_gibbs_check(&ctx, &mut art),
        Command::Equidist => commands::run_equidist(&ctx, &mut art),
        Command::Dimension => commands::run_dimension(&ctx, &mut art),
        Command::LdpRate => commands::run_ldp_rate(&ctx, &mut art),
        Command::LdpSample => commands::run_ldp_sample(&ctx, &mut art),
        Command::LdpPeriodic => commands::run_ldp_periodic(&ctx, &mut art),
        Command::DefectTest => commands::run_defect_test(&ctx, &mut art),
    }?;
    let files = art.files().to_vec();
    let manifest = json!({
        "schema": config::SCHEMA_VERSION,
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_path": cli.config.as_ref().map(|p| p.display().to_string()),
        "config": cfg,
        "seed": cfg.params.seed,
        "threads": rayon::current_num_threads(),
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "files": files,
        "summary": summary,
    });
    art.json("manifest.json", &manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!(
                "cmshift: error={} exit={} message={}",
                e.tag(),
                code,
                serde_json::Value::String(e.to_string())
            );
            ExitCode::from(code)
        }
    }
}
