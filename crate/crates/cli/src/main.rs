//! `enrt`: estimation, sensitivity analysis and simulation for
//! egocentric-network randomized trials.
//!
//! Settings resolve as flags > config file > defaults (`--threads` also
//! reads `ENRT_THREADS`). Exit status: 0 success, 1 invalid input or
//! config, 2 failure while computing or writing.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use enrt_core::analysis::{
    run_gsa, run_pba, AnalysisError, AnalysisOptions, SensitivityGrid, SensitivityPoint,
};
use enrt_core::estimators::{naive_de, naive_ie, DEFAULT_LEVEL};
use enrt_core::sample::load_sample;
use enrt_core::sim::{run_scenario, SimError};
use enrt_core::{EdgeModel, Sample};
use serde_json::{json, Value};

use config::{Command, RunConfig};
use output::Row;

#[derive(Parser)]
#[command(
    name = "enrt",
    version,
    about = "Contamination-aware effect estimation for egocentric-network randomized trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Naive and bias-corrected estimates at one sensitivity point
    Estimate(RunArgs),
    /// Grid sensitivity analysis
    Gsa(RunArgs),
    /// Probabilistic bias analysis
    Pba(RunArgs),
    /// Replicated randomizations of simulated trials
    Simulate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON), or the manifest.json of an earlier run
    #[arg(long)]
    config: PathBuf,
    /// Master seed for every random stream
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, env = "ENRT_THREADS")]
    threads: Option<usize>,
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn analysis_failure(e: AnalysisError) -> Failure {
    match e {
        AnalysisError::CrossFit(_) | AnalysisError::Distances(_) => Failure::Runtime(e.into()),
        _ => Failure::Validation(e.into()),
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Invalid(_) => Failure::Validation(e.into()),
        _ => Failure::Runtime(e.into()),
    }
}

/// What a command produced, before anything is written.
enum Table {
    Estimates { rows: Vec<Row>, with_value: bool },
    Report(Vec<(String, enrt_core::sim::ReplicationReport)>),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("results written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, Failure> {
    let (command, args) = match cli.command {
        Sub::Estimate(a) => (Command::Estimate, a),
        Sub::Gsa(a) => (Command::Gsa, a),
        Sub::Pba(a) => (Command::Pba, a),
        Sub::Simulate(a) => (Command::Simulate, a),
    };
    let mut cfg = config::load(&args.config).invalid()?;
    resolve(&mut cfg, command, &args).invalid()?;
    let seed = cfg.seed.unwrap_or_default();
    let threads = cfg.threads.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .runtime()?;
    let (table, summary) = pool.install(|| execute(command, &cfg, seed))?;

    let out = cfg.out.clone().expect("resolved");
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))
        .runtime()?;
    match &table {
        Table::Estimates { rows, with_value } => {
            output::write_estimates(&out.join("estimates.csv"), seed, rows, *with_value)
                .runtime()?
        }
        Table::Report(reports) => {
            output::write_report(&out.join("estimates.csv"), seed, reports).runtime()?
        }
    }
    output::write_json(&out.join("summary.json"), &summary).runtime()?;
    let manifest = json!({
        "software": {"name": "enrt", "version": env!("CARGO_PKG_VERSION")},
        "command": command.name(),
        "seed": seed,
        "config": cfg,
    });
    output::write_json(&out.join("manifest.json"), &manifest).runtime()?;
    Ok(out)
}

/// Applies flags and defaults and checks everything that does not need
/// the data.
fn resolve(cfg: &mut RunConfig, command: Command, args: &RunArgs) -> anyhow::Result<()> {
    if let Some(c) = cfg.command {
        if c != command {
            anyhow::bail!("config is for `{}`, not `{}`", c.name(), command.name());
        }
    }
    cfg.command = Some(command);
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    cfg.seed.get_or_insert(0);
    let out = args
        .out
        .clone()
        .or(cfg.out.take())
        .unwrap_or_else(|| config::DEFAULT_OUT.into());
    cfg.out = Some(std::path::absolute(out)?);
    let threads = args
        .threads
        .or(cfg.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        anyhow::bail!("threads must be at least 1");
    }
    cfg.threads = Some(threads);
    let level = cfg.level.unwrap_or(DEFAULT_LEVEL);
    if !(level > 0.0 && level < 1.0) {
        anyhow::bail!("level = {level} not in (0, 1)");
    }
    cfg.level = Some(level);

    let needs = |what: &str| anyhow!("`{}` needs `{what}` in the config", command.name());
    match command {
        Command::Simulate => {
            cfg.simulate.as_ref().ok_or_else(|| needs("simulate"))?;
        }
        _ => {
            let input = cfg.input.as_ref().ok_or_else(|| needs("input"))?;
            if !input.is_file() {
                anyhow::bail!("input file {} does not exist", input.display());
            }
            cfg.input = Some(std::path::absolute(input)?);
            let p_z = cfg.p_z.ok_or_else(|| needs("p_z"))?;
            if !(p_z > 0.0 && p_z < 1.0) {
                anyhow::bail!("p_z = {p_z} not in (0, 1)");
            }
            match command {
                Command::Gsa => {
                    cfg.grid.as_ref().ok_or_else(|| needs("grid"))?.expand()?;
                }
                Command::Pba => {
                    cfg.pba.as_ref().ok_or_else(|| needs("pba"))?;
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn load(cfg: &RunConfig) -> Result<Sample, Failure> {
    let input = cfg.input.as_deref().expect("resolved");
    load_sample(input, &cfg.schema, cfg.p_z.expect("resolved"))
        .with_context(|| format!("loading {}", input.display()))
        .invalid()
}

fn options(cfg: &RunConfig, seed: u64) -> AnalysisOptions {
    AnalysisOptions {
        estimators: cfg.estimators.clone(),
        outcome_model: cfg.outcome_model.clone(),
        crossfit_seed: seed,
        level: cfg.level.unwrap_or(DEFAULT_LEVEL),
    }
}

fn execute(command: Command, cfg: &RunConfig, seed: u64) -> Result<(Table, Value), Failure> {
    match command {
        Command::Estimate => estimate(cfg, seed),
        Command::Gsa => gsa(cfg, seed),
        Command::Pba => pba(cfg, seed),
        Command::Simulate => simulate(cfg, seed),
    }
}

fn estimate(cfg: &RunConfig, seed: u64) -> Result<(Table, Value), Failure> {
    let s = load(cfg)?;
    let opts = options(cfg, seed);
    let point = cfg.point.clone().unwrap_or(SensitivityPoint {
        model: EdgeModel::none(),
        kappa: 1.0,
        delta: None,
    });
    let grid = SensitivityGrid {
        points: vec![point],
    };
    let corrected = run_gsa(&s, &grid, &opts)
        .map_err(analysis_failure)?
        .remove(0)
        .result;
    let mut ests = vec![
        naive_ie(&s).runtime()?.with_level(opts.level),
        naive_de(&s).runtime()?.with_level(opts.level),
    ];
    ests.extend(corrected.map_err(|e| Failure::Runtime(anyhow!(e)))?);
    let summary = json!({
        "command": "estimate",
        "seed": seed,
        "n_e": s.n_e(),
        "n_a": s.n_a(),
        "estimates": ests,
    });
    let rows = ests.into_iter().map(|e| Row::ok(0, e)).collect();
    Ok((
        Table::Estimates {
            rows,
            with_value: false,
        },
        summary,
    ))
}

fn gsa(cfg: &RunConfig, seed: u64) -> Result<(Table, Value), Failure> {
    let s = load(cfg)?;
    let grid = cfg.grid.as_ref().expect("resolved").expand().invalid()?;
    let results = run_gsa(&s, &grid, &options(cfg, seed)).map_err(analysis_failure)?;
    let mut rows = Vec::new();
    let mut items = Vec::with_capacity(results.len());
    for r in results {
        match r.result {
            Ok(ests) => {
                items.push(json!({"index": r.index, "point": r.point, "estimates": ests}));
                rows.extend(ests.into_iter().map(|e| Row::ok(r.index, e)));
            }
            Err(err) => {
                items.push(json!({"index": r.index, "point": r.point, "error": err}));
                rows.push(Row::failed(r.index, &r.point, err));
            }
        }
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = json!({
        "command": "gsa",
        "seed": seed,
        "points": grid.points.len(),
        "failed": failed,
        "results": items,
    });
    Ok((
        Table::Estimates {
            rows,
            with_value: false,
        },
        summary,
    ))
}

fn pba(cfg: &RunConfig, seed: u64) -> Result<(Table, Value), Failure> {
    let s = load(cfg)?;
    let block = cfg.pba.as_ref().expect("resolved");
    let result = run_pba(
        &s,
        &block.prior_spec(),
        &block.pba_config(seed),
        &options(cfg, seed),
    )
    .map_err(analysis_failure)?;
    let mut rows = Vec::new();
    for d in result.draws {
        match d.result {
            Ok(vals) => rows.extend(vals.into_iter().map(|v| Row {
                value: Some(v.value),
                ..Row::ok(d.index, v.estimate)
            })),
            Err(err) => rows.push(Row::failed(d.index, &d.point, err)),
        }
    }
    let summary = json!({
        "command": "pba",
        "seed": seed,
        "draws": block.draws,
        "failed": result.failed,
        "uncertainty": block.uncertainty,
        "summaries": result.summaries,
    });
    Ok((
        Table::Estimates {
            rows,
            with_value: true,
        },
        summary,
    ))
}

fn simulate(cfg: &RunConfig, seed: u64) -> Result<(Table, Value), Failure> {
    let scenarios = cfg
        .simulate
        .as_ref()
        .expect("resolved")
        .scenarios(seed)
        .invalid()?;
    let mut reports = Vec::with_capacity(scenarios.len());
    let mut items = Vec::with_capacity(scenarios.len());
    for sc in &scenarios {
        let rep = run_scenario(sc).map_err(sim_failure)?;
        items.push(json!({"label": sc.label(), "scenario": sc, "report": rep}));
        reports.push((sc.label(), rep));
    }
    let summary = json!({"command": "simulate", "seed": seed, "scenarios": items});
    Ok((Table::Report(reports), summary))
}
