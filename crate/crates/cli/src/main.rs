//! `nsbandit`: simulate paths, run experiments and sweeps, evaluate bounds,
//! estimate entropy rates and effective horizons, and emit figure data.
//!
//! Exit codes: 0 success, 1 user error, 2 numerical failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use nsbandit::env::EnvSpec;
use nsbandit::harness::{
    emit_figure_data, env_bounds, estimate_entropy, estimate_tau_eff, estimates_table, run_experiment,
    sweep, sweep_table, trace_table, BoundsOptions, Cell, ExperimentConfig, FigureId, FigureOptions, Table,
};
use nsbandit::info::{write_bounds_csv, EntropyMethod};
use nsbandit::policy::PolicyRegistry;
use nsbandit::rng::rng_from;
use nsbandit::Error;

#[derive(Parser, Debug)]
#[command(name = "nsbandit", version, about = "Nonstationary bandit simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Realize one latent path and write `t,mu_1..mu_k,opt`.
    Simulate(SimulateArgs),
    /// Run an experiment config and write one regret row per policy.
    Run(RunArgs),
    /// Run an experiment once per value of a numeric config field.
    Sweep(SweepArgs),
    /// Evaluate every applicable regret, entropy and rate-distortion bound.
    Bounds(BoundsArgs),
    /// Entropy rate of the optimal-action process.
    Entropy(EntropyArgs),
    /// Effective horizon from optimal-action switch counts.
    TauEff(TauEffArgs),
    /// Emit the data behind one figure.
    Figure(FigureArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Master seed; overrides the config's `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on parallel replications; all available cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct RunOverrides {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Horizon override.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Replication override.
    #[arg(long = "S")]
    replications: Option<usize>,
}

#[derive(Args, Debug)]
struct EnvInput {
    /// Environment spec, or an experiment config whose `env` is used.
    #[arg(long, alias = "config")]
    env: PathBuf,
    /// Horizon; the config's when absent.
    #[arg(long = "T")]
    horizon: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    input: EnvInput,
    /// Replication index whose path is drawn.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    cfg: RunOverrides,
    /// Also record per-period regret and write it here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Run-metadata sidecar; `<out>.meta.json` when absent and `--out` is set.
    #[arg(long)]
    meta_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    cfg: RunOverrides,
    /// Dotted path of a numeric field, e.g. `env.tau_id` or `policies.1.L`.
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    input: EnvInput,
    /// Sub-Gaussian reward scale; the environment's noise scale when absent.
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated distortion levels.
    #[arg(long = "D", value_delimiter = ',')]
    distortions: Option<Vec<f64>>,
    /// Paths for Monte Carlo quantities.
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    #[value(name = "closed_form")]
    ClosedForm,
    Plugin,
    #[value(name = "brute_force")]
    BruteForce,
}

#[derive(Args, Debug)]
struct EntropyArgs {
    #[command(flatten)]
    input: EnvInput,
    #[arg(long, value_enum, default_value_t = Method::Plugin)]
    method: Method,
    /// Markov order of the plug-in estimator.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 10)]
    paths: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TauEffArgs {
    #[command(flatten)]
    input: EnvInput,
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct FigureArgs {
    #[command(flatten)]
    cfg: RunOverrides,
    /// fig2_left, fig2_right, figC1, figC2, figC4 or figC5.
    #[arg(long)]
    id: String,
    /// Comma-separated grid overriding the figure default.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Paths per grid point for figC2.
    #[arg(long)]
    paths: Option<usize>,
    #[command(flatten)]
    common: Common,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numeric() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        user(e.to_string())
    }
}

fn user(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Bounds(a) => bounds(a),
        Command::Entropy(a) => entropy(a),
        Command::TauEff(a) => tau_eff(a),
        Command::Figure(a) => figure(a),
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| user(format!("{} is not valid JSON: {e}", path.display())))
}

fn load_config(o: &RunOverrides, common: &Common) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(&o.config).map_err(|e| user(format!("cannot read {}: {e}", o.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(t) = o.horizon {
        cfg.horizon = t;
    }
    if let Some(s) = o.replications {
        cfg.replications = s;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.resolved(&PolicyRegistry::default())?;
    Ok(cfg)
}

/// Policy defaults inherited from the environment or horizon are filled here,
/// so sweeps and runs keep using the unresolved config.
fn resolved(cfg: &ExperimentConfig) -> CliResult<ExperimentConfig> {
    Ok(cfg.resolved(&PolicyRegistry::default())?)
}

/// Environment, horizon and seed from a bare spec or an experiment config.
struct EnvSource {
    env: EnvSpec,
    horizon: usize,
    seed: u64,
}

fn load_env(input: &EnvInput, common: &Common) -> CliResult<EnvSource> {
    let doc = read_json(&input.env)?;
    let (env_doc, horizon, seed) = match doc.get("env") {
        Some(e) => (
            e.clone(),
            doc.get("horizon").or_else(|| doc.get("T")).and_then(Value::as_u64),
            doc.get("master_seed").and_then(Value::as_u64),
        ),
        None => (doc, None, None),
    };
    let env: EnvSpec = serde_json::from_value(env_doc).map_err(|e| user(format!("malformed environment: {e}")))?;
    env.validate()?;
    let horizon = input
        .horizon
        .or(horizon.map(|t| t as usize))
        .ok_or_else(|| user("no horizon: pass --T or use an experiment config"))?;
    let seed = common
        .seed
        .or(seed)
        .ok_or_else(|| user("no seed: pass --seed or use an experiment config with master_seed"))?;
    Ok(EnvSource { env, horizon, seed })
}

fn dry_run<T: Serialize>(resolved: &T) -> CliResult {
    let text = serde_json::to_string_pretty(resolved).map_err(|e| user(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn open_out(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| user(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_table(table: &Table, common: &Common) -> CliResult {
    emit_table_to(table, common.format, &common.out)
}

fn emit_table_to(table: &Table, format: Format, out: &Option<PathBuf>) -> CliResult {
    let mut w = open_out(out)?;
    match format {
        Format::Csv => table.write_csv(&mut w)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &table.to_json()).map_err(|e| user(e.to_string()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let src = load_env(&a.input, &a.common)?;
    if a.common.dry_run {
        return dry_run(&json!({"env": src.env, "horizon": src.horizon, "master_seed": src.seed, "index": a.index}));
    }
    let path = src.env.build(src.horizon)?.realize(&mut rng_from(src.seed, &[a.index]))?;
    match a.common.format {
        Format::Csv => {
            let mut w = open_out(&a.common.out)?;
            path.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let mut cols: Vec<String> = vec!["t".into()];
            cols.extend((1..=path.arms()).map(|i| format!("mu_{i}")));
            cols.push("opt".into());
            let mut t = Table {
                columns: cols,
                rows: vec![],
            };
            for i in 0..path.horizon() {
                let mut row: Vec<Cell> = vec![(i + 1).into()];
                row.extend(path.row(i).iter().map(|&m| Cell::Num(m)));
                row.push((path.opt()[i] + 1).into());
                t.push(row);
            }
            emit_table(&t, &a.common)
        }
    }
}

fn run(a: RunArgs) -> CliResult {
    let mut cfg = load_config(&a.cfg, &a.common)?;
    if a.trace_out.is_some() {
        cfg.trace = true;
    }
    if a.common.dry_run {
        return dry_run(&resolved(&cfg)?);
    }
    let out = run_experiment(&cfg, a.common.threads)?;
    emit_table(&estimates_table(&out.estimates), &a.common)?;
    if let Some(p) = &a.trace_out {
        emit_table_to(&trace_table(&out.estimates), a.common.format, &Some(p.clone()))?;
    }
    let meta = a.meta_out.clone().or_else(|| {
        a.common.out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".meta.json");
            PathBuf::from(s)
        })
    });
    if let Some(p) = meta {
        let text = serde_json::to_string_pretty(&out.metadata).map_err(|e| user(e.to_string()))?;
        fs::write(&p, text + "\n").map_err(|e| user(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> CliResult {
    let cfg = load_config(&a.cfg, &a.common)?;
    for &v in &a.values {
        resolved(&cfg.with_field(&a.axis, v)?)?;
    }
    if a.common.dry_run {
        return dry_run(&json!({"base": resolved(&cfg)?, "axis": a.axis, "values": a.values}));
    }
    let pts = sweep(&cfg, &a.axis, &a.values, a.common.threads)?;
    emit_table(&sweep_table(&a.axis, &pts), &a.common)
}

fn bounds(a: BoundsArgs) -> CliResult {
    let src = load_env(&a.input, &a.common)?;
    let mut opts = BoundsOptions::new(src.horizon);
    opts.sigma = a.sigma;
    if let Some(d) = a.distortions {
        opts.distortions = d;
    }
    opts.paths = a.paths;
    opts.master_seed = src.seed;
    opts.threads = a.common.threads;
    if a.common.dry_run {
        return dry_run(&json!({
            "env": src.env, "horizon": src.horizon, "sigma": a.sigma.unwrap_or(src.env.reward_model().sigma()),
            "D": opts.distortions, "paths": opts.paths, "master_seed": src.seed,
        }));
    }
    let rows = env_bounds(&src.env, &opts)?;
    let mut w = open_out(&a.common.out)?;
    match a.common.format {
        Format::Csv => write_bounds_csv(&rows, &mut w)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &rows).map_err(|e| user(e.to_string()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn entropy(a: EntropyArgs) -> CliResult {
    let src = load_env(&a.input, &a.common)?;
    let method = match a.method {
        Method::ClosedForm => EntropyMethod::ClosedForm,
        Method::Plugin => EntropyMethod::Plugin,
        Method::BruteForce => EntropyMethod::BruteForce,
    };
    if a.common.dry_run {
        return dry_run(&json!({
            "env": src.env, "horizon": src.horizon, "method": method, "order": a.order,
            "paths": a.paths, "master_seed": src.seed,
        }));
    }
    let r = estimate_entropy(&src.env, method, a.order, a.paths, src.horizon, src.seed, a.common.threads)?;
    let mut t = Table::new(&["method", "order", "entropy_rate_nats", "stderr", "sparse", "approximate"]);
    let e = &r.estimate;
    let method_name = serde_json::to_value(e.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    t.push(vec![
        method_name.into(),
        e.order.map_or(Cell::Text(String::new()), Cell::from),
        e.value.into(),
        e.stderr.map_or(Cell::Text(String::new()), Cell::from),
        usize::from(e.sparse).into(),
        usize::from(r.approximate).into(),
    ]);
    emit_table(&t, &a.common)
}

fn tau_eff(a: TauEffArgs) -> CliResult {
    let src = load_env(&a.input, &a.common)?;
    if a.common.dry_run {
        return dry_run(&json!({"env": src.env, "horizon": src.horizon, "paths": a.paths, "master_seed": src.seed}));
    }
    let est = estimate_tau_eff(&src.env, src.horizon, a.paths, src.seed, a.common.threads)?;
    let mut t = Table::new(&["tau_eff", "censored", "switches", "paths", "T"]);
    t.push(vec![
        est.value.into(),
        usize::from(est.censored).into(),
        Cell::Int(est.switches as i64),
        est.paths.into(),
        est.horizon.into(),
    ]);
    emit_table(&t, &a.common)
}

fn figure(a: FigureArgs) -> CliResult {
    let id = FigureId::parse(&a.id)?;
    let cfg = load_config(&a.cfg, &a.common)?;
    let opts = FigureOptions {
        values: a.values.clone(),
        paths: a.paths,
        threads: a.common.threads,
    };
    if a.common.dry_run {
        return dry_run(&json!({
            "config": resolved(&cfg)?, "figure": id.name(), "values": opts.values.clone().unwrap_or_else(|| id.default_grid()),
            "paths": opts.paths.unwrap_or(cfg.replications),
        }));
    }
    emit_table(&emit_figure_data(&cfg, id, &opts)?, &a.common)
}
