//! Monte Carlo experiment orchestration.
//!
//! Replication `s` realizes one latent path from `seed(master, s)`; every
//! policy plays that same path with its own reward-noise stream
//! `seed(master, s, hash(id), 1)` and decision stream `seed(master, s, hash(id), 2)`.
//! Replications run in parallel and are reduced in index order, so results
//! do not depend on the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::env::{draw_reward, instantaneous_regret, EnvSpec, Environment, LatentPath, RewardModel};
use crate::error::{ensure, invalid, Error, Result};
use crate::info::{
    combinatorial_entropy_bound, effective_horizon_bound, entropy_rate_bruteforce, entropy_rate_markov_switch,
    entropy_rate_plugin, markov_switch_path_law, news_effective_horizon, rate_distortion_bound,
    regret_bound_fullinfo, regret_bound_karmed, regret_bound_sts, regret_bound_variation,
    rice_effective_horizon, variation_budget, BoundReport, EntropyEstimate, EntropyMethod, ProblemClass,
};
use crate::latent::{GpSampler, Kernel, SeKernel};
use crate::policy::{Policy, PolicyContext, PolicyFactory, PolicyRegistry, PolicySpec};
use crate::rng::{rng_from, stable_hash, SimRng};

const NOISE_STREAM: u64 = 1;
const DECISION_STREAM: u64 = 2;

/// Largest tolerated share of failed replications per policy.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub policies: Vec<PolicySpec>,
    #[serde(alias = "T")]
    pub horizon: usize,
    #[serde(alias = "S")]
    pub replications: usize,
    pub master_seed: u64,
    /// Record per-period instantaneous regret averages.
    #[serde(default)]
    pub trace: bool,
}

impl ExperimentConfig {
    pub fn context(&self) -> PolicyContext {
        PolicyContext {
            env: self.env.clone(),
            horizon: self.horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.horizon >= 1, || "horizon T must be at least 1".into())?;
        ensure(self.replications >= 1, || "replications S must be at least 1".into())?;
        ensure(!self.policies.is_empty(), || "at least one policy is required".into())?;
        self.env.validate()
    }

    /// Validates and builds one factory per policy; ids must be distinct.
    pub fn factories(&self, registry: &PolicyRegistry) -> Result<Vec<PolicyFactory>> {
        self.validate()?;
        let ctx = self.context();
        let fs = self
            .policies
            .iter()
            .map(|p| registry.build(p, &ctx))
            .collect::<Result<Vec<_>>>()?;
        for (i, f) in fs.iter().enumerate() {
            if fs[..i].iter().any(|g| g.id() == f.id()) {
                return Err(Error::Config(format!("duplicate policy id `{}`", f.id())));
            }
        }
        Ok(fs)
    }

    /// The config with every default made explicit.
    pub fn resolved(&self, registry: &PolicyRegistry) -> Result<Self> {
        let fs = self.factories(registry)?;
        Ok(Self {
            policies: fs.iter().map(|f| f.resolved().clone()).collect(),
            ..self.clone()
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed experiment config: {e}")))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Returns a copy with the numeric field at a dotted path replaced,
    /// e.g. `env.tau_id` or `policies.1.L`.
    pub fn with_field(&self, path: &str, value: f64) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let mut cur = &mut doc;
        for part in path.split('.') {
            cur = match cur {
                Value::Object(m) => m.get_mut(part),
                Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::Config(format!("unknown axis path `{path}`")))?;
        }
        *cur = match cur {
            Value::Number(n) if n.is_f64() => json_f64(value)?,
            Value::Number(_) => {
                ensure(value >= 0.0 && value.fract() == 0.0 && value < 9.0e15, || {
                    format!("axis `{path}` is an integer field, got {value}")
                })?;
                Value::from(value as u64)
            }
            _ => return Err(Error::Config(format!("axis path `{path}` is not a numeric field"))),
        };
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("axis `{path}` = {value}: {e}")))
    }
}

fn json_f64(x: f64) -> Result<Value> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| invalid(format!("non-finite value {x}")))
}

/// Per-period regret of one policy across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretEstimate {
    pub policy: String,
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub stderr: f64,
    pub n: usize,
    pub excluded: usize,
    /// Average instantaneous regret per period over included replications.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRunInfo {
    pub id: String,
    pub spec: PolicySpec,
    pub excluded: usize,
    pub first_failure: Option<String>,
}

/// Sidecar describing how a run was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub master_seed: u64,
    pub horizon: usize,
    pub replications: usize,
    pub seed_rule: String,
    pub env: EnvSpec,
    pub env_jitter: f64,
    pub policies: Vec<PolicyRunInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub estimates: Vec<RegretEstimate>,
    pub metadata: RunMetadata,
}

/// Plays one policy through a path and returns its actions.
pub fn play(
    path: &LatentPath,
    model: &RewardModel,
    policy: &mut dyn Policy,
    noise: &mut SimRng,
    decisions: &mut SimRng,
) -> Result<Vec<usize>> {
    let k = path.arms();
    let mut actions = Vec::with_capacity(path.horizon());
    for t in 0..path.horizon() {
        let a = policy.act(t, decisions)?;
        ensure(a < k, || format!("policy `{}` chose arm {a} of {k}", policy.id()))?;
        let r = draw_reward(path, model, t, a, noise)?;
        policy.observe(t, a, r)?;
        actions.push(a);
    }
    Ok(actions)
}

/// Outcome of one policy in one replication; `Err` holds a numeric failure.
type Outcome = std::result::Result<Vec<f64>, String>;

fn replicate(
    env: &dyn Environment,
    factories: &[PolicyFactory],
    master: u64,
    s: u64,
) -> Result<Vec<Outcome>> {
    let path = match env.realize(&mut rng_from(master, &[s])) {
        Ok(p) => p,
        Err(e) if e.is_numeric() => return Ok(vec![Err(format!("path {s}: {e}")); factories.len()]),
        Err(e) => return Err(e),
    };
    let model = env.reward_model();
    factories
        .iter()
        .map(|f| {
            let h = stable_hash(f.id());
            let mut noise = rng_from(master, &[s, h, NOISE_STREAM]);
            let mut decisions = rng_from(master, &[s, h, DECISION_STREAM]);
            let mut policy = f.create();
            match play(&path, &model, policy.as_mut(), &mut noise, &mut decisions) {
                Ok(actions) => Ok(Ok(instantaneous_regret(&path, &actions)?)),
                Err(e) if e.is_numeric() => Ok(Err(format!("replication {s}: {e}"))),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            ensure(n >= 1, || "thread count must be at least 1".into())?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Mean and standard error in index order.
fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs with the default policy registry.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    run_experiment_with(cfg, &PolicyRegistry::default(), threads)
}

/// `threads = None` uses the ambient rayon pool.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    registry: &PolicyRegistry,
    threads: Option<usize>,
) -> Result<RunOutput> {
    let factories = cfg.factories(registry)?;
    let env = cfg.env.build(cfg.horizon)?;
    let master = cfg.master_seed;
    let reps: Vec<Vec<Outcome>> = with_threads(threads, || {
        (0..cfg.replications as u64)
            .into_par_iter()
            .map(|s| replicate(env.as_ref(), &factories, master, s))
            .collect::<Result<Vec<_>>>()
    })??;

    let total = cfg.replications;
    let mut estimates = Vec::with_capacity(factories.len());
    let mut infos = Vec::with_capacity(factories.len());
    for (j, f) in factories.iter().enumerate() {
        let mut per_rep = Vec::with_capacity(total);
        let mut trace = cfg.trace.then(|| vec![0.0; cfg.horizon]);
        let mut excluded = 0;
        let mut first_failure = None;
        for rep in &reps {
            match &rep[j] {
                Ok(inst) => {
                    per_rep.push(inst.iter().sum::<f64>() / cfg.horizon as f64);
                    if let Some(tr) = trace.as_mut() {
                        tr.iter_mut().zip(inst).for_each(|(a, x)| *a += x);
                    }
                }
                Err(msg) => {
                    excluded += 1;
                    first_failure.get_or_insert_with(|| msg.clone());
                }
            }
        }
        if excluded as f64 > MAX_EXCLUDED_FRACTION * total as f64 || per_rep.is_empty() {
            return Err(Error::TooManyFailures {
                excluded,
                total,
                first: format!("{}: {}", f.id(), first_failure.unwrap_or_default()),
            });
        }
        let n = per_rep.len();
        if let Some(tr) = trace.as_mut() {
            tr.iter_mut().for_each(|a| *a /= n as f64);
        }
        let (mean, stderr) = mean_stderr(&per_rep);
        estimates.push(RegretEstimate {
            policy: f.id().to_string(),
            mean,
            stderr,
            n,
            excluded,
            trace,
        });
        infos.push(PolicyRunInfo {
            id: f.id().to_string(),
            spec: f.resolved().clone(),
            excluded,
            first_failure,
        });
    }

    Ok(RunOutput {
        estimates,
        metadata: RunMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: master,
            horizon: cfg.horizon,
            replications: total,
            seed_rule: "path s: splitmix64 chain over (master_seed, s); policy p in path s: \
                        (master_seed, s, fnv1a64(id), 1) for reward noise and (.., 2) for decisions"
                .to_string(),
            env: cfg.env.clone(),
            env_jitter: env.jitter(),
            policies: infos,
        },
    })
}

/// One cell of an output table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Long-format table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.columns)?;
        for r in &self.rows {
            wtr.write_record(r.iter().map(|c| c.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Rows as an array of objects.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.columns
                            .iter()
                            .cloned()
                            .zip(r.iter().map(Cell::to_json))
                            .collect::<Map<_, _>>(),
                    )
                })
                .collect(),
        )
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
    }
}

/// `policy,mean,stderr,n,excluded`.
pub fn estimates_table(estimates: &[RegretEstimate]) -> Table {
    let mut t = Table::new(&["policy", "mean", "stderr", "n", "excluded"]);
    for e in estimates {
        t.push(vec![e.policy.clone().into(), e.mean.into(), e.stderr.into(), e.n.into(), e.excluded.into()]);
    }
    t
}

/// `t,policy,instantaneous_regret` with 1-based `t`; policies without a trace are skipped.
pub fn trace_table(estimates: &[RegretEstimate]) -> Table {
    let mut t = Table::new(&["t", "policy", "instantaneous_regret"]);
    for e in estimates {
        if let Some(tr) = &e.trace {
            for (i, x) in tr.iter().enumerate() {
                t.push(vec![(i + 1).into(), e.policy.clone().into(), (*x).into()]);
            }
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub output: RunOutput,
}

/// One experiment per axis value, all with the base config's master seed.
pub fn sweep(base: &ExperimentConfig, axis: &str, values: &[f64], threads: Option<usize>) -> Result<Vec<SweepPoint>> {
    ensure(!values.is_empty(), || "sweep needs at least one value".into())?;
    let cfgs = values
        .iter()
        .map(|&v| base.with_field(axis, v))
        .collect::<Result<Vec<_>>>()?;
    values
        .iter()
        .zip(&cfgs)
        .map(|(&value, cfg)| {
            Ok(SweepPoint {
                value,
                output: run_experiment(cfg, threads)?,
            })
        })
        .collect()
}

/// `<axis>,policy,mean,stderr,n,excluded`.
pub fn sweep_table(axis: &str, points: &[SweepPoint]) -> Table {
    let mut t = Table::new(&[axis, "policy", "mean", "stderr", "n", "excluded"]);
    for p in points {
        for e in &p.output.estimates {
            t.push(vec![
                p.value.into(),
                e.policy.clone().into(),
                e.mean.into(),
                e.stderr.into(),
                e.n.into(),
                e.excluded.into(),
            ]);
        }
    }
    t
}

/// Effective horizon estimated from optimal-action switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEffEstimate {
    /// `(T-1) S / switches`, or `T` when censored.
    pub value: f64,
    /// No switch was observed.
    pub censored: bool,
    pub switches: u64,
    pub paths: usize,
    pub horizon: usize,
}

fn opt_paths(env: &EnvSpec, horizon: usize, paths: usize, master: u64, threads: Option<usize>) -> Result<Vec<Vec<usize>>> {
    ensure(paths >= 1, || "need at least one path".into())?;
    let env = env.build(horizon)?;
    with_threads(threads, || {
        (0..paths as u64)
            .into_par_iter()
            .map(|s| Ok(env.realize(&mut rng_from(master, &[s]))?.opt().to_vec()))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Paths are seeded exactly like experiment replications.
pub fn estimate_tau_eff(
    env: &EnvSpec,
    horizon: usize,
    paths: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<TauEffEstimate> {
    ensure(horizon >= 2, || "switch counting needs T of at least 2".into())?;
    let seqs = opt_paths(env, horizon, paths, master_seed, threads)?;
    let switches: u64 = seqs
        .iter()
        .map(|p| p.windows(2).filter(|w| w[0] != w[1]).count() as u64)
        .sum();
    let censored = switches == 0;
    let value = if censored {
        horizon as f64
    } else {
        ((horizon - 1) * paths) as f64 / switches as f64
    };
    Ok(TauEffEstimate {
        value,
        censored,
        switches,
        paths,
        horizon,
    })
}

/// Monte Carlo mean of the pathwise variation budget.
pub fn mean_variation_budget(
    env: &EnvSpec,
    horizon: usize,
    paths: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<f64> {
    ensure(paths >= 1, || "need at least one path".into())?;
    let built = env.build(horizon)?;
    let vs = with_threads(threads, || {
        (0..paths as u64)
            .into_par_iter()
            .map(|s| variation_budget(&built.realize(&mut rng_from(master_seed, &[s]))?))
            .collect::<Result<Vec<f64>>>()
    })??;
    Ok(vs.iter().sum::<f64>() / paths as f64)
}

/// Entropy rate of the optimal-action process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub env: EnvSpec,
    pub horizon: usize,
    pub estimate: EntropyEstimate,
    /// The optimal-action process is not Markov of the estimator's order.
    pub approximate: bool,
}

/// Closed form and brute force exist only for the switching chain.
pub fn estimate_entropy(
    env: &EnvSpec,
    method: EntropyMethod,
    order: usize,
    paths: usize,
    horizon: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<EntropyReport> {
    env.validate()?;
    let markov = match *env {
        EnvSpec::MarkovSwitch { k, delta, .. } => Some((k, delta)),
        _ => None,
    };
    let no_closed = || Error::Config(format!("no {method:?} entropy rate for `{}`", env.kind()));
    let (estimate, approximate) = match method {
        EntropyMethod::ClosedForm => {
            let (k, delta) = markov.ok_or_else(no_closed)?;
            (EntropyEstimate::closed_form(entropy_rate_markov_switch(k, delta)?), false)
        }
        EntropyMethod::BruteForce => {
            let (k, delta) = markov.ok_or_else(no_closed)?;
            let states = (k as f64).powi(horizon as i32);
            ensure(states <= 2.0e6, || format!("{k}^{horizon} paths are too many to enumerate"))?;
            let law = markov_switch_path_law(k, delta, horizon)?;
            let mut e = EntropyEstimate::closed_form(entropy_rate_bruteforce(&law)?);
            e.method = EntropyMethod::BruteForce;
            (e, false)
        }
        EntropyMethod::Plugin => {
            let seqs = opt_paths(env, horizon, paths, master_seed, threads)?;
            let first_order_markov = matches!(env, EnvSpec::MarkovSwitch { .. } | EnvSpec::RenewalLb { .. });
            (entropy_rate_plugin(&seqs, order)?, !(first_order_markov && order >= 1))
        }
    };
    Ok(EntropyReport {
        env: env.clone(),
        horizon,
        estimate,
        approximate,
    })
}

/// Inputs for [`env_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOptions {
    pub horizon: usize,
    /// Sub-Gaussian scale; the environment's noise scale when absent.
    pub sigma: Option<f64>,
    pub distortions: Vec<f64>,
    /// Paths for quantities without a closed form.
    pub paths: usize,
    pub master_seed: u64,
    pub threads: Option<usize>,
}

impl BoundsOptions {
    pub const DEFAULT_DISTORTIONS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];

    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            sigma: None,
            distortions: Self::DEFAULT_DISTORTIONS.to_vec(),
            paths: 100,
            master_seed: 0,
            threads: None,
        }
    }
}

/// Every closed-form bound that applies to an environment.
///
/// The effective horizon is closed form where one exists and a switch-count
/// estimate otherwise; the variation budget is always a Monte Carlo mean.
pub fn env_bounds(env: &EnvSpec, opts: &BoundsOptions) -> Result<Vec<BoundReport>> {
    env.validate()?;
    let t = opts.horizon;
    ensure(t >= 2, || "bounds need T of at least 2".into())?;
    let tf = t as f64;
    let k = env.arms();
    let kf = k as f64;
    let sigma = opts.sigma.unwrap_or_else(|| env.reward_model().sigma());
    ensure(sigma > 0.0 && sigma.is_finite(), || format!("sigma must be positive, got {sigma}"))?;
    let mut out = Vec::new();

    let tau = match *env {
        EnvSpec::GpTwoType { k: 2, tau_id, .. } => {
            let v = rice_effective_horizon(tau_id)?;
            out.push(BoundReport::new("tau_eff_rice", v, &[("tau_id", tau_id)]));
            v
        }
        EnvSpec::MarkovSwitch { delta, .. } => {
            let v = 1.0 / delta;
            out.push(BoundReport::new("tau_eff_markov", v, &[("delta", delta)]));
            v
        }
        EnvSpec::RenewalLb { tau_eff, .. } => {
            out.push(BoundReport::new("tau_eff_renewal", tau_eff, &[]));
            tau_eff
        }
        EnvSpec::ArticlePool { k, tau, .. } => {
            let v = news_effective_horizon(k, tau)?;
            out.push(BoundReport::new("tau_eff_article_pool", v, &[("k", k as f64), ("tau", tau)]));
            v
        }
        _ => {
            let est = estimate_tau_eff(env, t, opts.paths, opts.master_seed, opts.threads)?;
            out.push(BoundReport::new(
                "tau_eff_mc",
                est.value,
                &[
                    ("paths", opts.paths as f64),
                    ("switches", est.switches as f64),
                    ("censored", if est.censored { 1.0 } else { 0.0 }),
                ],
            ));
            est.value
        }
    }
    .max(1.0);

    let h_cond = (kf - 1.0).ln();
    let h_first = kf.ln();
    let h_eff = effective_horizon_bound(tau, h_cond, h_first, tf)?;
    out.push(BoundReport::new(
        "entropy_effective_horizon",
        h_eff,
        &[("tau_eff", tau), ("h_cond", h_cond), ("h_first", h_first), ("T", tf)],
    ));
    let s_bar = ((1.0 + (tf - 1.0) / tau) / tf).min(1.0);
    let h_switch = combinatorial_entropy_bound(s_bar, tf, k)?;
    out.push(BoundReport::new(
        "entropy_switch_rate",
        h_switch,
        &[("switch_rate", s_bar), ("T", tf), ("k", kf)],
    ));
    let mut h = h_eff.min(h_switch).min(h_first);
    if let EnvSpec::MarkovSwitch { delta, .. } = *env {
        let exact = entropy_rate_markov_switch(k, delta)?;
        out.push(BoundReport::new("entropy_markov_closed_form", exact, &[("delta", delta), ("k", kf)]));
        h = h.min(exact);
    }

    out.push(BoundReport::new(
        "regret_karmed",
        regret_bound_karmed(sigma, k, h)?,
        &[("sigma", sigma), ("k", kf), ("entropy_rate", h)],
    ));
    out.push(BoundReport::new(
        "regret_fullinfo",
        regret_bound_fullinfo(sigma, h)?,
        &[("sigma", sigma), ("entropy_rate", h)],
    ));

    let v_bar = mean_variation_budget(env, t, opts.paths, opts.master_seed, opts.threads)?;
    out.push(BoundReport::new("variation_budget", v_bar, &[("paths", opts.paths as f64), ("T", tf)]));
    let gamma = ProblemClass::KArmed { k }.gamma(sigma);
    for &d in &opts.distortions {
        let rate = rate_distortion_bound(v_bar, d, tf, k)?;
        out.push(BoundReport::new(
            "rate_distortion",
            rate,
            &[("D", d), ("variation_budget", v_bar), ("T", tf), ("k", kf)],
        ));
        out.push(BoundReport::new(
            "regret_satisficing",
            d + regret_bound_sts(gamma, rate)?,
            &[("D", d), ("gamma", gamma), ("rate", rate)],
        ));
    }
    out.push(BoundReport::new(
        "regret_variation",
        regret_bound_variation(gamma, v_bar, k, tf)?,
        &[("gamma", gamma), ("variation_budget", v_bar), ("k", kf), ("T", tf)],
    ));
    Ok(out)
}

/// Figures with emitted data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    /// Regret against `tau_id`, one row per (value, policy).
    Fig2Left,
    /// Regret against `tau_cm`.
    Fig2Right,
    /// One sample path split into common and idiosyncratic parts.
    FigC1,
    /// Estimated and Rice effective horizons against `tau_id`.
    FigC2,
    /// Instantaneous regret per period.
    FigC4,
    /// `Fig2Left` with the entropy regret bound per value.
    FigC5,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [
        FigureId::Fig2Left,
        FigureId::Fig2Right,
        FigureId::FigC1,
        FigureId::FigC2,
        FigureId::FigC4,
        FigureId::FigC5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FigureId::Fig2Left => "fig2_left",
            FigureId::Fig2Right => "fig2_right",
            FigureId::FigC1 => "figC1",
            FigureId::FigC2 => "figC2",
            FigureId::FigC4 => "figC4",
            FigureId::FigC5 => "figC5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown figure id `{s}` (known: {})", known.join(", ")))
            })
    }

    /// Default grid for sweep figures; a reconstruction around 10, 50, 100.
    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            FigureId::Fig2Left | FigureId::Fig2Right | FigureId::FigC5 => vec![10.0, 25.0, 50.0, 75.0, 100.0],
            FigureId::FigC2 => std::iter::once(1.0).chain((1..=20).map(|i| 5.0 * i as f64)).collect(),
            FigureId::FigC1 | FigureId::FigC4 => vec![],
        }
    }
}

/// Options for [`emit_figure_data`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FigureOptions {
    /// Overrides the figure's default grid.
    pub values: Option<Vec<f64>>,
    /// Paths per grid point for `figC2`; the config's replications when absent.
    pub paths: Option<usize>,
    pub threads: Option<usize>,
}

fn tau_fields(env: &EnvSpec) -> Result<(f64, f64)> {
    match *env {
        EnvSpec::GpTwoType { tau_cm, tau_id, .. } => Ok((tau_cm, tau_id)),
        _ => Err(Error::Config(format!(
            "this figure needs a gp_two_type environment, got `{}`",
            env.kind()
        ))),
    }
}

/// Figure data as a long-format table; deterministic given the config.
pub fn emit_figure_data(cfg: &ExperimentConfig, figure: FigureId, opts: &FigureOptions) -> Result<Table> {
    let grid = opts.values.clone().unwrap_or_else(|| figure.default_grid());
    match figure {
        FigureId::Fig2Left | FigureId::Fig2Right => {
            tau_fields(&cfg.env)?;
            let axis = if figure == FigureId::Fig2Left { "env.tau_id" } else { "env.tau_cm" };
            let pts = sweep(cfg, axis, &grid, opts.threads)?;
            Ok(sweep_table(axis.trim_start_matches("env."), &pts))
        }
        FigureId::FigC5 => {
            tau_fields(&cfg.env)?;
            let pts = sweep(cfg, "env.tau_id", &grid, opts.threads)?;
            let mut t = Table::new(&["tau_id", "policy", "mean", "stderr", "n", "regret_bound"]);
            let k = cfg.env.arms();
            let sigma = cfg.env.reward_model().sigma();
            for p in &pts {
                let tau = rice_effective_horizon(p.value)?;
                let h = effective_horizon_bound(tau, ((k - 1) as f64).ln(), (k as f64).ln(), cfg.horizon as f64)?;
                let bound = regret_bound_karmed(sigma, k, h)?;
                for e in &p.output.estimates {
                    t.push(vec![
                        p.value.into(),
                        e.policy.clone().into(),
                        e.mean.into(),
                        e.stderr.into(),
                        e.n.into(),
                        bound.into(),
                    ]);
                }
            }
            Ok(t)
        }
        FigureId::FigC1 => sample_path_components(&cfg.env, cfg.horizon, cfg.master_seed),
        FigureId::FigC2 => {
            let paths = opts.paths.unwrap_or(cfg.replications);
            let mut t = Table::new(&["tau_id", "tau_eff_hat", "tau_eff_rice", "censored"]);
            for &tau_id in &grid {
                let env = with_env_field(&cfg.env, "tau_id", tau_id)?;
                let est = estimate_tau_eff(&env, cfg.horizon, paths, cfg.master_seed, opts.threads)?;
                t.push(vec![
                    tau_id.into(),
                    est.value.into(),
                    rice_effective_horizon(tau_id)?.into(),
                    usize::from(est.censored).into(),
                ]);
            }
            Ok(t)
        }
        FigureId::FigC4 => {
            let cfg = ExperimentConfig {
                trace: true,
                ..cfg.clone()
            };
            Ok(trace_table(&run_experiment(&cfg, opts.threads)?.estimates))
        }
    }
}

fn with_env_field(env: &EnvSpec, field: &str, value: f64) -> Result<EnvSpec> {
    let mut doc = serde_json::to_value(env)?;
    let slot = doc
        .get_mut(field)
        .ok_or_else(|| Error::Config(format!("environment `{}` has no field `{field}`", env.kind())))?;
    *slot = json_f64(value)?;
    serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
}

/// `t,common,idio_1..idio_k,mu_1..mu_k,opt` for one two-type path, with
/// 1-based `t` and `opt`. Uses the same draws as replication 0.
pub fn sample_path_components(env: &EnvSpec, horizon: usize, master_seed: u64) -> Result<Table> {
    let (tau_cm, tau_id) = tau_fields(env)?;
    env.validate()?;
    let k = env.arms();
    let common_s = GpSampler::new(Kernel::SquaredExponential(SeKernel::unit(tau_cm)?), horizon)?;
    let idio_s = GpSampler::new(Kernel::SquaredExponential(SeKernel::unit(tau_id)?), horizon)?;
    let mut rng = rng_from(master_seed, &[0]);
    let idio: Vec<Vec<f64>> = (0..k).map(|_| idio_s.sample(&mut rng)).collect();
    let common = common_s.sample(&mut rng);

    let mut cols = vec!["t".to_string(), "common".to_string()];
    cols.extend((1..=k).map(|a| format!("idio_{a}")));
    cols.extend((1..=k).map(|a| format!("mu_{a}")));
    cols.push("opt".into());
    let mut table = Table {
        columns: cols,
        rows: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let mu: Vec<f64> = (0..k).map(|a| common[t] + idio[a][t]).collect();
        let mut row: Vec<Cell> = vec![(t + 1).into(), common[t].into()];
        row.extend((0..k).map(|a| Cell::Num(idio[a][t])));
        row.extend(mu.iter().map(|&m| Cell::Num(m)));
        row.push((crate::env::argmax(&mu) + 1).into());
        table.push(row);
    }
    Ok(table)
}
