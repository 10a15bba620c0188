//! Switch rates, entropy rates of action sequences, effective horizons and
//! the closed-form regret and rate-distortion bounds built from them.
//!
//! Entropies are in nats. `0 · ln 0` is taken as 0 throughout.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::env::LatentPath;
use crate::error::{ensure, Error, Result};
use crate::rng::rng_from;

/// `x ln(1/x)` with the `0 ln 0 = 0` convention.
fn plogp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

fn changes(seq: &[usize]) -> usize {
    seq.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `(1 + #changes) / T`.
pub fn switch_rate(seq: &[usize]) -> Result<f64> {
    ensure(!seq.is_empty(), || "switch rate of an empty sequence".into())?;
    Ok((1 + changes(seq)) as f64 / seq.len() as f64)
}

/// Entropy rate of the stationary chain that keeps its state with
/// probability `1-δ` and otherwise jumps uniformly to one of `k-1` others.
pub fn entropy_rate_markov_switch(k: usize, delta: f64) -> Result<f64> {
    ensure(k >= 2, || format!("need at least 2 arms, got {k}"))?;
    ensure((0.0..=1.0).contains(&delta), || format!("delta must lie in [0,1], got {delta}"))?;
    let jump = if delta > 0.0 { delta * ((k - 1) as f64 / delta).ln() } else { 0.0 };
    Ok(plogp(1.0 - delta) + jump)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    ClosedForm,
    Plugin,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Nats per period.
    pub value: f64,
    pub method: EntropyMethod,
    /// Markov order of the plug-in estimator.
    pub order: Option<usize>,
    /// Bootstrap standard error of the plug-in estimator.
    pub stderr: Option<f64>,
    /// Fewer than 10 transitions per observed context on average.
    pub sparse: bool,
}

impl EntropyEstimate {
    pub fn closed_form(value: f64) -> Self {
        Self {
            value,
            method: EntropyMethod::ClosedForm,
            order: None,
            stderr: None,
            sparse: false,
        }
    }
}

/// Transition counts keyed by (context code, next symbol).
type Counts = HashMap<(u64, usize), u64>;

fn count_transitions(seq: &[usize], order: usize, base: u64) -> Counts {
    let mut counts = Counts::new();
    if seq.len() <= order {
        return counts;
    }
    let modulus = base.pow(order as u32);
    let mut ctx = 0u64;
    for &s in &seq[..order] {
        ctx = ctx * base + s as u64;
    }
    for &s in &seq[order..] {
        *counts.entry((ctx, s)).or_insert(0) += 1;
        if order > 0 {
            ctx = (ctx * base + s as u64) % modulus;
        }
    }
    counts
}

/// Conditional entropy of the next symbol given the context, from pooled
/// counts weighted by path multiplicities, plus the distinct-context count.
fn conditional_entropy(tables: &[Counts], weights: &[u64]) -> (f64, usize) {
    let mut pooled: BTreeMap<(u64, usize), u64> = BTreeMap::new();
    for (table, &w) in tables.iter().zip(weights) {
        if w == 0 {
            continue;
        }
        for (&key, &c) in table {
            *pooled.entry(key).or_insert(0) += c * w;
        }
    }
    let mut ctx_total: BTreeMap<u64, u64> = BTreeMap::new();
    for (&(ctx, _), &c) in &pooled {
        *ctx_total.entry(ctx).or_insert(0) += c;
    }
    let n: u64 = ctx_total.values().sum();
    if n == 0 {
        return (0.0, 0);
    }
    let h = pooled
        .iter()
        .map(|(&(ctx, _), &c)| {
            let nc = ctx_total[&ctx] as f64;
            (c as f64 / n as f64) * (nc / c as f64).ln()
        })
        .sum::<f64>();
    (h.max(0.0), ctx_total.len())
}

const BOOTSTRAP_REPLICATES: usize = 200;
const BOOTSTRAP_SEED: u64 = 0x5eed_0f_b007;

/// Plug-in entropy rate `Ĥ(X_t | X_{t-order}, …, X_{t-1})` from counts pooled
/// over all paths, with a bootstrap-over-paths standard error.
pub fn entropy_rate_plugin(paths: &[Vec<usize>], order: usize) -> Result<EntropyEstimate> {
    ensure(!paths.is_empty(), || "need at least one path".into())?;
    let len = paths[0].len();
    ensure(paths.iter().all(|p| p.len() == len), || "paths must have equal length".into())?;
    ensure(len > order, || format!("paths of length {len} are too short for order {order}"))?;
    let base = paths.iter().flatten().copied().max().unwrap_or(0) as u64 + 1;
    ensure((order as f64) * (base as f64).log2() < 62.0, || {
        format!("order {order} with {base} symbols is too large to encode")
    })?;

    let tables: Vec<Counts> = paths.par_iter().map(|p| count_transitions(p, order, base)).collect();
    let s = paths.len();
    let ones = vec![1u64; s];
    let (value, contexts) = conditional_entropy(&tables, &ones);

    let mut rng = rng_from(BOOTSTRAP_SEED, &[s as u64, len as u64, order as u64]);
    let reps: Vec<f64> = (0..BOOTSTRAP_REPLICATES)
        .map(|_| {
            let mut w = vec![0u64; s];
            for _ in 0..s {
                w[rng.random_range(0..s)] += 1;
            }
            conditional_entropy(&tables, &w).0
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;

    let transitions = (s * (len - order)) as f64;
    Ok(EntropyEstimate {
        value,
        method: EntropyMethod::Plugin,
        order: Some(order),
        stderr: Some(var.sqrt()),
        sparse: contexts > 0 && transitions / (contexts as f64) < 10.0,
    })
}

/// `H(X_1..X_T) / T` for an explicitly enumerated path law.
pub fn entropy_rate_bruteforce(law: &[(Vec<usize>, f64)]) -> Result<f64> {
    ensure(!law.is_empty(), || "path law is empty".into())?;
    let len = law[0].0.len();
    ensure(len >= 1, || "paths must be non-empty".into())?;
    ensure(law.iter().all(|(p, _)| p.len() == len), || "paths must have equal length".into())?;
    ensure(law.iter().all(|(_, q)| *q >= 0.0 && q.is_finite()), || {
        "probabilities must be finite and non-negative".into()
    })?;
    let total: f64 = law.iter().map(|(_, q)| q).sum();
    ensure((total - 1.0).abs() <= 1e-9, || format!("probabilities sum to {total}, not 1"))?;
    Ok(law.iter().map(|(_, q)| plogp(*q)).sum::<f64>() / len as f64)
}

/// Every length-`T` path of the switching chain with its probability.
pub fn markov_switch_path_law(k: usize, delta: f64, horizon: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    ensure(k >= 2, || format!("need at least 2 arms, got {k}"))?;
    ensure((0.0..=1.0).contains(&delta), || format!("delta must lie in [0,1], got {delta}"))?;
    ensure(horizon >= 1, || "horizon must be at least 1".into())?;
    let total = (k as f64).powi(horizon as i32);
    ensure(total <= 2e6, || format!("{k}^{horizon} paths are too many to enumerate"))?;
    let stay = 1.0 - delta;
    let jump = delta / (k - 1) as f64;
    let mut out = Vec::with_capacity(total as usize);
    let mut seq = vec![0usize; horizon];
    loop {
        let mut q = 1.0 / k as f64;
        for w in seq.windows(2) {
            q *= if w[0] == w[1] { stay } else { jump };
        }
        out.push((seq.clone(), q));
        // Odometer increment, last position fastest.
        let mut i = horizon;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < k {
                break;
            }
            seq[i] = 0;
        }
    }
}

/// `E[S_T] / T` under an enumerated path law.
pub fn expected_switch_rate(law: &[(Vec<usize>, f64)]) -> Result<f64> {
    let mut acc = 0.0;
    for (p, q) in law {
        acc += q * switch_rate(p)?;
    }
    // A weighted mean of values in (0,1]; rounding must not leave that range.
    Ok(acc.min(1.0))
}

/// Entropy-rate bound from the expected switch rate `s̄`:
/// `s̄ (1 + ln(1 + 1/s̄) + ln k) + ln(T)/T`.
pub fn combinatorial_entropy_bound(s_bar: f64, horizon: f64, k: usize) -> Result<f64> {
    ensure(s_bar > 0.0 && s_bar <= 1.0, || format!("switch rate must lie in (0,1], got {s_bar}"))?;
    ensure(horizon >= 1.0, || format!("horizon must be at least 1, got {horizon}"))?;
    ensure(k >= 1, || "need at least one arm".into())?;
    let tail = if horizon.is_infinite() { 0.0 } else { horizon.ln() / horizon };
    Ok(s_bar * (1.0 + (1.0 + 1.0 / s_bar).ln() + (k as f64).ln()) + tail)
}

/// Entropy-rate bound from the effective horizon:
/// `(1 + ln τ + h_cond) / τ + h_first / T`. An infinite `T` drops the last term.
pub fn effective_horizon_bound(tau_eff: f64, h_cond: f64, h_first: f64, horizon: f64) -> Result<f64> {
    ensure(tau_eff >= 1.0, || format!("effective horizon must be at least 1, got {tau_eff}"))?;
    ensure(h_cond >= 0.0 && h_first >= 0.0, || "entropies must be non-negative".into())?;
    ensure(horizon >= 1.0, || format!("horizon must be at least 1, got {horizon}"))?;
    let first = if horizon.is_infinite() { 0.0 } else { h_first / horizon };
    let main = if tau_eff.is_infinite() { 0.0 } else { (1.0 + tau_eff.ln() + h_cond) / tau_eff };
    Ok(main + first)
}

/// Mean time between sign changes of the difference of two independent
/// unit squared-exponential processes: `π / arccos(exp(-1/(2τ²)))`.
pub fn rice_effective_horizon(tau_id: f64) -> Result<f64> {
    ensure(tau_id > 0.0 && tau_id.is_finite(), || format!("timescale must be positive, got {tau_id}"))?;
    // arccos(y) = 2 asin(√((1-y)/2)), with 1-y from expm1 to keep precision
    // when y is close to 1.
    let one_minus = -(-0.5 / (tau_id * tau_id)).exp_m1();
    Ok(PI / (2.0 * (0.5 * one_minus).sqrt().asin()))
}

/// Effective horizon of the refreshing article pool: `(k+1)/(2(k-1)) · τ`.
pub fn news_effective_horizon(k: usize, tau: f64) -> Result<f64> {
    ensure(k >= 2, || format!("need at least 2 slots, got {k}"))?;
    ensure(tau >= 1.0, || format!("lifetime must be at least 1, got {tau}"))?;
    Ok((k + 1) as f64 / (2.0 * (k - 1) as f64) * tau)
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    ensure(v >= 0.0 && !v.is_nan(), || format!("{name} must be non-negative, got {v}"))
}

/// `σ √(2 k H̄)`.
pub fn regret_bound_karmed(sigma: f64, k: usize, h_rate: f64) -> Result<f64> {
    nonneg("sigma", sigma)?;
    nonneg("entropy rate", h_rate)?;
    Ok(sigma * (2.0 * k as f64 * h_rate).sqrt())
}

/// `σ √(2 H̄)`.
pub fn regret_bound_fullinfo(sigma: f64, h_rate: f64) -> Result<f64> {
    nonneg("sigma", sigma)?;
    nonneg("entropy rate", h_rate)?;
    Ok(sigma * (2.0 * h_rate).sqrt())
}

/// Pathwise `(1/T) Σ_{t≥2} max_a |Δ_t(a) - Δ_{t-1}(a)|` with
/// `Δ_t(a) = max_b μ_{t,b} - μ_{t,a}`.
pub fn variation_budget(path: &LatentPath) -> Result<f64> {
    let horizon = path.horizon();
    ensure(horizon >= 2, || "variation budget needs at least 2 periods".into())?;
    let k = path.arms();
    let gaps = |t: usize| -> Vec<f64> {
        let best = path.best_value(t);
        (0..k).map(|a| best - path.mean(t, a)).collect()
    };
    let mut prev = gaps(0);
    let mut total = 0.0;
    for t in 1..horizon {
        let cur = gaps(t);
        total += cur
            .iter()
            .zip(&prev)
            .map(|(c, p)| (c - p).abs())
            .fold(0.0, f64::max);
        prev = cur;
    }
    Ok(total / horizon as f64)
}

fn check_kt(k: usize, horizon: f64) -> Result<()> {
    ensure(k >= 2, || format!("need at least 2 arms, got {k}"))?;
    ensure(horizon >= 2.0 && horizon.is_finite(), || format!("horizon must be a finite value ≥ 2, got {horizon}"))
}

/// Rate-distortion upper bound for a variation budget `v̄` at distortion `D`:
/// `(2v̄/D)(1 + ln(1 + min(T, D/(2v̄))) + ln k) + 3 ln(kT)/T`.
pub fn rate_distortion_bound(v_bar: f64, d: f64, horizon: f64, k: usize) -> Result<f64> {
    ensure(d > 0.0, || format!("distortion must be positive, got {d}"))?;
    nonneg("variation budget", v_bar)?;
    check_kt(k, horizon)?;
    let tail = 3.0 * (k as f64 * horizon).ln() / horizon;
    if v_bar == 0.0 {
        return Ok(tail);
    }
    let ratio = 2.0 * v_bar / d;
    Ok(ratio * (1.0 + (1.0 + horizon.min(d / (2.0 * v_bar))).ln() + (k as f64).ln()) + tail)
}

/// Regret bound in terms of the variation budget and a uniform
/// information-ratio bound `Γ_U`:
/// `5 (Γ ln k v̄)^{1/3} √(ln(1 + min(T, (Γ ln k)^{1/3} / v̄^{2/3}))) + √(3 Γ ln(kT) / T)`.
pub fn regret_bound_variation(gamma_u: f64, v_bar: f64, k: usize, horizon: f64) -> Result<f64> {
    ensure(gamma_u > 0.0, || format!("information-ratio bound must be positive, got {gamma_u}"))?;
    nonneg("variation budget", v_bar)?;
    check_kt(k, horizon)?;
    let tail = (3.0 * gamma_u * (k as f64 * horizon).ln() / horizon).sqrt();
    if v_bar == 0.0 {
        return Ok(tail);
    }
    let gl = gamma_u * (k as f64).ln();
    let inner = horizon.min(gl.cbrt() / v_bar.powf(2.0 / 3.0));
    Ok(5.0 * (gl * v_bar).cbrt() * (1.0 + inner).ln().sqrt() + tail)
}

/// `√(Γ · Ī)` for a satisficing target with information rate `Ī`.
pub fn regret_bound_sts(gamma: f64, mi_rate: f64) -> Result<f64> {
    nonneg("information ratio", gamma)?;
    nonneg("information rate", mi_rate)?;
    Ok((gamma * mi_rate).sqrt())
}

/// Problem classes with a known bound on Thompson sampling's information ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ProblemClass {
    /// Finite action set of size `k`: `2σ²k`.
    KArmed { k: usize },
    /// Every action's outcome is revealed: `2σ²`.
    FullInformation,
    /// Linear rewards in dimension `d`: `2σ²d`.
    Linear { d: usize },
    /// Choose `k` of `d` items with semi-bandit feedback: `2σ²d/k²`.
    Combinatorial { d: usize, k: usize },
    /// Contextual bandit with `k` actions per context: `2σ²k`.
    Contextual { k: usize },
}

impl ProblemClass {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemClass::KArmed { .. } => "k_armed",
            ProblemClass::FullInformation => "full_information",
            ProblemClass::Linear { .. } => "linear",
            ProblemClass::Combinatorial { .. } => "combinatorial",
            ProblemClass::Contextual { .. } => "contextual",
        }
    }

    /// Upper bound on the information ratio for sub-Gaussian scale `σ`.
    pub fn gamma(&self, sigma: f64) -> f64 {
        let s2 = 2.0 * sigma * sigma;
        match *self {
            ProblemClass::KArmed { k } | ProblemClass::Contextual { k } => s2 * k as f64,
            ProblemClass::FullInformation => s2,
            ProblemClass::Linear { d } => s2 * d as f64,
            ProblemClass::Combinatorial { d, k } => s2 * d as f64 / (k * k) as f64,
        }
    }
}

/// One evaluated bound with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub inputs: Map<String, Value>,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, value: f64, inputs: &[(&str, f64)]) -> Self {
        let inputs = inputs
            .iter()
            .map(|(k, v)| {
                let v = serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number);
                (k.to_string(), v)
            })
            .collect();
        Self {
            name: name.into(),
            value,
            inputs,
        }
    }
}

/// Writes `name,value,inputs_json` rows.
pub fn write_bounds_csv<W: Write>(rows: &[BoundReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["name", "value", "inputs_json"])?;
    for r in rows {
        let inputs = serde_json::to_string(&r.inputs).map_err(Error::from)?;
        wtr.write_record([r.name.as_str(), &r.value.to_string(), &inputs])?;
    }
    wtr.flush()?;
    Ok(())
}
