use std::sync::Arc;

use super::{fmt_num, Clock, Params, Policy, PolicyContext, PolicyFactory, PolicySpec};
use crate::env::argmax;
use crate::error::{ensure, Error, Result};
use crate::gp::{GpPosterior, GpPrior, Target};
use crate::rng::SimRng;

fn check_matrix(mu: &[Vec<f64>]) -> Result<usize> {
    ensure(!mu.is_empty(), || "mean matrix must have at least one row".into())?;
    let k = mu[0].len();
    ensure(k >= 1, || "mean matrix must have at least one column".into())?;
    for r in mu {
        if r.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: r.len(),
            });
        }
    }
    Ok(k)
}

/// Highest-total-mean action sequence with at most `m` constant blocks
/// (at most `m - 1` changes of action).
///
/// Among optimal sequences the one with the fewest changes wins, then the
/// lexicographically smallest.
pub fn dp_best_sequence(mu: &[Vec<f64>], m: usize) -> Result<Vec<usize>> {
    ensure(m >= 1, || format!("switch budget must be at least 1, got {m}"))?;
    let k = check_matrix(mu)?;
    let horizon = mu.len();
    let cap = (m - 1).min(horizon - 1);
    let width = cap + 1;
    let idx = |t: usize, a: usize, r: usize| (t * k + a) * width + r;

    // w[t][a][r]: best value of periods t.. when playing `a` at t with at
    // most `r` further changes.
    let mut w = vec![0.0; horizon * k * width];
    for a in 0..k {
        for r in 0..width {
            w[idx(horizon - 1, a, r)] = mu[horizon - 1][a];
        }
    }
    let continuation = |w: &[f64], t: usize, a: usize, r: usize| {
        let mut best = w[idx(t, a, r)];
        if r >= 1 {
            for b in (0..k).filter(|&b| b != a) {
                best = best.max(w[idx(t, b, r - 1)]);
            }
        }
        best
    };
    for t in (0..horizon - 1).rev() {
        for a in 0..k {
            for r in 0..width {
                w[idx(t, a, r)] = mu[t][a] + continuation(&w, t + 1, a, r);
            }
        }
    }

    let start_best = |r: usize| (0..k).map(|a| w[idx(0, a, r)]).fold(f64::NEG_INFINITY, f64::max);
    let optimum = start_best(cap);
    let mut r = (0..width).find(|&r| start_best(r) == optimum).unwrap_or(cap);

    let mut seq = Vec::with_capacity(horizon);
    let first = (0..k).find(|&a| w[idx(0, a, r)] == optimum).unwrap_or(0);
    seq.push(first);
    for t in 1..horizon {
        let prev = seq[t - 1];
        let target = continuation(&w, t, prev, r);
        let mut chosen = None;
        for b in 0..k {
            let v = if b == prev {
                w[idx(t, b, r)]
            } else if r >= 1 {
                w[idx(t, b, r - 1)]
            } else {
                continue;
            };
            if v == target {
                chosen = Some(b);
                break;
            }
        }
        let b = chosen.unwrap_or(prev);
        if b != prev {
            r -= 1;
        }
        seq.push(b);
    }
    Ok(seq)
}

/// Incumbent-keeping target: start at the first row's argmax, keep the
/// incumbent while its gap to the row maximum is at most `d`, otherwise move
/// to the row argmax.
pub fn sts_distortion_target(mu: &[Vec<f64>], d: f64) -> Result<Vec<usize>> {
    ensure(d >= 0.0, || format!("distortion must be non-negative, got {d}"))?;
    check_matrix(mu)?;
    let mut seq = Vec::with_capacity(mu.len());
    let mut cur = argmax(&mu[0]);
    seq.push(cur);
    for row in &mu[1..] {
        let best = argmax(row);
        if row[best] - row[cur] > d {
            cur = best;
        }
        seq.push(cur);
    }
    Ok(seq)
}

fn rows_of(paths: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    (0..len).map(|s| paths.iter().map(|p| p[s]).collect()).collect()
}

/// Satisficing Thompson sampling toward the incumbent-keeping target of a
/// jointly sampled latent path prefix.
#[derive(Debug, Clone)]
pub struct StsDistortion {
    id: String,
    d: f64,
    posterior: GpPosterior,
    clock: Clock,
}

impl StsDistortion {
    pub fn new(prior: Arc<GpPrior>, d: f64) -> Result<Self> {
        ensure(d >= 0.0, || format!("distortion must be non-negative, got {d}"))?;
        Ok(Self {
            id: format!("sts_D{}", fmt_num(d)),
            d,
            posterior: GpPosterior::new(prior),
            clock: Clock::default(),
        })
    }
}

impl Policy for StsDistortion {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, t: usize, rng: &mut SimRng) -> Result<usize> {
        let paths = self.posterior.sample_paths(t + 1, rng)?;
        Ok(sts_distortion_target(&rows_of(&paths, t + 1), self.d)?[t])
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.clock.tick(t)?;
        self.posterior.push(t, arm, reward)
    }
}

/// Satisficing Thompson sampling toward the best sequence with at most `m`
/// blocks on a jointly sampled full-horizon latent path.
#[derive(Debug, Clone)]
pub struct StsSwitchDp {
    id: String,
    m: usize,
    horizon: usize,
    posterior: GpPosterior,
    clock: Clock,
}

impl StsSwitchDp {
    pub fn new(prior: Arc<GpPrior>, m: usize) -> Result<Self> {
        ensure(m >= 1, || format!("switch budget must be at least 1, got {m}"))?;
        Ok(Self {
            id: format!("sts_m{m}"),
            m,
            horizon: prior.horizon(),
            posterior: GpPosterior::new(prior),
            clock: Clock::default(),
        })
    }
}

impl Policy for StsSwitchDp {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, t: usize, rng: &mut SimRng) -> Result<usize> {
        ensure(t < self.horizon, || format!("period {t} beyond lookahead horizon {}", self.horizon))?;
        let paths = self.posterior.sample_paths(self.horizon, rng)?;
        Ok(dp_best_sequence(&rows_of(&paths, self.horizon), self.m)?[t])
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.clock.tick(t)?;
        self.posterior.push(t, arm, reward)
    }
}

/// Satisficing Thompson sampling toward the arm with the largest per-arm
/// constant mean, ignoring the transient component.
#[derive(Debug, Clone)]
pub struct StsFixedMean {
    posterior: GpPosterior,
    clock: Clock,
}

impl StsFixedMean {
    pub fn new(prior: Arc<GpPrior>) -> Result<Self> {
        ensure(prior.model().fixed_var > 0.0, || {
            "fixed-mean satisficing needs a model with a per-arm constant component".into()
        })?;
        Ok(Self {
            posterior: GpPosterior::new(prior),
            clock: Clock::default(),
        })
    }
}

impl Policy for StsFixedMean {
    fn id(&self) -> &str {
        "sts_fixed"
    }

    fn act(&mut self, t: usize, rng: &mut SimRng) -> Result<usize> {
        Ok(argmax(&self.posterior.sample_at(Target::Fixed, t, rng)?))
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.clock.tick(t)?;
        self.posterior.push(t, arm, reward)
    }
}

pub(super) fn build_distortion(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["D", "env"])?;
    let d = p.req_f64("D")?;
    let model = p.gp_model(ctx)?;
    let prior = Arc::new(GpPrior::with_path_samplers(model, ctx.horizon)?);
    let template = StsDistortion::new(prior, d)?;
    Ok(PolicyFactory::new(template.id.clone(), p.finish(), move || {
        Box::new(template.clone())
    }))
}

pub(super) fn build_switch_dp(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["m", "horizon", "env"])?;
    let m = p.req_usize("m")?;
    let horizon = p.usize_or("horizon", ctx.horizon)?;
    ensure(horizon >= ctx.horizon, || {
        format!("lookahead horizon {horizon} is shorter than the experiment horizon {}", ctx.horizon)
    })?;
    let model = p.gp_model(ctx)?;
    let prior = Arc::new(GpPrior::with_path_samplers(model, horizon)?);
    let template = StsSwitchDp::new(prior, m)?;
    Ok(PolicyFactory::new(template.id.clone(), p.finish(), move || {
        Box::new(template.clone())
    }))
}

pub(super) fn build_fixed(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["env"])?;
    let model = p.gp_model(ctx)?;
    let prior = Arc::new(GpPrior::new(model, ctx.horizon)?);
    let template = StsFixedMean::new(prior)?;
    Ok(PolicyFactory::new("sts_fixed".into(), p.finish(), move || {
        Box::new(template.clone())
    }))
}
