//! Playable environments: realize a latent mean-reward path, draw noisy
//! rewards, and score action sequences by per-period regret.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::latent::{
    sample_article_pool, sample_markov_switch_path, sample_renewal_changepoints, ArticlePoolSpec,
    CtrPrior, GpSampler, Kernel, MarkovSwitchSpec, RenewalSpec, SeKernel,
};
use crate::rng::SimRng;

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}

/// Declarative description of one environment family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// `μ_{t,a} = θ_t^cm + θ_{t,a}^id` with unit-variance SE processes.
    GpTwoType {
        #[serde(default = "two")]
        k: usize,
        tau_cm: f64,
        tau_id: f64,
        #[serde(default = "one")]
        noise_var: f64,
    },
    /// Independent stationary AR(1) arms observed through Gaussian noise.
    Ar1 {
        #[serde(default = "two")]
        k: usize,
        alpha: f64,
        sigma_xi_sq: f64,
        sigma_w_sq: f64,
    },
    /// Optimal arm follows a switching chain; it earns `gap`, others 0.
    MarkovSwitch {
        k: usize,
        delta: f64,
        #[serde(default = "one")]
        gap: f64,
        #[serde(default = "one")]
        noise_var: f64,
    },
    /// Block-constant `ε`-gap instance driven by a stationary renewal process.
    RenewalLb { k: usize, tau_eff: f64 },
    /// Article slots refreshed at rate `1/tau`, Bernoulli clicks.
    ArticlePool {
        k: usize,
        tau: f64,
        #[serde(default)]
        ctr_prior: CtrPrior,
    },
    /// `μ_{t,a} = μ_a^fixed + μ_{t,a}^GP`, `μ^fixed ~ N(0, v²)`, unit SE process.
    FixedPlusGp {
        #[serde(default = "two")]
        k: usize,
        v_sq: f64,
        tau: f64,
        #[serde(default = "one")]
        noise_var: f64,
    },
}

/// Covariance description shared by the exact-posterior policies:
///
/// `R_{t,a} = c_t + f_a + g_{t,a} + ε_t`, with `c` a common process, `f_a`
/// a per-arm constant with variance `fixed_var`, `g_{·,a}` independent
/// per-arm processes and `ε` white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub k: usize,
    pub noise_var: f64,
    pub common: Option<Kernel>,
    pub idio: Kernel,
    pub fixed_var: f64,
}

impl GpModel {
    pub fn validate(&self) -> Result<()> {
        ensure(self.k >= 2, || format!("need at least 2 arms, got {}", self.k))?;
        ensure(self.noise_var > 0.0, || {
            format!("noise variance must be positive, got {}", self.noise_var)
        })?;
        ensure(self.fixed_var >= 0.0, || {
            format!("fixed-mean variance must be non-negative, got {}", self.fixed_var)
        })
    }

    /// `Cov(R_i, R_j)` for rewards at periods `ti, tj` from arms `ai, aj`,
    /// excluding the noise term.
    #[inline]
    pub fn reward_cov(&self, ti: usize, ai: usize, tj: usize, aj: usize) -> f64 {
        let mut c = match &self.common {
            Some(k) => k.cov(ti, tj),
            None => 0.0,
        };
        if ai == aj {
            c += self.fixed_var + self.idio.cov(ti, tj);
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    GaussianNoise { sigma_sq: f64 },
    Bernoulli,
}

impl RewardModel {
    /// Sub-Gaussian scale used by the regret bounds; `[0,1]` rewards use 1/2.
    pub fn sigma(&self) -> f64 {
        match self {
            RewardModel::GaussianNoise { sigma_sq } => sigma_sq.sqrt(),
            RewardModel::Bernoulli => 0.5,
        }
    }
}

impl EnvSpec {
    pub fn arms(&self) -> usize {
        match self {
            EnvSpec::GpTwoType { k, .. }
            | EnvSpec::Ar1 { k, .. }
            | EnvSpec::MarkovSwitch { k, .. }
            | EnvSpec::RenewalLb { k, .. }
            | EnvSpec::ArticlePool { k, .. }
            | EnvSpec::FixedPlusGp { k, .. } => *k,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::GpTwoType { .. } => "gp_two_type",
            EnvSpec::Ar1 { .. } => "ar1",
            EnvSpec::MarkovSwitch { .. } => "markov_switch",
            EnvSpec::RenewalLb { .. } => "renewal_lb",
            EnvSpec::ArticlePool { .. } => "article_pool",
            EnvSpec::FixedPlusGp { .. } => "fixed_plus_gp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.arms();
        ensure(k >= 2, || format!("need at least 2 arms, got {k}"))?;
        let positive = |name: &str, v: f64| {
            ensure(v > 0.0 && v.is_finite(), || {
                format!("{name} must be positive and finite, got {v}")
            })
        };
        match *self {
            EnvSpec::GpTwoType {
                tau_cm,
                tau_id,
                noise_var,
                ..
            } => {
                positive("tau_cm", tau_cm)?;
                positive("tau_id", tau_id)?;
                positive("noise_var", noise_var)
            }
            EnvSpec::Ar1 {
                alpha,
                sigma_xi_sq,
                sigma_w_sq,
                ..
            } => {
                Kernel::ar1(alpha, sigma_xi_sq)?;
                positive("sigma_w_sq", sigma_w_sq)
            }
            EnvSpec::MarkovSwitch {
                delta,
                gap,
                noise_var,
                ..
            } => {
                MarkovSwitchSpec::new(k, delta)?;
                positive("gap", gap)?;
                positive("noise_var", noise_var)
            }
            EnvSpec::RenewalLb { tau_eff, .. } => RenewalSpec::new(k, tau_eff).map(|_| ()),
            EnvSpec::ArticlePool { tau, ctr_prior, .. } => {
                ArticlePoolSpec { k, tau, ctr_prior }.validate()
            }
            EnvSpec::FixedPlusGp {
                v_sq,
                tau,
                noise_var,
                ..
            } => {
                positive("v_sq", v_sq)?;
                positive("tau", tau)?;
                positive("noise_var", noise_var)
            }
        }
    }

    pub fn reward_model(&self) -> RewardModel {
        match *self {
            EnvSpec::GpTwoType { noise_var, .. }
            | EnvSpec::MarkovSwitch { noise_var, .. }
            | EnvSpec::FixedPlusGp { noise_var, .. } => RewardModel::GaussianNoise {
                sigma_sq: noise_var,
            },
            EnvSpec::Ar1 { sigma_w_sq, .. } => RewardModel::GaussianNoise {
                sigma_sq: sigma_w_sq,
            },
            EnvSpec::RenewalLb { .. } => RewardModel::GaussianNoise { sigma_sq: 1.0 },
            EnvSpec::ArticlePool { .. } => RewardModel::Bernoulli,
        }
    }

    /// Gaussian-process description of the environment, when one exists.
    pub fn gp_model(&self) -> Option<GpModel> {
        match *self {
            EnvSpec::GpTwoType {
                k,
                tau_cm,
                tau_id,
                noise_var,
            } => Some(GpModel {
                k,
                noise_var,
                common: Some(Kernel::SquaredExponential(SeKernel {
                    variance: 1.0,
                    timescale: tau_cm,
                })),
                idio: Kernel::SquaredExponential(SeKernel {
                    variance: 1.0,
                    timescale: tau_id,
                }),
                fixed_var: 0.0,
            }),
            EnvSpec::Ar1 {
                k,
                alpha,
                sigma_xi_sq,
                sigma_w_sq,
            } => Some(GpModel {
                k,
                noise_var: sigma_w_sq,
                common: None,
                idio: Kernel::Ar1 {
                    alpha,
                    innovation_var: sigma_xi_sq,
                },
                fixed_var: 0.0,
            }),
            EnvSpec::FixedPlusGp {
                k,
                v_sq,
                tau,
                noise_var,
            } => Some(GpModel {
                k,
                noise_var,
                common: None,
                idio: Kernel::SquaredExponential(SeKernel {
                    variance: 1.0,
                    timescale: tau,
                }),
                fixed_var: v_sq,
            }),
            _ => None,
        }
    }

    /// Builds a playable environment for a fixed horizon, caching any
    /// covariance factorizations it needs.
    pub fn build(&self, horizon: usize) -> Result<Box<dyn Environment>> {
        self.validate()?;
        ensure(horizon >= 1, || "horizon must be at least 1".into())?;
        let k = self.arms();
        Ok(match *self {
            EnvSpec::GpTwoType { tau_cm, tau_id, .. } => Box::new(GpTwoTypeEnv {
                spec: self.clone(),
                horizon,
                common: GpSampler::new(Kernel::SquaredExponential(SeKernel::unit(tau_cm)?), horizon)?,
                idio: GpSampler::new(Kernel::SquaredExponential(SeKernel::unit(tau_id)?), horizon)?,
            }),
            EnvSpec::Ar1 {
                alpha, sigma_xi_sq, ..
            } => Box::new(Ar1Env {
                spec: self.clone(),
                horizon,
                alpha,
                sigma_xi_sq,
            }),
            EnvSpec::MarkovSwitch { delta, gap, .. } => Box::new(MarkovSwitchEnv {
                spec: self.clone(),
                horizon,
                chain: MarkovSwitchSpec::new(k, delta)?,
                gap,
            }),
            EnvSpec::RenewalLb { tau_eff, .. } => Box::new(RenewalEnv {
                spec: self.clone(),
                horizon,
                renewal: RenewalSpec::new(k, tau_eff)?,
            }),
            EnvSpec::ArticlePool { tau, ctr_prior, .. } => Box::new(ArticlePoolEnv {
                spec: self.clone(),
                horizon,
                pool: ArticlePoolSpec { k, tau, ctr_prior },
            }),
            EnvSpec::FixedPlusGp { v_sq, tau, .. } => Box::new(FixedPlusGpEnv {
                spec: self.clone(),
                horizon,
                v_sq,
                gp: GpSampler::new(Kernel::SquaredExponential(SeKernel::unit(tau)?), horizon)?,
            }),
        })
    }
}

/// A realized environment family with cached numerics for one horizon.
pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;
    fn horizon(&self) -> usize;
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath>;

    fn arms(&self) -> usize {
        self.spec().arms()
    }

    fn reward_model(&self) -> RewardModel {
        self.spec().reward_model()
    }

    /// Diagonal jitter used by cached factorizations, for run metadata.
    fn jitter(&self) -> f64 {
        0.0
    }
}

/// One-shot convenience wrapper around [`EnvSpec::build`].
pub fn realize(spec: &EnvSpec, horizon: usize, rng: &mut SimRng) -> Result<LatentPath> {
    spec.build(horizon)?.realize(rng)
}

struct GpTwoTypeEnv {
    spec: EnvSpec,
    horizon: usize,
    common: GpSampler,
    idio: GpSampler,
}

impl Environment for GpTwoTypeEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn jitter(&self) -> f64 {
        self.common.jitter().max(self.idio.jitter())
    }
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath> {
        let k = self.arms();
        // Idiosyncratic paths are drawn first so they are shared across
        // configurations that differ only in the common timescale.
        let idio: Vec<Vec<f64>> = (0..k).map(|_| self.idio.sample(rng)).collect();
        let common = self.common.sample(rng);
        let rows = (0..self.horizon)
            .map(|t| (0..k).map(|a| common[t] + idio[a][t]).collect())
            .collect::<Vec<Vec<f64>>>();
        LatentPath::from_rows(&rows, PathMeta::default())
    }
}

struct Ar1Env {
    spec: EnvSpec,
    horizon: usize,
    alpha: f64,
    sigma_xi_sq: f64,
}

impl Environment for Ar1Env {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath> {
        let k = self.arms();
        let sd = self.sigma_xi_sq.sqrt();
        let stationary_sd = (self.sigma_xi_sq / (1.0 - self.alpha * self.alpha)).sqrt();
        let mut cur: Vec<f64> = (0..k)
            .map(|_| stationary_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut rows = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            if t > 0 {
                for x in cur.iter_mut() {
                    *x = self.alpha * *x + sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            rows.push(cur.clone());
        }
        LatentPath::from_rows(&rows, PathMeta::default())
    }
}

struct MarkovSwitchEnv {
    spec: EnvSpec,
    horizon: usize,
    chain: MarkovSwitchSpec,
    gap: f64,
}

impl Environment for MarkovSwitchEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath> {
        let k = self.arms();
        let opt = sample_markov_switch_path(&self.chain, self.horizon, rng);
        let rows: Vec<Vec<f64>> = opt
            .iter()
            .map(|&o| (0..k).map(|a| if a == o { self.gap } else { 0.0 }).collect())
            .collect();
        LatentPath::from_rows(&rows, PathMeta::default())
    }
}

struct RenewalEnv {
    spec: EnvSpec,
    horizon: usize,
    renewal: RenewalSpec,
}

impl Environment for RenewalEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath> {
        let k = self.arms();
        let eps = self.renewal.epsilon();
        let blocks = sample_renewal_changepoints(&self.renewal, self.horizon, rng);
        let rows: Vec<Vec<f64>> = blocks
            .best_arm_sequence(self.horizon)
            .into_iter()
            .map(|b| (0..k).map(|a| if a == b { eps } else { 0.0 }).collect())
            .collect();
        LatentPath::from_rows(
            &rows,
            PathMeta {
                changepoints: Some(blocks.block_starts),
                ..PathMeta::default()
            },
        )
    }
}

struct ArticlePoolEnv {
    spec: EnvSpec,
    horizon: usize,
    pool: ArticlePoolSpec,
}

impl Environment for ArticlePoolEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath> {
        let p = sample_article_pool(&self.pool, self.horizon, rng);
        LatentPath::from_rows(
            &p.ctr,
            PathMeta {
                refresh: Some(p.refresh),
                ..PathMeta::default()
            },
        )
    }
}

struct FixedPlusGpEnv {
    spec: EnvSpec,
    horizon: usize,
    v_sq: f64,
    gp: GpSampler,
}

impl Environment for FixedPlusGpEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn jitter(&self) -> f64 {
        self.gp.jitter()
    }
    fn realize(&self, rng: &mut SimRng) -> Result<LatentPath> {
        let k = self.arms();
        let v = self.v_sq.sqrt();
        let fixed: Vec<f64> = (0..k)
            .map(|_| v * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let gp: Vec<Vec<f64>> = (0..k).map(|_| self.gp.sample(rng)).collect();
        let rows: Vec<Vec<f64>> = (0..self.horizon)
            .map(|t| (0..k).map(|a| fixed[a] + gp[a][t]).collect())
            .collect();
        LatentPath::from_rows(
            &rows,
            PathMeta {
                fixed_means: Some(fixed),
                ..PathMeta::default()
            },
        )
    }
}

/// Environment-specific extras carried alongside a path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathMeta {
    /// Article-pool refresh indicators, `T` rows of `k`.
    pub refresh: Option<Vec<Vec<bool>>>,
    /// Per-arm constant offsets of the fixed-plus-GP environment.
    pub fixed_means: Option<Vec<f64>>,
    /// 0-based block starts of the renewal environment.
    pub changepoints: Option<Vec<usize>>,
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Realized conditional mean rewards and the optimal-action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    horizon: usize,
    k: usize,
    mu: Vec<f64>,
    opt: Vec<usize>,
    pub meta: PathMeta,
}

impl LatentPath {
    /// Builds from `T` rows of `k` means; the optimal sequence is derived.
    pub fn from_rows(rows: &[Vec<f64>], meta: PathMeta) -> Result<Self> {
        ensure(!rows.is_empty(), || "path must have at least one period".into())?;
        let k = rows[0].len();
        ensure(k >= 1, || "path must have at least one arm".into())?;
        let mut mu = Vec::with_capacity(rows.len() * k);
        for r in rows {
            if r.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: r.len(),
                });
            }
            ensure(r.iter().all(|v| v.is_finite()), || "path means must be finite".into())?;
            mu.extend_from_slice(r);
        }
        let opt = rows.iter().map(|r| argmax(r)).collect();
        Ok(Self {
            horizon: rows.len(),
            k,
            mu,
            opt,
            meta,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn arms(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn mean(&self, t: usize, a: usize) -> f64 {
        self.mu[t * self.k + a]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.mu[t * self.k..(t + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.horizon).map(|t| self.row(t).to_vec()).collect()
    }

    pub fn opt(&self) -> &[usize] {
        &self.opt
    }

    pub fn best_value(&self, t: usize) -> f64 {
        self.mean(t, self.opt[t])
    }

    /// Writes `t, mu_1..mu_k, opt` with 1-based periods and arms.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.k).map(|a| format!("mu_{a}")));
        header.push("opt".into());
        wtr.write_record(&header)?;
        for t in 0..self.horizon {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(self.row(t).iter().map(|v| v.to_string()));
            rec.push((self.opt[t] + 1).to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format written by [`LatentPath::write_csv`], checking that the
    /// stored optimal arm attains the row maximum.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let ncol = headers.len();
        ensure(ncol >= 3 && &headers[0] == "t" && &headers[ncol - 1] == "opt", || {
            "path CSV header must be t,mu_1..mu_k,opt".into()
        })?;
        let k = ncol - 2;
        let mut rows = Vec::new();
        let mut stored_opt = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let t: usize = rec[0].parse().map_err(|_| invalid(format!("bad period {:?}", &rec[0])))?;
            ensure(t == i + 1, || format!("periods must be consecutive from 1, got {t} at row {}", i + 1))?;
            let row = (1..=k)
                .map(|j| rec[j].parse::<f64>().map_err(|_| invalid(format!("bad mean {:?}", &rec[j]))))
                .collect::<Result<Vec<_>>>()?;
            let o: usize = rec[k + 1].parse().map_err(|_| invalid(format!("bad arm {:?}", &rec[k + 1])))?;
            ensure((1..=k).contains(&o), || format!("optimal arm {o} out of range"))?;
            rows.push(row);
            stored_opt.push(o - 1);
        }
        let mut path = Self::from_rows(&rows, PathMeta::default())?;
        for (t, &o) in stored_opt.iter().enumerate() {
            ensure(path.mean(t, o) == path.best_value(t), || {
                format!("stored optimal arm at period {} is not a maximizer", t + 1)
            })?;
        }
        path.opt = stored_opt;
        Ok(path)
    }
}

/// One noisy reward for playing arm `a` in period `t`.
pub fn draw_reward<R: Rng + ?Sized>(
    path: &LatentPath,
    model: &RewardModel,
    t: usize,
    a: usize,
    rng: &mut R,
) -> Result<f64> {
    ensure(t < path.horizon(), || format!("period {t} beyond horizon {}", path.horizon()))?;
    ensure(a < path.arms(), || format!("arm {a} out of range"))?;
    let m = path.mean(t, a);
    match *model {
        RewardModel::GaussianNoise { sigma_sq } => {
            let z: f64 = rng.sample(StandardNormal);
            Ok(m + sigma_sq.sqrt() * z)
        }
        RewardModel::Bernoulli => {
            ensure((0.0..=1.0).contains(&m), || {
                format!("Bernoulli rewards need a mean in [0,1], got {m}")
            })?;
            Ok(if rng.random::<f64>() < m { 1.0 } else { 0.0 })
        }
    }
}

fn check_len(path: &LatentPath, seq: &[usize]) -> Result<()> {
    if seq.len() != path.horizon() {
        return Err(Error::DimensionMismatch {
            expected: path.horizon(),
            found: seq.len(),
        });
    }
    ensure(seq.iter().all(|&a| a < path.arms()), || "action out of range".into())
}

/// Per-period gaps `μ_t* - μ_{t,A_t}`.
pub fn instantaneous_regret(path: &LatentPath, actions: &[usize]) -> Result<Vec<f64>> {
    check_len(path, actions)?;
    Ok(actions
        .iter()
        .enumerate()
        .map(|(t, &a)| path.best_value(t) - path.mean(t, a))
        .collect())
}

/// Pathwise Cesàro average regret against the optimal sequence.
pub fn regret_of_sequence(path: &LatentPath, actions: &[usize]) -> Result<f64> {
    Ok(instantaneous_regret(path, actions)?.iter().sum::<f64>() / path.horizon() as f64)
}

/// Cesàro average regret against an arbitrary benchmark sequence.
pub fn satisficing_regret_of_sequence(
    path: &LatentPath,
    actions: &[usize],
    benchmark: &[usize],
) -> Result<f64> {
    check_len(path, actions)?;
    check_len(path, benchmark)?;
    let s: f64 = (0..path.horizon())
        .map(|t| path.mean(t, benchmark[t]) - path.mean(t, actions[t]))
        .sum();
    Ok(s / path.horizon() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn gp(tau_cm: f64, tau_id: f64) -> EnvSpec {
        EnvSpec::GpTwoType {
            k: 2,
            tau_cm,
            tau_id,
            noise_var: 1.0,
        }
    }

    #[test]
    fn opt_is_argmax_with_lowest_index_ties() {
        let p = LatentPath::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]], PathMeta::default()).unwrap();
        assert_eq!(p.opt(), &[0, 1]);
    }

    #[test]
    fn hand_regret() {
        let p = LatentPath::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], PathMeta::default()).unwrap();
        assert_eq!(regret_of_sequence(&p, &[1, 0]).unwrap(), 1.0);
        assert_eq!(regret_of_sequence(&p, p.opt()).unwrap(), 0.0);
        assert!(regret_of_sequence(&p, &[0]).is_err());
        assert_eq!(satisficing_regret_of_sequence(&p, &[0, 0], &[0, 0]).unwrap(), 0.0);
        assert_eq!(
            satisficing_regret_of_sequence(&p, &[1, 0], p.opt()).unwrap(),
            regret_of_sequence(&p, &[1, 0]).unwrap()
        );
        // Negative when beating the benchmark.
        assert_eq!(satisficing_regret_of_sequence(&p, &[0, 1], &[1, 0]).unwrap(), -1.0);
    }

    #[test]
    fn frozen_idiosyncratic_paths_keep_opt_constant() {
        let env = gp(10.0, 1e6).build(100).unwrap();
        let mut rng = rng_from(30, &[]);
        let constant = (0..200)
            .filter(|_| {
                let p = env.realize(&mut rng).unwrap();
                p.opt().iter().all(|&a| a == p.opt()[0])
            })
            .count();
        assert!(constant >= 198, "{constant}");
    }

    #[test]
    fn renewal_blocks_have_exact_gap() {
        let env = EnvSpec::RenewalLb { k: 2, tau_eff: 4.0 }.build(500).unwrap();
        let p = env.realize(&mut rng_from(31, &[])).unwrap();
        let eps = RenewalSpec::new(2, 4.0).unwrap().epsilon();
        for t in 0..500 {
            let mut r = p.row(t).to_vec();
            r.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(r[0] - r[1], eps);
        }
        assert!(p.meta.changepoints.is_some());
    }

    #[test]
    fn ar1_white_noise_limit() {
        let spec = EnvSpec::Ar1 {
            k: 2,
            alpha: 0.0,
            sigma_xi_sq: 1.0,
            sigma_w_sq: 1.0,
        };
        let p = realize(&spec, 100_000, &mut rng_from(32, &[])).unwrap();
        let x: Vec<f64> = (0..100_000).map(|t| p.mean(t, 0)).collect();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>();
        let c = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>();
        assert!((c / v).abs() < 0.02);
        assert!((v / 1e5 - 1.0).abs() < 0.03);
    }

    #[test]
    fn reward_draws() {
        let p = LatentPath::from_rows(&[vec![0.3, 1.0]], PathMeta::default()).unwrap();
        let mut rng = rng_from(33, &[]);
        let tiny = RewardModel::GaussianNoise { sigma_sq: 1e-12 };
        assert!((draw_reward(&p, &tiny, 0, 0, &mut rng).unwrap() - 0.3).abs() < 1e-5);
        for _ in 0..100 {
            assert_eq!(draw_reward(&p, &RewardModel::Bernoulli, 0, 1, &mut rng).unwrap(), 1.0);
        }
        let unit = RewardModel::GaussianNoise { sigma_sq: 1.0 };
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| draw_reward(&p, &unit, 0, 0, &mut rng).unwrap()).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - 0.3).abs() < 0.01);
        assert!((v - 1.0).abs() < 0.02);
        let out = LatentPath::from_rows(&[vec![1.5, 0.0]], PathMeta::default()).unwrap();
        assert!(draw_reward(&out, &RewardModel::Bernoulli, 0, 0, &mut rng).is_err());
        assert!(draw_reward(&out, &unit, 1, 0, &mut rng).is_err());
    }

    #[test]
    fn prior_symmetry_of_first_optimal_arm() {
        let env = gp(10.0, 10.0).build(5).unwrap();
        let mut rng = rng_from(34, &[]);
        let n = 4000;
        let first = (0..n).filter(|_| env.realize(&mut rng).unwrap().opt()[0] == 0).count();
        assert!((first as f64 / n as f64 - 0.5).abs() < 0.03);
    }

    #[test]
    fn common_shift_invariance() {
        let p = realize(&gp(10.0, 20.0), 200, &mut rng_from(35, &[])).unwrap();
        let shifted: Vec<Vec<f64>> = p
            .rows()
            .into_iter()
            .enumerate()
            .map(|(t, r)| r.into_iter().map(|v| v + (t as f64 * 0.1).sin() * 3.0).collect())
            .collect();
        let q = LatentPath::from_rows(&shifted, PathMeta::default()).unwrap();
        assert_eq!(p.opt(), q.opt());
        let acts: Vec<usize> = (0..200).map(|t| t % 2).collect();
        let (a, b) = (regret_of_sequence(&p, &acts).unwrap(), regret_of_sequence(&q, &acts).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let p = realize(&gp(5.0, 5.0), 20, &mut rng_from(36, &[])).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,mu_1,mu_2,opt\n1,"));
        let q = LatentPath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(p.rows(), q.rows());
        assert_eq!(p.opt(), q.opt());
        let bad = "t,mu_1,mu_2,opt\n1,0.5,1.0,1\n";
        assert!(LatentPath::read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn spec_validation_and_json() {
        assert!(gp(0.0, 1.0).validate().is_err());
        assert!(EnvSpec::RenewalLb { k: 4, tau_eff: 3.0 }.validate().is_err());
        let s: EnvSpec = serde_json::from_str(r#"{"kind":"gp_two_type","tau_cm":10,"tau_id":50}"#).unwrap();
        assert_eq!(s, gp(10.0, 50.0));
        assert!(serde_json::from_str::<EnvSpec>(r#"{"kind":"gp_two_type","tau_cm":10,"tau_id":50,"x":1}"#).is_err());
    }
}
