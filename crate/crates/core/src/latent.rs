//! Latent-state generators: stationary Gaussian processes, Markov switching
//! chains, the renewal-changepoint construction and the article-pool refresh
//! process.
//!
//! Periods are 0-based throughout the Rust API; CSV exports number them from 1.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::gaussian::{cholesky, CholeskyFactor, SymMatrix, PRIOR_JITTER};

/// Squared-exponential covariance `σ² exp(-½((s-t)/τ)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeKernel {
    pub variance: f64,
    pub timescale: f64,
}

impl SeKernel {
    pub fn new(variance: f64, timescale: f64) -> Result<Self> {
        ensure(variance > 0.0 && variance.is_finite(), || {
            format!("kernel variance must be positive and finite, got {variance}")
        })?;
        ensure(timescale > 0.0 && timescale.is_finite(), || {
            format!("kernel timescale must be positive and finite, got {timescale}")
        })?;
        Ok(Self {
            variance,
            timescale,
        })
    }

    pub fn unit(timescale: f64) -> Result<Self> {
        Self::new(1.0, timescale)
    }
}

pub fn se_cov(s: usize, t: usize, kern: &SeKernel) -> f64 {
    let lag = (s as f64 - t as f64) / kern.timescale;
    kern.variance * (-0.5 * lag * lag).exp()
}

/// Stationary covariance functions used by the environments and by the
/// exact-posterior policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    SquaredExponential(SeKernel),
    /// Stationary AR(1): `Cov(θ_s, θ_t) = σ_ξ²/(1-α²) · α^|s-t|`.
    Ar1 { alpha: f64, innovation_var: f64 },
}

impl Kernel {
    pub fn ar1(alpha: f64, innovation_var: f64) -> Result<Self> {
        ensure(alpha.abs() < 1.0, || {
            format!("AR(1) coefficient must satisfy |alpha| < 1, got {alpha}")
        })?;
        ensure(innovation_var >= 0.0 && innovation_var.is_finite(), || {
            format!("innovation variance must be non-negative, got {innovation_var}")
        })?;
        Ok(Kernel::Ar1 {
            alpha,
            innovation_var,
        })
    }

    #[inline]
    pub fn cov(&self, s: usize, t: usize) -> f64 {
        match self {
            Kernel::SquaredExponential(k) => se_cov(s, t, k),
            Kernel::Ar1 {
                alpha,
                innovation_var,
            } => {
                let lag = s.abs_diff(t) as i32;
                innovation_var / (1.0 - alpha * alpha) * alpha.powi(lag)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.cov(0, 0)
    }

    pub fn matrix(&self, horizon: usize) -> SymMatrix {
        SymMatrix::from_fn(horizon, |i, j| self.cov(i, j))
    }
}

/// Zero-mean path sampler with the covariance factor cached for a horizon.
///
/// The factor of a leading block is the leading block of the factor, so a
/// sampler built for horizon `T` also samples every shorter prefix.
#[derive(Debug, Clone)]
pub struct GpSampler {
    kernel: Kernel,
    factor: CholeskyFactor,
}

impl GpSampler {
    pub fn new(kernel: Kernel, horizon: usize) -> Result<Self> {
        ensure(horizon >= 1, || "horizon must be at least 1".into())?;
        let factor = cholesky(&kernel.matrix(horizon), PRIOR_JITTER)?;
        Ok(Self { kernel, factor })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn horizon(&self) -> usize {
        self.factor.dim()
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Jitter the factorization needed (recorded in run metadata).
    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_prefix(self.horizon(), rng)
    }

    pub fn sample_prefix<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..len.min(self.horizon()))
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factor.mul_vec(&z)
    }
}

/// One path of a zero-mean squared-exponential Gaussian process.
pub fn sample_gp_path<R: Rng + ?Sized>(
    kern: &SeKernel,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(GpSampler::new(Kernel::SquaredExponential(*kern), horizon)?.sample(rng))
}

/// Optimal-arm chain that stays put with probability `1-δ` and otherwise
/// jumps uniformly to one of the other `k-1` arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovSwitchSpec {
    pub k: usize,
    pub delta: f64,
}

impl MarkovSwitchSpec {
    pub fn new(k: usize, delta: f64) -> Result<Self> {
        let s = Self { k, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.k >= 2, || format!("need at least 2 arms, got {}", self.k))?;
        ensure((0.0..=1.0).contains(&self.delta), || {
            format!("switch probability must lie in [0,1], got {}", self.delta)
        })
    }
}

pub fn sample_markov_switch_path<R: Rng + ?Sized>(
    spec: &MarkovSwitchSpec,
    horizon: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut path = Vec::with_capacity(horizon);
    if horizon == 0 {
        return path;
    }
    let mut cur = rng.random_range(0..spec.k);
    path.push(cur);
    for _ in 1..horizon {
        if rng.random::<f64>() < spec.delta {
            // Uniform over the k-1 other arms.
            let j = rng.random_range(0..spec.k - 1);
            cur = if j >= cur { j + 1 } else { j };
        }
        path.push(cur);
    }
    path
}

/// Renewal construction with block-constant best arm and gap `ε`, tuned so
/// that the optimal action switches with probability exactly `1/tau_eff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalSpec {
    pub k: usize,
    pub tau_eff: f64,
}

impl RenewalSpec {
    pub fn new(k: usize, tau_eff: f64) -> Result<Self> {
        let s = Self { k, tau_eff };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.k >= 2, || format!("need at least 2 arms, got {}", self.k))?;
        ensure(self.tau_eff.is_finite() && self.tau_eff >= self.k as f64, || {
            format!(
                "effective horizon must be at least k = {}, got {}",
                self.k, self.tau_eff
            )
        })
    }

    /// Mean inter-renewal time `(k-1)/k · tau_eff`.
    pub fn tau_tilde(&self) -> f64 {
        (self.k as f64 - 1.0) / self.k as f64 * self.tau_eff
    }

    /// Shorter of the two gap lengths.
    pub fn n(&self) -> usize {
        self.tau_tilde().floor() as usize
    }

    /// Probability of the longer gap `n + 1`.
    pub fn p(&self) -> f64 {
        let tt = self.tau_tilde();
        tt - tt.floor()
    }

    pub fn epsilon(&self) -> f64 {
        let k = self.k as f64;
        (1.0 - 1.0 / k) * (k / self.n() as f64).sqrt()
    }
}

/// Block structure of a renewal path.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalPath {
    /// 0-based first period of each block; always starts with 0.
    pub block_starts: Vec<usize>,
    /// Best arm of each block (may repeat across consecutive blocks).
    pub best_arms: Vec<usize>,
}

impl RenewalPath {
    pub fn best_arm_sequence(&self, horizon: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(horizon);
        for (b, &start) in self.block_starts.iter().enumerate() {
            let end = self.block_starts.get(b + 1).copied().unwrap_or(horizon);
            out.extend(std::iter::repeat_n(self.best_arms[b], end - start));
        }
        out
    }
}

/// Samples the stationary renewal process: the first renewal from the
/// equilibrium excess-life law, then gaps of `n` (prob `1-p`) or `n+1`
/// (prob `p`), so the gap mean is exactly `tau_tilde`.
pub fn sample_renewal_changepoints<R: Rng + ?Sized>(
    spec: &RenewalSpec,
    horizon: usize,
    rng: &mut R,
) -> RenewalPath {
    let (n, p, tt) = (spec.n(), spec.p(), spec.tau_tilde());
    // P(T1 = x) = 1/tt for x <= n, p/tt for x = n+1.
    let u: f64 = rng.random::<f64>() * tt;
    let first = ((u.floor() as usize) + 1).min(n + 1);

    let mut block_starts = vec![0];
    let mut best_arms = vec![rng.random_range(0..spec.k)];
    let mut renewal = first;
    while renewal <= horizon {
        let arm = rng.random_range(0..spec.k);
        if renewal == 1 {
            best_arms[0] = arm;
        } else {
            block_starts.push(renewal - 1);
            best_arms.push(arm);
        }
        let gap = if rng.random::<f64>() < p { n + 1 } else { n };
        renewal += gap;
    }
    RenewalPath {
        block_starts,
        best_arms,
    }
}

/// Population distribution of click-through rates for fresh articles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CtrPrior {
    Beta { alpha: f64, beta: f64 },
    Uniform,
    PointMass { value: f64 },
}

impl Default for CtrPrior {
    fn default() -> Self {
        CtrPrior::Beta {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl CtrPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CtrPrior::Beta { alpha, beta } => ensure(alpha > 0.0 && beta > 0.0, || {
                format!("Beta parameters must be positive, got ({alpha}, {beta})")
            }),
            CtrPrior::Uniform => Ok(()),
            CtrPrior::PointMass { value } => ensure((0.0..=1.0).contains(&value), || {
                format!("point mass must lie in [0,1], got {value}")
            }),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CtrPrior::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("validated Beta parameters")
                .sample(rng),
            CtrPrior::Uniform => rng.random(),
            CtrPrior::PointMass { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticlePoolSpec {
    pub k: usize,
    /// Mean article lifetime; `f64::INFINITY` disables refreshes.
    pub tau: f64,
    #[serde(default)]
    pub ctr_prior: CtrPrior,
}

impl ArticlePoolSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.k >= 2, || format!("need at least 2 slots, got {}", self.k))?;
        ensure(self.tau >= 1.0, || {
            format!("mean lifetime must be at least 1, got {}", self.tau)
        })?;
        self.ctr_prior.validate()
    }

    pub fn refresh_prob(&self) -> f64 {
        1.0 / self.tau
    }
}

/// Click-through rates and refresh indicators, each `T` rows of `k` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticlePoolPath {
    pub ctr: Vec<Vec<f64>>,
    /// `refresh[t][a]` means slot `a` gets a new article for period `t+1`.
    pub refresh: Vec<Vec<bool>>,
}

pub fn sample_article_pool<R: Rng + ?Sized>(
    spec: &ArticlePoolSpec,
    horizon: usize,
    rng: &mut R,
) -> ArticlePoolPath {
    let q = spec.refresh_prob();
    let mut cur: Vec<f64> = (0..spec.k).map(|_| spec.ctr_prior.sample(rng)).collect();
    let mut ctr = Vec::with_capacity(horizon);
    let mut refresh = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        ctr.push(cur.clone());
        let chi: Vec<bool> = (0..spec.k).map(|_| rng.random::<f64>() < q).collect();
        for (a, &c) in chi.iter().enumerate() {
            if c {
                cur[a] = spec.ctr_prior.sample(rng);
            }
        }
        refresh.push(chi);
    }
    ArticlePoolPath { ctr, refresh }
}
