//! Exact Gaussian-process posteriors over arm-specific latent means given a
//! bandit history, maintained by appending one Cholesky row per observation.
//!
//! The common component of a [`GpModel`] never needs to be sampled for
//! decisions: it shifts every arm equally in a period, so argmax choices,
//! gap comparisons and sequence values are unaffected by it.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::GpModel;
use crate::error::{ensure, Error, Result};
use crate::gaussian::{cholesky, dot, mvn_sample, CholeskyFactor, ConditionalGaussian, SymMatrix, PRIOR_JITTER};
use crate::latent::GpSampler;

/// Which arm-specific quantity a posterior describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `f_a + g_{t,a}`: the part of the mean reward that differs across arms.
    Latent,
    /// `f_a`: the per-arm constant only.
    Fixed,
}

/// Prior quantities shared by every posterior of one model and horizon:
/// kernel values by lag and, optionally, path samplers.
#[derive(Debug)]
pub struct GpPrior {
    model: GpModel,
    horizon: usize,
    common_lag: Vec<f64>,
    idio_lag: Vec<f64>,
    samplers: Option<(GpSampler, Option<GpSampler>)>,
}

impl GpPrior {
    pub fn new(model: GpModel, horizon: usize) -> Result<Self> {
        model.validate()?;
        ensure(horizon >= 1, || "horizon must be at least 1".into())?;
        let common_lag = match &model.common {
            Some(k) => (0..horizon).map(|l| k.cov(0, l)).collect(),
            None => vec![0.0; horizon],
        };
        let idio_lag = (0..horizon).map(|l| model.idio.cov(0, l)).collect();
        Ok(Self {
            model,
            horizon,
            common_lag,
            idio_lag,
            samplers: None,
        })
    }

    /// Also caches prior path factors, needed for joint path sampling.
    pub fn with_path_samplers(model: GpModel, horizon: usize) -> Result<Self> {
        let mut p = Self::new(model, horizon)?;
        let idio = GpSampler::new(model.idio, horizon)?;
        let common = match model.common {
            Some(k) => Some(GpSampler::new(k, horizon)?),
            None => None,
        };
        p.samplers = Some((idio, common));
        Ok(p)
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Largest jitter used by the cached prior factors.
    pub fn jitter(&self) -> f64 {
        match &self.samplers {
            Some((i, c)) => i.jitter().max(c.as_ref().map_or(0.0, |c| c.jitter())),
            None => 0.0,
        }
    }

    #[inline]
    fn idio(&self, s: usize, t: usize) -> f64 {
        self.idio_lag[s.abs_diff(t)]
    }

    #[inline]
    fn reward_cov(&self, ti: usize, ai: usize, tj: usize, aj: usize) -> f64 {
        let mut c = self.common_lag[ti.abs_diff(tj)];
        if ai == aj {
            c += self.model.fixed_var + self.idio(ti, tj);
        }
        c
    }

    /// `Cov(target_{t,a}, R)` for a reward observed at `(ti, ai)`.
    #[inline]
    fn target_cov(&self, target: Target, t: usize, a: usize, ti: usize, ai: usize) -> f64 {
        if a != ai {
            return 0.0;
        }
        match target {
            Target::Latent => self.model.fixed_var + self.idio(t, ti),
            Target::Fixed => self.model.fixed_var,
        }
    }

    fn target_var(&self, target: Target) -> f64 {
        match target {
            Target::Latent => self.model.fixed_var + self.idio_lag[0],
            Target::Fixed => self.model.fixed_var,
        }
    }
}

/// Posterior state after a sequence of `(period, arm, reward)` observations.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    prior: Arc<GpPrior>,
    factor: CholeskyFactor,
    /// `L⁻¹ R` for the observed rewards.
    whitened: Vec<f64>,
    rewards: Vec<f64>,
    actions: Vec<usize>,
    times: Vec<usize>,
}

impl GpPosterior {
    pub fn new(prior: Arc<GpPrior>) -> Self {
        Self {
            prior,
            factor: CholeskyFactor::empty(),
            whitened: Vec::new(),
            rewards: Vec::new(),
            actions: Vec::new(),
            times: Vec::new(),
        }
    }

    pub fn prior(&self) -> &GpPrior {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Adds one observation; periods must be strictly increasing.
    pub fn push(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        let p = &*self.prior;
        ensure(t < p.horizon, || format!("period {t} beyond horizon {}", p.horizon))?;
        ensure(arm < p.model.k, || format!("arm {arm} out of range"))?;
        ensure(reward.is_finite(), || format!("reward must be finite, got {reward}"))?;
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::OutOfOrder {
                    expected: last + 1,
                    got: t,
                });
            }
        }
        let cross: Vec<f64> = self
            .times
            .iter()
            .zip(&self.actions)
            .map(|(&ti, &ai)| p.reward_cov(ti, ai, t, arm))
            .collect();
        let diag = p.reward_cov(t, arm, t, arm) + p.model.noise_var;
        let row = self.factor.append_row(cross, diag)?;
        let n = row.len();
        let l_nn = self.factor.row(n)[n];
        let z = (reward - dot(&row, &self.whitened)) / l_nn;
        self.whitened.push(z);
        self.rewards.push(reward);
        self.actions.push(arm);
        self.times.push(t);
        Ok(())
    }

    /// `L⁻¹ Cov(R, target_{t,a})` for each arm.
    fn whitened_cross(&self, target: Target, t: usize) -> Vec<Vec<f64>> {
        let p = &*self.prior;
        let mut cols: Vec<Vec<f64>> = (0..p.model.k)
            .map(|a| {
                self.times
                    .iter()
                    .zip(&self.actions)
                    .map(|(&ti, &ai)| p.target_cov(target, t, a, ti, ai))
                    .collect()
            })
            .collect();
        self.factor.solve_many_in_place(&mut cols);
        cols
    }

    /// Joint posterior of the target for all arms at period `t`.
    pub fn posterior_at(&self, target: Target, t: usize) -> Result<ConditionalGaussian> {
        let p = &*self.prior;
        ensure(t < p.horizon, || format!("period {t} beyond horizon {}", p.horizon))?;
        let k = p.model.k;
        let v = self.whitened_cross(target, t);
        let mean = v.iter().map(|va| dot(va, &self.whitened)).collect();
        let var = p.target_var(target);
        let cov = SymMatrix::from_fn(k, |a, b| {
            let prior = if a == b { var } else { 0.0 };
            prior - dot(&v[a], &v[b])
        });
        Ok(ConditionalGaussian {
            index: (0..k).collect(),
            mean,
            cov,
        })
    }

    /// One joint posterior draw of the target for all arms at period `t`.
    pub fn sample_at<R: Rng + ?Sized>(&self, target: Target, t: usize, rng: &mut R) -> Result<Vec<f64>> {
        let post = self.posterior_at(target, t)?;
        // Floor tiny negative diagonals from cancellation before factoring.
        let k = post.cov.dim();
        let cov = SymMatrix::from_fn(k, |a, b| {
            let c = post.cov.get(a, b);
            if a == b {
                c.max(0.0)
            } else {
                c
            }
        });
        let chol = cholesky(&cov, PRIOR_JITTER)?;
        mvn_sample(&post.mean, &chol, rng)
    }

    /// One joint posterior draw of the arm-specific latent paths over
    /// periods `0..len`, returned as `k` vectors of length `len`.
    ///
    /// Draws a prior sample of latents and rewards, then corrects it by
    /// `Cov(x, R) Cov(R)⁻¹ (R - R̃)`, which has exactly the posterior law.
    pub fn sample_paths<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let p = &*self.prior;
        let (idio_sampler, common_sampler) = p
            .samplers
            .as_ref()
            .ok_or_else(|| crate::error::invalid("prior was built without path samplers"))?;
        ensure(len <= p.horizon, || format!("path length {len} beyond horizon {}", p.horizon))?;
        let need = self.times.last().map_or(0, |&t| t + 1);
        ensure(len >= need, || format!("path length {len} shorter than history ({need})"))?;
        let k = p.model.k;
        let fixed_sd = p.model.fixed_var.sqrt();
        let mut paths: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let f = fixed_sd * rng.sample::<f64, _>(StandardNormal);
                let mut g = idio_sampler.sample_prefix(len, rng);
                g.iter_mut().for_each(|x| *x += f);
                g
            })
            .collect();
        let common = match common_sampler {
            Some(c) if need > 0 => c.sample_prefix(need, rng),
            _ => vec![0.0; need],
        };
        let noise_sd = p.model.noise_var.sqrt();
        let mut w: Vec<f64> = (0..self.len())
            .map(|i| {
                let (ti, ai) = (self.times[i], self.actions[i]);
                let eps: f64 = rng.sample(StandardNormal);
                let prior_r = common[ti] + paths[ai][ti] + noise_sd * eps;
                self.rewards[i] - prior_r
            })
            .collect();
        self.factor.solve_in_place(&mut w);
        self.factor.solve_transpose_in_place(&mut w);
        for (i, &wi) in w.iter().enumerate() {
            let (ti, ai) = (self.times[i], self.actions[i]);
            let fixed = p.model.fixed_var * wi;
            for (s, x) in paths[ai].iter_mut().enumerate() {
                *x += fixed + p.idio(s, ti) * wi;
            }
        }
        Ok(paths)
    }
}

/// One reward observation in a bandit history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub arm: usize,
    pub reward: f64,
}

/// Exact posterior of the arm-specific latent means at period `t` given the
/// full history, for a known Gaussian-process model.
pub fn ts_exact_gp_posterior(
    model: &GpModel,
    history: &[Observation],
    t: usize,
    horizon: usize,
) -> Result<ConditionalGaussian> {
    let mut post = GpPosterior::new(Arc::new(GpPrior::new(*model, horizon)?));
    for o in history {
        post.push(o.t, o.arm, o.reward)?;
    }
    post.posterior_at(Target::Latent, t)
}
