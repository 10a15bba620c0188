use std::sync::Arc;

use super::{Clock, Params, Policy, PolicyContext, PolicyFactory, PolicySpec};
use crate::env::{argmax, EnvSpec};
use crate::error::{ensure, Result};
use crate::gaussian::{kalman_diffuse, kalman_update, GaussianBelief};
use crate::gp::{GpPosterior, GpPrior, Target};
use crate::rng::SimRng;

/// Thompson sampling with the exact Gaussian-process posterior of every
/// arm's arm-specific latent mean.
#[derive(Debug, Clone)]
pub struct TsExactGp {
    posterior: GpPosterior,
    clock: Clock,
}

impl TsExactGp {
    pub fn new(prior: Arc<GpPrior>) -> Self {
        Self {
            posterior: GpPosterior::new(prior),
            clock: Clock::default(),
        }
    }

    pub fn posterior(&self) -> &GpPosterior {
        &self.posterior
    }
}

impl Policy for TsExactGp {
    fn id(&self) -> &str {
        "ts_exact"
    }

    fn act(&mut self, t: usize, rng: &mut SimRng) -> Result<usize> {
        Ok(argmax(&self.posterior.sample_at(Target::Latent, t, rng)?))
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.clock.tick(t)?;
        self.posterior.push(t, arm, reward)
    }
}

pub(super) fn build_exact(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["env"])?;
    let model = p.gp_model(ctx)?;
    let prior = Arc::new(GpPrior::new(model, ctx.horizon)?);
    Ok(PolicyFactory::new("ts_exact".into(), p.finish(), move || {
        Box::new(TsExactGp::new(prior.clone()))
    }))
}

/// Thompson sampling for independent AR(1) arms with scalar Kalman filters.
///
/// `beliefs` always hold the predictive law of the current period's latent
/// means: an observation updates the played arm, then every arm diffuses.
#[derive(Debug, Clone)]
pub struct KalmanTs {
    alpha: f64,
    sigma_xi_sq: f64,
    sigma_w_sq: f64,
    beliefs: Vec<GaussianBelief>,
    clock: Clock,
}

impl KalmanTs {
    /// Starts every arm at the stationary law `N(0, σ_ξ²/(1-α²))`.
    pub fn new(k: usize, alpha: f64, sigma_xi_sq: f64, sigma_w_sq: f64) -> Result<Self> {
        ensure(alpha.abs() < 1.0, || format!("alpha must satisfy |alpha| < 1, got {alpha}"))?;
        ensure(sigma_xi_sq >= 0.0, || format!("sigma_xi_sq must be non-negative, got {sigma_xi_sq}"))?;
        ensure(sigma_w_sq > 0.0, || format!("sigma_w_sq must be positive, got {sigma_w_sq}"))?;
        let v = sigma_xi_sq / (1.0 - alpha * alpha);
        Self::with_beliefs(vec![GaussianBelief { mean: 0.0, variance: v }; k], alpha, sigma_xi_sq, sigma_w_sq)
    }

    pub fn with_beliefs(
        beliefs: Vec<GaussianBelief>,
        alpha: f64,
        sigma_xi_sq: f64,
        sigma_w_sq: f64,
    ) -> Result<Self> {
        ensure(beliefs.len() >= 2, || "need at least 2 arms".into())?;
        ensure(sigma_w_sq > 0.0, || format!("sigma_w_sq must be positive, got {sigma_w_sq}"))?;
        Ok(Self {
            alpha,
            sigma_xi_sq,
            sigma_w_sq,
            beliefs,
            clock: Clock::default(),
        })
    }

    pub fn beliefs(&self) -> &[GaussianBelief] {
        &self.beliefs
    }
}

impl Policy for KalmanTs {
    fn id(&self) -> &str {
        "ts_kalman"
    }

    fn act(&mut self, _t: usize, rng: &mut SimRng) -> Result<usize> {
        let draws: Vec<f64> = self.beliefs.iter().map(|b| b.sample(rng)).collect();
        Ok(argmax(&draws))
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        ensure(arm < self.beliefs.len(), || format!("arm {arm} out of range"))?;
        self.clock.tick(t)?;
        self.beliefs[arm] = kalman_update(self.beliefs[arm], reward, self.sigma_w_sq)?;
        for b in self.beliefs.iter_mut() {
            *b = kalman_diffuse(*b, self.alpha, self.sigma_xi_sq);
        }
        Ok(())
    }
}

pub(super) fn build_kalman(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["alpha", "sigma_xi_sq", "sigma_w_sq"])?;
    let (alpha, sxi, sw) = match ctx.env {
        EnvSpec::Ar1 {
            alpha,
            sigma_xi_sq,
            sigma_w_sq,
            ..
        } => (
            p.f64_or("alpha", alpha)?,
            p.f64_or("sigma_xi_sq", sigma_xi_sq)?,
            p.f64_or("sigma_w_sq", sigma_w_sq)?,
        ),
        _ => (p.req_f64("alpha")?, p.req_f64("sigma_xi_sq")?, p.req_f64("sigma_w_sq")?),
    };
    let k = ctx.arms();
    let template = KalmanTs::new(k, alpha, sxi, sw)?;
    Ok(PolicyFactory::new("ts_kalman".into(), p.finish(), move || {
        Box::new(template.clone())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GpModel;
    use crate::latent::{Kernel, SeKernel};
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Exact-posterior model equivalent to independent AR(1) arms.
    fn ar1_model(k: usize, alpha: f64, sigma_xi_sq: f64, sigma_w_sq: f64) -> GpModel {
        GpModel {
            k,
            noise_var: sigma_w_sq,
            common: None,
            idio: crate::latent::Kernel::Ar1 {
                alpha,
                innovation_var: sigma_xi_sq,
            },
            fixed_var: 0.0,
        }
    }

    #[test]
    fn kalman_matches_exact_posterior() {
        let mut rng = rng_from(5, &[]);
        for case in 0..20 {
            let k = rng.random_range(2..4);
            let alpha = rng.random_range(-0.95..0.99);
            let sxi = rng.random_range(0.01..1.0);
            let sw = rng.random_range(0.1..2.0);
            let horizon = 60;
            let prior = Arc::new(GpPrior::new(ar1_model(k, alpha, sxi, sw), horizon).unwrap());
            let mut exact = TsExactGp::new(prior);
            let mut kal = KalmanTs::new(k, alpha, sxi, sw).unwrap();
            for t in 0..horizon - 1 {
                let a = rng.random_range(0..k);
                let r: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
                exact.observe(t, a, r).unwrap();
                kal.observe(t, a, r).unwrap();
                let post = exact.posterior().posterior_at(Target::Latent, t + 1).unwrap();
                for (arm, b) in kal.beliefs().iter().enumerate() {
                    assert!((post.mean[arm] - b.mean).abs() < 1e-8, "case {case} t {t}");
                    assert!((post.cov.get(arm, arm) - b.variance).abs() < 1e-8, "case {case} t {t}");
                }
            }
        }
    }

    #[test]
    fn certain_beliefs_always_pick_the_best() {
        let beliefs = vec![
            GaussianBelief { mean: 0.0, variance: 0.0 },
            GaussianBelief { mean: 1.0, variance: 0.0 },
        ];
        let mut p = KalmanTs::with_beliefs(beliefs, 1.0, 0.0, 1.0).unwrap();
        let mut rng = rng_from(6, &[]);
        assert!((0..100).all(|t| p.act(t, &mut rng).unwrap() == 1));
    }

    #[test]
    fn first_period_is_symmetric() {
        let model = GpModel {
            k: 2,
            noise_var: 1.0,
            common: Some(Kernel::SquaredExponential(SeKernel::unit(10.0).unwrap())),
            idio: Kernel::SquaredExponential(SeKernel::unit(50.0).unwrap()),
            fixed_var: 0.0,
        };
        let prior = Arc::new(GpPrior::new(model, 10).unwrap());
        let mut p = TsExactGp::new(prior);
        let mut rng = rng_from(7, &[]);
        let n = 20_000;
        let zeros = (0..n).filter(|_| p.act(0, &mut rng).unwrap() == 0).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn probability_matching_on_frozen_history() {
        let model = GpModel {
            k: 3,
            noise_var: 1.0,
            common: Some(Kernel::SquaredExponential(SeKernel::unit(10.0).unwrap())),
            idio: Kernel::SquaredExponential(SeKernel::unit(20.0).unwrap()),
            fixed_var: 0.0,
        };
        let horizon = 40;
        let prior = Arc::new(GpPrior::new(model, horizon).unwrap());
        let mut p = TsExactGp::new(prior);
        let mut rng = rng_from(8, &[]);
        for t in 0..30 {
            let a = t % 3;
            let r = [0.4, 0.1, 0.3][a] + rng.sample::<f64, _>(StandardNormal);
            p.observe(t, a, r).unwrap();
        }
        let t = 30;
        let n = 100_000;
        let mut freq = [0.0; 3];
        for _ in 0..n {
            freq[p.act(t, &mut rng).unwrap()] += 1.0 / n as f64;
        }
        // Oracle: 3x3 Cholesky written out by hand, 10^6 draws.
        let post = p.posterior().posterior_at(Target::Latent, t).unwrap();
        let c = |i, j| post.cov.get(i, j);
        let l00 = c(0, 0).sqrt();
        let l10 = c(1, 0) / l00;
        let l20 = c(2, 0) / l00;
        let l11 = (c(1, 1) - l10 * l10).sqrt();
        let l21 = (c(2, 1) - l20 * l10) / l11;
        let l22 = (c(2, 2) - l20 * l20 - l21 * l21).sqrt();
        let mut orng = rng_from(9, &[]);
        let m = 1_000_000;
        let mut oracle = [0.0; 3];
        for _ in 0..m {
            let z: [f64; 3] = [orng.sample(StandardNormal), orng.sample(StandardNormal), orng.sample(StandardNormal)];
            let x = [
                post.mean[0] + l00 * z[0],
                post.mean[1] + l10 * z[0] + l11 * z[1],
                post.mean[2] + l20 * z[0] + l21 * z[1] + l22 * z[2],
            ];
            oracle[argmax(&x)] += 1.0 / m as f64;
        }
        let tv: f64 = 0.5 * (0..3).map(|a| (freq[a] - oracle[a]).abs()).sum::<f64>();
        assert!(tv < 0.02, "tv {tv} freq {freq:?} oracle {oracle:?}");
    }
}
