use std::collections::VecDeque;

use super::{fmt_num, Clock, Observation, Params, Policy, PolicyContext, PolicyFactory, PolicySpec};
use crate::env::argmax;
use crate::error::{ensure, Result};
use crate::gaussian::GaussianBelief;
use crate::rng::SimRng;

/// Windowed belief with one prior pseudo-observation at zero:
/// mean `ΣR / (1+N)`, variance `1 / (1+N)` over the arm's window records.
pub fn sw_ts_belief<'a>(window: impl IntoIterator<Item = &'a Observation>, arm: usize) -> GaussianBelief {
    let (sum, n) = window
        .into_iter()
        .filter(|o| o.arm == arm)
        .fold((0.0, 0usize), |(s, n), o| (s + o.reward, n + 1));
    let denom = 1.0 + n as f64;
    GaussianBelief {
        mean: sum / denom,
        variance: 1.0 / denom,
    }
}

/// Windowed upper confidence index `ΣR/N + β/√N`; `+∞` when the arm has no
/// record in the window.
pub fn sw_ucb_index<'a>(window: impl IntoIterator<Item = &'a Observation>, arm: usize, beta: f64) -> f64 {
    let (sum, n) = window
        .into_iter()
        .filter(|o| o.arm == arm)
        .fold((0.0, 0usize), |(s, n), o| (s + o.reward, n + 1));
    if n == 0 {
        return f64::INFINITY;
    }
    let n = n as f64;
    sum / n + beta / n.sqrt()
}

/// The most recent `len` observations.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    len: usize,
    buf: VecDeque<Observation>,
    clock: Clock,
}

impl SlidingWindow {
    pub fn new(len: usize) -> Result<Self> {
        ensure(len >= 1, || format!("window length must be at least 1, got {len}"))?;
        Ok(Self {
            len,
            buf: VecDeque::with_capacity(len + 1),
            clock: Clock::default(),
        })
    }

    pub fn push(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.clock.tick(t)?;
        self.buf.push_back(Observation { t, arm, reward });
        if self.buf.len() > self.len {
            self.buf.pop_front();
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.buf.iter()
    }
}

/// Thompson sampling on sliding-window beliefs.
#[derive(Debug, Clone)]
pub struct SwTs {
    id: String,
    k: usize,
    window: SlidingWindow,
}

impl SwTs {
    pub fn new(k: usize, len: usize) -> Result<Self> {
        Ok(Self {
            id: format!("sw_ts_L{len}"),
            k,
            window: SlidingWindow::new(len)?,
        })
    }
}

impl Policy for SwTs {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, _t: usize, rng: &mut SimRng) -> Result<usize> {
        let draws: Vec<f64> = (0..self.k)
            .map(|a| sw_ts_belief(self.window.iter(), a).sample(rng))
            .collect();
        Ok(argmax(&draws))
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.window.push(t, arm, reward)
    }
}

/// Upper-confidence play on sliding-window means.
#[derive(Debug, Clone)]
pub struct SwUcb {
    id: String,
    k: usize,
    beta: f64,
    window: SlidingWindow,
}

impl SwUcb {
    pub fn new(k: usize, len: usize, beta: f64) -> Result<Self> {
        ensure(beta >= 0.0 && beta.is_finite(), || format!("beta must be non-negative, got {beta}"))?;
        Ok(Self {
            id: format!("sw_ucb_L{len}_b{}", fmt_num(beta)),
            k,
            beta,
            window: SlidingWindow::new(len)?,
        })
    }
}

impl Policy for SwUcb {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, _t: usize, _rng: &mut SimRng) -> Result<usize> {
        let idx: Vec<f64> = (0..self.k)
            .map(|a| sw_ucb_index(self.window.iter(), a, self.beta))
            .collect();
        Ok(argmax(&idx))
    }

    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()> {
        self.window.push(t, arm, reward)
    }
}

pub(super) fn build_sw_ts(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["L"])?;
    let len = p.req_usize("L")?;
    let template = SwTs::new(ctx.arms(), len)?;
    Ok(PolicyFactory::new(template.id.clone(), p.finish(), move || {
        Box::new(template.clone())
    }))
}

pub(super) fn build_sw_ucb(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let mut p = Params::new(spec, &["L", "beta"])?;
    let len = p.req_usize("L")?;
    let beta = p.req_f64("beta")?;
    let template = SwUcb::new(ctx.arms(), len, beta)?;
    Ok(PolicyFactory::new(template.id.clone(), p.finish(), move || {
        Box::new(template.clone())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn obs(t: usize, arm: usize, reward: f64) -> Observation {
        Observation { t, arm, reward }
    }

    #[test]
    fn belief_formula() {
        assert_eq!(sw_ts_belief(&[], 0), GaussianBelief { mean: 0.0, variance: 1.0 });
        assert_eq!(sw_ts_belief(&[obs(0, 1, 2.0)], 1), GaussianBelief { mean: 1.0, variance: 0.5 });
        let w: Vec<Observation> = (0..99).map(|t| obs(t, 0, 0.3)).collect();
        let b = sw_ts_belief(&w, 0);
        assert!((b.mean - 99.0 * 0.3 / 100.0).abs() < 1e-12);
        assert!((b.variance - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ucb_formula() {
        assert_eq!(sw_ucb_index(&[], 0, 2.0), f64::INFINITY);
        let w = [obs(0, 0, 1.0), obs(1, 0, 1.0)];
        assert!((sw_ucb_index(&w, 0, 1.0) - (1.0 + 0.5f64.sqrt())).abs() < 1e-12);
        assert_eq!(sw_ucb_index(&w, 0, 0.0), 1.0);
    }

    #[test]
    fn ucb_plays_untried_arms_first_in_index_order() {
        let mut p = SwUcb::new(3, 10, 1.0).unwrap();
        let mut rng = rng_from(0, &[]);
        let mut seen = vec![];
        for t in 0..3 {
            let a = p.act(t, &mut rng).unwrap();
            seen.push(a);
            p.observe(t, a, -5.0).unwrap();
        }
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn window_of_one_keeps_latest_only() {
        let mut w = SlidingWindow::new(1).unwrap();
        w.push(0, 0, 5.0).unwrap();
        w.push(1, 1, 2.0).unwrap();
        assert_eq!(w.iter().copied().collect::<Vec<_>>(), vec![obs(1, 1, 2.0)]);
        assert_eq!(sw_ts_belief(w.iter(), 0), GaussianBelief { mean: 0.0, variance: 1.0 });
    }

    #[test]
    fn old_observations_are_forgotten() {
        let len = 5;
        let mut a = SwTs::new(2, len).unwrap();
        let mut b = SwTs::new(2, len).unwrap();
        let mut ua = SwUcb::new(2, len, 1.0).unwrap();
        let mut ub = SwUcb::new(2, len, 1.0).unwrap();
        for t in 0..20 {
            let arm = (t * 7) % 2;
            let r = (t as f64).sin();
            let old = if t < 20 - len { 100.0 * r - 3.0 } else { r };
            a.observe(t, arm, r).unwrap();
            b.observe(t, arm, old).unwrap();
            ua.observe(t, arm, r).unwrap();
            ub.observe(t, arm, old).unwrap();
        }
        let (mut r1, mut r2) = (rng_from(3, &[]), rng_from(3, &[]));
        for _ in 0..50 {
            assert_eq!(a.act(20, &mut r1).unwrap(), b.act(20, &mut r2).unwrap());
        }
        assert_eq!(ua.act(20, &mut r1).unwrap(), ub.act(20, &mut r2).unwrap());
    }
}
