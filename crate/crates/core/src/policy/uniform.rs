use rand::Rng;

use super::{Clock, Params, Policy, PolicyContext, PolicyFactory, PolicySpec};
use crate::error::Result;
use crate::rng::SimRng;

/// Plays an arm uniformly at random every period.
#[derive(Debug, Clone)]
pub struct Uniform {
    k: usize,
    clock: Clock,
}

impl Uniform {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            clock: Clock::default(),
        }
    }
}

impl Policy for Uniform {
    fn id(&self) -> &str {
        "uniform"
    }

    fn act(&mut self, _t: usize, rng: &mut SimRng) -> Result<usize> {
        Ok(rng.random_range(0..self.k))
    }

    fn observe(&mut self, t: usize, _arm: usize, _reward: f64) -> Result<()> {
        self.clock.tick(t)
    }
}

pub(super) fn build(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    let p = Params::new(spec, &[])?;
    let k = ctx.arms();
    Ok(PolicyFactory::new("uniform".into(), p.finish(), move || {
        Box::new(Uniform::new(k))
    }))
}
