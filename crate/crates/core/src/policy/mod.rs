//! Decision rules behind one sequential `act` / `observe` interface, built
//! from declarative specs through a name-keyed registry.
//!
//! Policies only ever see their own history of `(period, arm, reward)`;
//! the latent path stays with the harness.

mod satisficing;
mod thompson;
mod uniform;
mod window;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::env::{EnvSpec, GpModel};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use crate::gp::{ts_exact_gp_posterior, Observation};
pub use satisficing::{dp_best_sequence, sts_distortion_target, StsDistortion, StsFixedMean, StsSwitchDp};
pub use thompson::{KalmanTs, TsExactGp};
pub use uniform::Uniform;
pub use window::{sw_ts_belief, sw_ucb_index, SlidingWindow, SwTs, SwUcb};

/// A sequential decision rule with private state.
pub trait Policy: Send {
    fn id(&self) -> &str;

    /// Chooses the arm for period `t` (0-based).
    fn act(&mut self, t: usize, rng: &mut SimRng) -> Result<usize>;

    /// Records the reward for period `t`; periods must arrive in order.
    fn observe(&mut self, t: usize, arm: usize, reward: f64) -> Result<()>;
}

/// Tracks the next expected period for a policy.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Clock {
    next: usize,
}

impl Clock {
    pub(crate) fn tick(&mut self, t: usize) -> Result<()> {
        if t != self.next {
            return Err(Error::OutOfOrder {
                expected: self.next,
                got: t,
            });
        }
        self.next += 1;
        Ok(())
    }
}

/// Declarative policy description: a registry key plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl PolicySpec {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            params: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// What a policy may know before play starts: the environment family
/// (its prior, never a realized path) and the horizon.
#[derive(Debug, Clone)]
pub struct PolicyContext {
    pub env: EnvSpec,
    pub horizon: usize,
}

impl PolicyContext {
    pub fn arms(&self) -> usize {
        self.env.arms()
    }
}

type MakeFn = dyn Fn() -> Box<dyn Policy> + Send + Sync;

/// Validated policy configuration that creates fresh policy instances,
/// sharing any expensive precomputation between them.
#[derive(Clone)]
pub struct PolicyFactory {
    id: String,
    resolved: PolicySpec,
    make: Arc<MakeFn>,
}

impl PolicyFactory {
    pub fn new(
        id: String,
        resolved: PolicySpec,
        make: impl Fn() -> Box<dyn Policy> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id,
            resolved,
            make: Arc::new(make),
        }
    }

    /// Stable identifier used in output tables.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// The spec with every default filled in.
    pub fn resolved(&self) -> &PolicySpec {
        &self.resolved
    }

    pub fn create(&self) -> Box<dyn Policy> {
        (self.make)()
    }
}

impl fmt::Debug for PolicyFactory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicyFactory")
            .field("id", &self.id)
            .field("resolved", &self.resolved)
            .finish()
    }
}

/// Parameter accessor that rejects unknown keys and records resolved values.
pub struct Params<'a> {
    kind: &'a str,
    map: &'a Map<String, Value>,
    resolved: Map<String, Value>,
}

impl<'a> Params<'a> {
    fn new(spec: &'a PolicySpec, allowed: &[&str]) -> Result<Self> {
        for key in spec.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "policy `{}` does not take parameter `{key}` (allowed: {})",
                    spec.kind,
                    if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
                )));
            }
        }
        Ok(Self {
            kind: &spec.kind,
            map: &spec.params,
            resolved: Map::new(),
        })
    }

    fn err(&self, msg: String) -> Error {
        Error::Config(format!("policy `{}`: {msg}", self.kind))
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => {
                let x = v
                    .as_f64()
                    .ok_or_else(|| self.err(format!("`{key}` must be a number, got {v}")))?;
                self.resolved.insert(key.into(), v.clone());
                Ok(Some(x))
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.opt_f64(key)? {
            Some(x) => Ok(x),
            None => {
                self.resolved.insert(key.into(), number(default));
                Ok(default)
            }
        }
    }

    fn req_f64(&mut self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| self.err(format!("missing required parameter `{key}`")))
    }

    fn usize_value(&self, key: &str, v: &Value) -> Result<usize> {
        v.as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| self.err(format!("`{key}` must be a non-negative integer, got {v}")))
    }

    fn req_usize(&mut self, key: &str) -> Result<usize> {
        let v = self
            .map
            .get(key)
            .ok_or_else(|| self.err(format!("missing required parameter `{key}`")))?;
        let x = self.usize_value(key, v)?;
        self.resolved.insert(key.into(), v.clone());
        Ok(x)
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        let x = match self.map.get(key) {
            Some(v) => self.usize_value(key, v)?,
            None => default,
        };
        self.resolved.insert(key.into(), Value::from(x));
        Ok(x)
    }

    /// Optional environment override; defaults to the experiment's own.
    fn env_or(&mut self, ctx: &PolicyContext) -> Result<EnvSpec> {
        let env = match self.map.get("env") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| self.err(format!("bad `env`: {e}")))?,
            None => ctx.env.clone(),
        };
        env.validate()?;
        if env.arms() != ctx.arms() {
            return Err(self.err(format!(
                "assumed environment has {} arms but the experiment has {}",
                env.arms(),
                ctx.arms()
            )));
        }
        self.resolved.insert("env".into(), serde_json::to_value(&env)?);
        Ok(env)
    }

    fn gp_model(&mut self, ctx: &PolicyContext) -> Result<GpModel> {
        let env = self.env_or(ctx)?;
        env.gp_model().ok_or_else(|| {
            self.err(format!(
                "needs a Gaussian-process environment (gp_two_type, ar1 or fixed_plus_gp), got `{}`",
                env.kind()
            ))
        })
    }

    fn finish(self) -> PolicySpec {
        PolicySpec {
            kind: self.kind.to_string(),
            params: self.resolved,
        }
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Compact decimal rendering used inside policy identifiers.
pub(crate) fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        x.to_string()
    }
}

/// Builds a factory from a spec in a given context.
pub type BuildFn = fn(&PolicySpec, &PolicyContext) -> Result<PolicyFactory>;

/// Name-keyed collection of policy builders.
#[derive(Clone)]
pub struct PolicyRegistry {
    builders: BTreeMap<String, BuildFn>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("uniform", uniform::build);
        r.register("ts_exact", thompson::build_exact);
        r.register("ts_kalman", thompson::build_kalman);
        r.register("sw_ts", window::build_sw_ts);
        r.register("sw_ucb", window::build_sw_ucb);
        r.register("sts_distortion", satisficing::build_distortion);
        r.register("sts_switch_dp", satisficing::build_switch_dp);
        r.register("sts_fixed", satisficing::build_fixed);
        r
    }
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    /// Adds or replaces a builder.
    pub fn register(&mut self, kind: &str, build: BuildFn) {
        self.builders.insert(kind.to_string(), build);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
        let b = self.builders.get(&spec.kind).ok_or_else(|| {
            Error::Config(format!(
                "unknown policy kind `{}` (known: {})",
                spec.kind,
                self.kinds().collect::<Vec<_>>().join(", ")
            ))
        })?;
        b(spec, ctx)
    }
}

/// Builds with the default registry.
pub fn build_policy(spec: &PolicySpec, ctx: &PolicyContext) -> Result<PolicyFactory> {
    PolicyRegistry::default().build(spec, ctx)
}
