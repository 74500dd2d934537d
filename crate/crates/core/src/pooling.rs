//! Inverse-variance pooling under fixed- and random-effects models.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::distributions::{normal_quantile, two_sided_p};
use crate::effect_size::{EffectEstimate, Measure};
use crate::error::{MetaError, Result};
use crate::heterogeneity::cochran_q;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Fixed,
    Random,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Fixed => "fixed",
            Model::Random => "random",
        })
    }
}

impl FromStr for Model {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Model::Fixed),
            "random" => Ok(Model::Random),
            other => Err(MetaError::InvalidParameter {
                name: "model".into(),
                reason: format!("unknown model `{other}` (expected fixed or random)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledResult {
    pub model: Model,
    pub measure: Measure,
    pub k: usize,
    pub estimate: f64,
    pub variance: f64,
    pub se: f64,
    pub ci_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: f64,
    pub p: f64,
    pub tau2: f64,
    /// Normalized weights keyed by study_id, in input order.
    pub weights: IndexMap<String, f64>,
}

impl PooledResult {
    /// True when the confidence interval excludes the null (0 on the
    /// analysis scale).
    pub fn significant(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }

    pub fn display_estimate(&self) -> f64 {
        self.measure.to_display(self.estimate)
    }

    pub fn display_ci(&self) -> (f64, f64) {
        (self.measure.to_display(self.ci_low), self.measure.to_display(self.ci_high))
    }
}

pub(crate) fn check_ci_level(ci_level: f64) -> Result<()> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(MetaError::InvalidParameter {
            name: "ci_level".into(),
            reason: format!("must lie in (0, 1), got {ci_level}"),
        });
    }
    Ok(())
}

/// Checks the shared preconditions: at least two effects, one measure.
pub(crate) fn check_effects(effects: &[EffectEstimate]) -> Result<Measure> {
    if effects.len() < 2 {
        return Err(MetaError::insufficient(2, effects.len()));
    }
    let measure = effects[0].measure();
    if let Some(other) = effects.iter().map(|e| e.measure()).find(|&m| m != measure) {
        return Err(MetaError::MeasureMismatch { first: measure, other });
    }
    Ok(measure)
}

/// Inverse-variance weighted mean of the effects with weights `1/(v + tau2)`.
/// Returns `(estimate, sum_of_weights)`. Needs at least one effect.
pub(crate) fn weighted_mean(effects: &[EffectEstimate], tau2: f64) -> (f64, f64) {
    let (mut sw, mut swy) = (0.0, 0.0);
    for e in effects {
        let w = 1.0 / (e.variance() + tau2);
        sw += w;
        swy += w * e.value();
    }
    (swy / sw, sw)
}

/// Pools with weights `1/(v_i + tau2)`; `tau2 = 0` is the fixed-effect model.
pub fn pool_with_tau2(effects: &[EffectEstimate], tau2: f64, model: Model, ci_level: f64) -> Result<PooledResult> {
    let measure = check_effects(effects)?;
    check_ci_level(ci_level)?;
    if !(tau2.is_finite() && tau2 >= 0.0) {
        return Err(MetaError::InvalidParameter { name: "tau2".into(), reason: format!("must be >= 0, got {tau2}") });
    }
    let (estimate, sw) = weighted_mean(effects, tau2);
    let variance = 1.0 / sw;
    let se = variance.sqrt();
    let crit = normal_quantile(0.5 + ci_level / 2.0);
    let z = estimate / se;
    let weights = effects.iter().map(|e| (e.study_id().to_string(), (1.0 / (e.variance() + tau2)) / sw)).collect();
    Ok(PooledResult {
        model,
        measure,
        k: effects.len(),
        estimate,
        variance,
        se,
        ci_level,
        ci_low: estimate - crit * se,
        ci_high: estimate + crit * se,
        z,
        p: two_sided_p(z),
        tau2,
        weights,
    })
}

pub fn pool_fixed(effects: &[EffectEstimate], ci_level: f64) -> Result<PooledResult> {
    pool_with_tau2(effects, 0.0, Model::Fixed, ci_level)
}

/// DerSimonian-Laird moment estimate of between-study variance, truncated at 0.
pub fn dersimonian_laird_tau2(effects: &[EffectEstimate]) -> Result<f64> {
    let (q, df) = cochran_q(effects)?;
    let (sw, sw2) = effects.iter().fold((0.0, 0.0), |(s1, s2), e| {
        let w = 1.0 / e.variance();
        (s1 + w, s2 + w * w)
    });
    let c = sw - sw2 / sw;
    if c.is_nan() || c <= 0.0 {
        return Err(MetaError::DegenerateWeights("sum(w) - sum(w^2)/sum(w) is zero".into()));
    }
    Ok(((q - df as f64) / c).max(0.0))
}

pub fn pool_random(effects: &[EffectEstimate], ci_level: f64) -> Result<PooledResult> {
    let tau2 = dersimonian_laird_tau2(effects)?;
    pool_with_tau2(effects, tau2, Model::Random, ci_level)
}

pub fn pool(effects: &[EffectEstimate], model: Model, ci_level: f64) -> Result<PooledResult> {
    match model {
        Model::Fixed => pool_fixed(effects, ci_level),
        Model::Random => pool_random(effects, ci_level),
    }
}
