//! Funnel-plot coordinates and the trim-and-fill adjustment.
//!
//! Trimming uses the L0 estimator of the number of missing studies:
//! effects are centred at the fixed-effect estimate of the trimmed set,
//! ranked by absolute deviation (midranks for ties), and
//! `L0 = (4 S - k (k + 1)) / (2 k - 1)` where `S` is the rank sum on the
//! heavier side. The heavier side is fixed once from the full data.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::effect_size::EffectEstimate;
use crate::error::{MetaError, Result};
use crate::pooling::{check_effects, pool, weighted_mean, Model, PooledResult};

pub const ITERATION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunnelPoint {
    pub study_id: String,
    pub x: f64,
    /// Standard error.
    pub y: f64,
    pub imputed: bool,
}

pub fn funnel_points(effects: &[EffectEstimate]) -> Result<Vec<FunnelPoint>> {
    if effects.len() < 2 {
        return Err(MetaError::insufficient(2, effects.len()));
    }
    Ok(effects.iter().map(|e| point(e, false)).collect())
}

fn point(e: &EffectEstimate, imputed: bool) -> FunnelPoint {
    FunnelPoint { study_id: e.study_id().to_string(), x: e.value(), y: e.se(), imputed }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrimFillResult {
    /// Side of the funnel on which missing studies were imputed.
    pub side: Side,
    pub k0: usize,
    pub imputed: Vec<EffectEstimate>,
    /// Fixed-effect estimate of the trimmed set; the reflection axis.
    pub trimmed_estimate: f64,
    pub original: PooledResult,
    pub adjusted: PooledResult,
    pub iterations: usize,
}

impl TrimFillResult {
    /// Original points followed by imputed ones.
    pub fn funnel_points(&self, effects: &[EffectEstimate]) -> Vec<FunnelPoint> {
        effects.iter().map(|e| point(e, false)).chain(self.imputed.iter().map(|e| point(e, true))).collect()
    }
}

/// Values closer than this (relative to the largest magnitude) rank as ties,
/// so rounding noise cannot split studies that are mirror images.
const TIE_TOLERANCE: f64 = 1e-10;

/// Ranks of `values` (1-based), ties receiving the mean of their positions.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = TIE_TOLERANCE * scale;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[start]] <= eps {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Rank sums of positive and negative deviations from `center`.
fn signed_rank_sums(values: &[f64], center: f64) -> (f64, f64) {
    let centered: Vec<f64> = values.iter().map(|v| v - center).collect();
    let ranks = midranks(&centered.iter().map(|c| c.abs()).collect::<Vec<_>>());
    let eps = TIE_TOLERANCE * centered.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    centered.iter().zip(&ranks).fold((0.0, 0.0), |(pos, neg), (&c, &r)| {
        if c > eps {
            (pos + r, neg)
        } else if c < -eps {
            (pos, neg + r)
        } else {
            (pos, neg)
        }
    })
}

fn l0_estimate(rank_sum: f64, k: usize) -> usize {
    let k_f = k as f64;
    let l0 = (4.0 * rank_sum - k_f * (k_f + 1.0)) / (2.0 * k_f - 1.0);
    // f64::round rounds half away from zero
    (l0.round().max(0.0) as usize).min(k - 1)
}

pub fn trim_and_fill(effects: &[EffectEstimate], model: Model, ci_level: f64) -> Result<TrimFillResult> {
    if effects.len() < 3 {
        return Err(MetaError::insufficient(3, effects.len()));
    }
    check_effects(effects)?;
    let k = effects.len();
    let original = pool(effects, model, ci_level)?;

    let values: Vec<f64> = effects.iter().map(|e| e.value()).collect();
    let (center, _) = weighted_mean(effects, 0.0);
    let (pos, neg) = signed_rank_sums(&values, center);
    // excess on the right means studies are missing on the left
    let (side, orient) = if pos >= neg { (Side::Left, 1.0) } else { (Side::Right, -1.0) };

    let oriented: Vec<EffectEstimate> =
        effects.iter().map(|e| e.reflected(e.study_id().to_string(), orient * e.value())).collect();
    let oriented_values: Vec<f64> = oriented.iter().map(|e| e.value()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| oriented_values[i].total_cmp(&oriented_values[j]).then(i.cmp(&j)));

    let mut k0 = 0;
    let mut iterations = 0;
    let trimmed_center = loop {
        iterations += 1;
        if iterations > ITERATION_CAP {
            return Err(MetaError::NonConvergence { cap: ITERATION_CAP, last_k0: k0 });
        }
        let kept: Vec<EffectEstimate> = order[..k - k0].iter().map(|&i| oriented[i].clone()).collect();
        let (beta, _) = weighted_mean(&kept, 0.0);
        let (s, _) = signed_rank_sums(&oriented_values, beta);
        let next = l0_estimate(s, k);
        if next == k0 {
            break beta;
        }
        k0 = next;
    };

    let trimmed_estimate = orient * trimmed_center;
    let mut taken: HashSet<String> = effects.iter().map(|e| e.study_id().to_string()).collect();
    let imputed: Vec<EffectEstimate> = order[k - k0..]
        .iter()
        .map(|&i| {
            let e = &effects[i];
            let mut id = format!("{}_fill", e.study_id());
            while taken.contains(&id) {
                id.push('_');
            }
            taken.insert(id.clone());
            e.reflected(id, 2.0 * trimmed_estimate - e.value())
        })
        .collect();

    let adjusted = if k0 == 0 {
        original.clone()
    } else {
        let mut all = effects.to_vec();
        all.extend(imputed.iter().cloned());
        pool(&all, model, ci_level)?
    };

    Ok(TrimFillResult { side, k0, imputed, trimmed_estimate, original, adjusted, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Sensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Stability,
    pub difference: f64,
    pub threshold: f64,
}

/// Stable when `|original - adjusted| <= threshold` on the analysis scale.
pub fn compare_adjusted(result: &TrimFillResult, threshold: f64) -> Result<StabilityVerdict> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(MetaError::InvalidParameter {
            name: "threshold".into(),
            reason: format!("must be positive, got {threshold}"),
        });
    }
    let difference = (result.original.estimate - result.adjusted.estimate).abs();
    let verdict = if difference <= threshold { Stability::Stable } else { Stability::Sensitive };
    Ok(StabilityVerdict { verdict, difference, threshold })
}
