//! Cochran's Q, I-squared bands and subgroup decomposition.

use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

use crate::distributions::chi_square_sf;
use crate::effect_size::EffectEstimate;
use crate::error::{MetaError, Result};
use crate::pooling::{check_effects, pool, weighted_mean, Model, PooledResult};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeterogeneityBand {
    Low,
    Moderate,
    Substantial,
}

impl HeterogeneityBand {
    /// Bands are `[0, 25]`, `(25, 75]` and `(75, 100]`.
    pub fn classify(i2: f64) -> Self {
        if i2 <= 25.0 {
            HeterogeneityBand::Low
        } else if i2 <= 75.0 {
            HeterogeneityBand::Moderate
        } else {
            HeterogeneityBand::Substantial
        }
    }
}

impl fmt::Display for HeterogeneityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeterogeneityBand::Low => "low",
            HeterogeneityBand::Moderate => "moderate",
            HeterogeneityBand::Substantial => "substantial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeterogeneityReport {
    pub q: f64,
    pub df: usize,
    pub p: f64,
    /// Percent, in [0, 100].
    pub i2: f64,
    pub band: HeterogeneityBand,
    pub alpha: f64,
    /// Q-test rejects homogeneity at `alpha`.
    pub significant: bool,
}

/// `I^2 = max(0, (Q - df) / Q) * 100`, and 0 when `Q = 0`.
pub fn i_squared(q: f64, df: usize) -> f64 {
    if q > 0.0 {
        ((q - df as f64) / q).max(0.0) * 100.0
    } else {
        0.0
    }
}

pub fn cochran_q(effects: &[EffectEstimate]) -> Result<(f64, usize)> {
    check_effects(effects)?;
    Ok((q_statistic(effects), effects.len() - 1))
}

// Fixed-weight Q for any non-empty set; no size check.
fn q_statistic(effects: &[EffectEstimate]) -> f64 {
    let (theta, _) = weighted_mean(effects, 0.0);
    effects
        .iter()
        .map(|e| {
            let r = e.value() - theta;
            r * r / e.variance()
        })
        .sum()
}

pub fn heterogeneity_report(effects: &[EffectEstimate], alpha: f64) -> Result<HeterogeneityReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetaError::InvalidParameter {
            name: "alpha".into(),
            reason: format!("must lie in (0, 1), got {alpha}"),
        });
    }
    let (q, df) = cochran_q(effects)?;
    let p = chi_square_sf(q, df);
    let i2 = i_squared(q, df);
    Ok(HeterogeneityReport { q, df, p, i2, band: HeterogeneityBand::classify(i2), alpha, significant: p < alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupReport {
    pub model: Model,
    /// Keyed by subgroup label, in order of first appearance.
    pub groups: IndexMap<String, PooledResult>,
    pub q_within: IndexMap<String, f64>,
    pub q_total: f64,
    pub q_between: f64,
    pub df_between: usize,
    pub p_between: f64,
}

pub fn subgroup_analysis(effects: &[EffectEstimate], model: Model, ci_level: f64) -> Result<SubgroupReport> {
    check_effects(effects)?;
    let mut members: IndexMap<String, Vec<EffectEstimate>> = IndexMap::new();
    for e in effects {
        let label = e.subgroup().ok_or_else(|| MetaError::MissingSubgroup(e.study_id().to_string()))?;
        members.entry(label.to_string()).or_default().push(e.clone());
    }
    if members.len() < 2 {
        return Err(MetaError::InvalidParameter {
            name: "subgroup".into(),
            reason: format!("need at least 2 subgroups, found {}", members.len()),
        });
    }
    for (label, group) in &members {
        if group.len() < 2 {
            return Err(MetaError::InsufficientStudies { needed: 2, found: group.len(), group: Some(label.clone()) });
        }
    }

    let mut groups = IndexMap::new();
    let mut q_within = IndexMap::new();
    for (label, group) in &members {
        groups.insert(label.clone(), pool(group, model, ci_level)?);
        q_within.insert(label.clone(), q_statistic(group));
    }
    let q_total = q_statistic(effects);
    let q_between = (q_total - q_within.values().sum::<f64>()).max(0.0);
    let df_between = members.len() - 1;
    Ok(SubgroupReport {
        model,
        groups,
        q_within,
        q_total,
        q_between,
        df_between,
        p_between: chi_square_sf(q_between, df_between),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effect_size::Measure;
    use proptest::prelude::*;

    fn eff(values: &[(f64, f64)]) -> Vec<EffectEstimate> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(y, v))| {
                EffectEstimate::new(format!("s{i}"), Measure::StandardizedMeanDifference, y, v).unwrap()
            })
            .collect()
    }

    fn grouped(values: &[(f64, f64, &str)]) -> Vec<EffectEstimate> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(y, v, g))| {
                EffectEstimate::new(format!("s{i}"), Measure::MeanDifference, y, v).unwrap().with_subgroup(Some(g))
            })
            .collect()
    }

    #[test]
    fn q_examples() {
        assert_eq!(cochran_q(&eff(&[(0.4, 1.0), (0.4, 0.2), (0.4, 3.0)])).unwrap(), (0.0, 2));
        assert_eq!(cochran_q(&eff(&[(1.0, 1.0), (3.0, 1.0)])).unwrap(), (2.0, 1));
        // a study at the pooled estimate adds no residual
        assert_eq!(cochran_q(&eff(&[(1.0, 1.0), (3.0, 1.0), (2.0, 0.37)])).unwrap(), (2.0, 2));
        assert!(cochran_q(&eff(&[(1.0, 1.0)])).is_err());
    }

    #[test]
    fn report_examples() {
        let r = heterogeneity_report(&eff(&[(1.0, 1.0), (3.0, 1.0)]), DEFAULT_ALPHA).unwrap();
        assert_eq!(r.i2, 50.0);
        assert_eq!(r.band, HeterogeneityBand::Moderate);
        assert!((r.p - chi_square_sf(2.0, 1)).abs() < 1e-15);
        assert!(!r.significant); // p ~ 0.157
        let r = heterogeneity_report(&eff(&[(1.0, 1.0), (1.5, 1.0), (0.8, 1.0)]), DEFAULT_ALPHA).unwrap();
        assert!(r.q <= r.df as f64);
        assert_eq!((r.i2, r.band), (0.0, HeterogeneityBand::Low));
        assert!(heterogeneity_report(&eff(&[(1.0, 1.0), (3.0, 1.0)]), 0.0).is_err());
    }

    #[test]
    fn band_edges() {
        assert_eq!(HeterogeneityBand::classify(0.0), HeterogeneityBand::Low);
        assert_eq!(HeterogeneityBand::classify(25.0), HeterogeneityBand::Low);
        assert_eq!(HeterogeneityBand::classify(25.000_001), HeterogeneityBand::Moderate);
        assert_eq!(HeterogeneityBand::classify(68.2), HeterogeneityBand::Moderate);
        assert_eq!(HeterogeneityBand::classify(75.0), HeterogeneityBand::Moderate);
        assert_eq!(HeterogeneityBand::classify(79.67), HeterogeneityBand::Substantial);
        assert_eq!(HeterogeneityBand::classify(100.0), HeterogeneityBand::Substantial);
    }

    #[test]
    fn subgroup_examples() {
        let e = grouped(&[(1.0, 1.0, "a"), (1.0, 1.0, "a"), (3.0, 1.0, "b"), (3.0, 1.0, "b")]);
        let r = subgroup_analysis(&e, Model::Fixed, 0.95).unwrap();
        assert_eq!(r.q_within.values().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!((r.q_total, r.q_between, r.df_between), (4.0, 4.0, 1));

        let e = grouped(&[(1.0, 1.0, "a"), (2.0, 0.5, "a"), (1.0, 1.0, "b"), (2.0, 0.5, "b")]);
        let r = subgroup_analysis(&e, Model::Random, 0.95).unwrap();
        assert!(r.q_between.abs() < 1e-12);
    }

    #[test]
    fn subgroup_errors() {
        let mut e = grouped(&[(1.0, 1.0, "a"), (1.0, 1.0, "a"), (3.0, 1.0, "b"), (3.0, 1.0, "b")]);
        e.push(EffectEstimate::new("bare", Measure::MeanDifference, 0.0, 1.0).unwrap());
        assert!(
            matches!(subgroup_analysis(&e, Model::Fixed, 0.95), Err(MetaError::MissingSubgroup(ref id)) if id == "bare")
        );
        let e = grouped(&[(1.0, 1.0, "a"), (1.0, 1.0, "a"), (3.0, 1.0, "b")]);
        assert!(matches!(
            subgroup_analysis(&e, Model::Fixed, 0.95),
            Err(MetaError::InsufficientStudies { group: Some(ref g), .. }) if g == "b"
        ));
    }

    #[test]
    fn subgroup_order_invariance() {
        let a = grouped(&[(0.2, 0.3, "x"), (1.1, 0.5, "y"), (0.5, 0.2, "x"), (2.0, 0.9, "y"), (0.9, 0.4, "x")]);
        let b = vec![a[4].clone(), a[3].clone(), a[0].clone(), a[1].clone(), a[2].clone()];
        let (ra, rb) =
            (subgroup_analysis(&a, Model::Random, 0.95).unwrap(), subgroup_analysis(&b, Model::Random, 0.95).unwrap());
        assert!((ra.q_between - rb.q_between).abs() < 1e-12);
        for g in ["x", "y"] {
            assert!((ra.groups[g].estimate - rb.groups[g].estimate).abs() < 1e-12);
            assert!((ra.q_within[g] - rb.q_within[g]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn q_is_order_invariant(mut vals in prop::collection::vec((-3f64..3.0, 0.05f64..2.0), 2..10), seed in any::<u64>()) {
            let q1 = cochran_q(&eff(&vals)).unwrap().0;
            let n = vals.len();
            vals.rotate_left((seed as usize) % n);
            vals.reverse();
            let q2 = cochran_q(&eff(&vals)).unwrap().0;
            prop_assert!((q1 - q2).abs() < 1e-9 * (1.0 + q1));
        }

        #[test]
        fn q_decomposes_additively(vals in prop::collection::vec((-3f64..3.0, 0.05f64..2.0, 0usize..3), 6..14)) {
            let labels = ["a", "b", "c"];
            let mut rows: Vec<(f64, f64, &str)> = vals.iter().map(|&(y, v, g)| (y, v, labels[g])).collect();
            // guarantee every group has two members
            for (i, l) in labels.iter().enumerate() {
                rows[2 * i].2 = l;
                rows[2 * i + 1].2 = l;
            }
            let r = subgroup_analysis(&grouped(&rows), Model::Fixed, 0.95).unwrap();
            let sum = r.q_between + r.q_within.values().sum::<f64>();
            prop_assert!((r.q_total - sum).abs() < 1e-9);
        }

        #[test]
        fn q_and_i2_are_scale_free(vals in prop::collection::vec((-3f64..3.0, 0.05f64..2.0), 2..10), c in 0.1f64..10.0) {
            let a = heterogeneity_report(&eff(&vals), DEFAULT_ALPHA).unwrap();
            let scaled: Vec<_> = vals.iter().map(|&(y, v)| (c * y, c * c * v)).collect();
            let b = heterogeneity_report(&eff(&scaled), DEFAULT_ALPHA).unwrap();
            prop_assert!((a.q - b.q).abs() < 1e-9 * (1.0 + a.q));
            prop_assert!((a.i2 - b.i2).abs() < 1e-9);
            // only compare bands away from the edges
            if (a.i2 - 25.0).abs() > 1e-6 && (a.i2 - 75.0).abs() > 1e-6 {
                prop_assert_eq!(a.band, b.band);
            }
        }
    }
}
