//! Leave-one-out re-analysis.

use serde::Serialize;

use crate::effect_size::EffectEstimate;
use crate::error::{MetaError, Result};
use crate::pooling::{check_effects, pool, Model, PooledResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaveOneOutRow {
    pub omitted_study_id: String,
    pub result: PooledResult,
    /// Significance of the CI differs from the full analysis.
    pub sign_flip: bool,
}

/// One complete re-analysis per omitted study, in input order. Each row
/// re-estimates tau2 on its own subset.
pub fn leave_one_out(effects: &[EffectEstimate], model: Model, ci_level: f64) -> Result<Vec<LeaveOneOutRow>> {
    if effects.len() < 3 {
        return Err(MetaError::insufficient(3, effects.len()));
    }
    check_effects(effects)?;
    let full = pool(effects, model, ci_level)?;
    (0..effects.len())
        .map(|i| {
            let rest: Vec<EffectEstimate> =
                effects.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, e)| e.clone()).collect();
            let result = pool(&rest, model, ci_level)?;
            Ok(LeaveOneOutRow {
                omitted_study_id: effects[i].study_id().to_string(),
                sign_flip: result.significant() != full.significant(),
                result,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RobustnessVerdict {
    pub robust: bool,
    /// Studies whose omission flips significance or the sign of the estimate.
    pub flagged: Vec<String>,
}

pub fn robustness_verdict(rows: &[LeaveOneOutRow], full: &PooledResult) -> RobustnessVerdict {
    let flagged: Vec<String> = rows
        .iter()
        .filter(|row| row.sign_flip || row.result.estimate * full.estimate < 0.0)
        .map(|row| row.omitted_study_id.clone())
        .collect();
    RobustnessVerdict { robust: flagged.is_empty(), flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effect_size::Measure;

    fn eff(values: &[(&str, f64, f64)]) -> Vec<EffectEstimate> {
        values.iter().map(|&(id, y, v)| EffectEstimate::new(id, Measure::LogOddsRatio, y, v).unwrap()).collect()
    }

    #[test]
    fn homogeneous_studies_are_robust() {
        let e = eff(&[("a", 0.4, 0.1), ("b", 0.4, 0.1), ("c", 0.4, 0.1), ("d", 0.4, 0.1)]);
        let rows = leave_one_out(&e, Model::Random, 0.95).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| (r.result.estimate - 0.4).abs() < 1e-15 && !r.sign_flip));
        assert!(rows.iter().all(|r| r.result.k == 3));
        let full = pool(&e, Model::Random, 0.95).unwrap();
        assert_eq!(robustness_verdict(&rows, &full), RobustnessVerdict { robust: true, flagged: vec![] });
    }

    #[test]
    fn outlier_omission() {
        let e = eff(&[("a", 0.0, 1.0), ("b", 0.0, 1.0), ("c", 10.0, 1.0)]);
        let rows = leave_one_out(&e, Model::Fixed, 0.95).unwrap();
        assert_eq!(rows[2].omitted_study_id, "c");
        assert_eq!(rows[2].result.estimate, 0.0);
        assert_eq!(rows[0].result.estimate, 5.0);
    }

    #[test]
    fn single_flip_is_flagged() {
        let e = eff(&[("a", 0.4, 0.1), ("b", 0.4, 0.1), ("c", 0.4, 0.1)]);
        let full = pool(&e, Model::Fixed, 0.95).unwrap();
        let mut rows = leave_one_out(&e, Model::Fixed, 0.95).unwrap();
        rows.truncate(1);
        rows[0].sign_flip = true;
        let v = robustness_verdict(&rows, &full);
        assert!(!v.robust);
        assert_eq!(v.flagged, vec!["a".to_string()]);
    }

    #[test]
    fn needs_three() {
        let e = eff(&[("a", 0.4, 0.1), ("b", 0.4, 0.1)]);
        assert!(leave_one_out(&e, Model::Fixed, 0.95).is_err());
    }
}
