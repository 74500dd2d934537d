//! Per-study effect sizes and their sampling variances.
//!
//! Ratio measures (odds ratio, risk ratio) live on the natural-log scale
//! for the whole analysis; only reporting exponentiates them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};
use crate::study_data::{BinaryStudy, ContinuousStudy, CorrelationStudy, Dataset, DatasetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "MD")]
    MeanDifference,
    #[serde(rename = "SMD")]
    StandardizedMeanDifference,
    #[serde(rename = "logOR")]
    LogOddsRatio,
    #[serde(rename = "logRR")]
    LogRiskRatio,
    #[serde(rename = "FisherZ")]
    FisherZ,
}

impl Measure {
    pub fn is_ratio(self) -> bool {
        matches!(self, Measure::LogOddsRatio | Measure::LogRiskRatio)
    }

    pub fn dataset_kind(self) -> DatasetKind {
        match self {
            Measure::MeanDifference | Measure::StandardizedMeanDifference => DatasetKind::Continuous,
            Measure::LogOddsRatio | Measure::LogRiskRatio => DatasetKind::Binary,
            Measure::FisherZ => DatasetKind::Correlation,
        }
    }

    pub fn default_for(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Continuous => Measure::StandardizedMeanDifference,
            DatasetKind::Binary => Measure::LogOddsRatio,
            DatasetKind::Correlation => Measure::FisherZ,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Measure::MeanDifference => "MD",
            Measure::StandardizedMeanDifference => "SMD",
            Measure::LogOddsRatio => "logOR",
            Measure::LogRiskRatio => "logRR",
            Measure::FisherZ => "FisherZ",
        }
    }

    /// Name of the measure on its display scale (`OR` rather than `logOR`).
    pub fn display_label(self) -> &'static str {
        match self {
            Measure::LogOddsRatio => "OR",
            Measure::LogRiskRatio => "RR",
            other => other.label(),
        }
    }

    /// Maps a value on the analysis scale onto the display scale.
    pub fn to_display(self, value: f64) -> f64 {
        if self.is_ratio() {
            value.exp()
        } else {
            value
        }
    }

    /// The no-effect reference on the display scale.
    pub fn null_value(self) -> f64 {
        if self.is_ratio() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Measure {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "md" => Measure::MeanDifference,
            "smd" => Measure::StandardizedMeanDifference,
            "or" | "logor" => Measure::LogOddsRatio,
            "rr" | "logrr" => Measure::LogRiskRatio,
            "z" | "fisherz" => Measure::FisherZ,
            _ => {
                return Err(MetaError::InvalidParameter {
                    name: "measure".into(),
                    reason: format!("unknown measure `{s}` (expected md, smd, or, rr, z)"),
                })
            }
        })
    }
}

/// One study's effect on its analysis scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    study_id: String,
    measure: Measure,
    value: f64,
    variance: f64,
    n_total: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    subgroup: Option<String>,
}

impl EffectEstimate {
    pub fn new(study_id: impl Into<String>, measure: Measure, value: f64, variance: f64) -> Result<Self> {
        let study_id = study_id.into();
        if !value.is_finite() {
            return Err(MetaError::DegenerateStudy { study_id, reason: format!("effect value {value} is not finite") });
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(MetaError::DegenerateStudy {
                study_id,
                reason: format!("variance must be positive and finite, got {variance}"),
            });
        }
        Ok(EffectEstimate { study_id, measure, value, variance, n_total: 0, subgroup: None })
    }

    pub fn with_n_total(mut self, n_total: u64) -> Self {
        self.n_total = n_total;
        self
    }

    pub fn with_subgroup(mut self, subgroup: Option<impl Into<String>>) -> Self {
        self.subgroup = subgroup.map(Into::into).filter(|s: &String| !s.is_empty());
        self
    }

    /// A copy with a new id and value; variance and everything else retained.
    pub(crate) fn reflected(&self, study_id: String, value: f64) -> Self {
        EffectEstimate { study_id, value, ..self.clone() }
    }

    pub fn study_id(&self) -> &str {
        &self.study_id
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn subgroup(&self) -> Option<&str> {
        self.subgroup.as_deref()
    }
}

/// Zero-cell handling for 2x2 tables. When any cell of a study is zero,
/// `correction` is added to all four cells of that study only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityPolicy {
    correction: f64,
}

impl Default for ContinuityPolicy {
    fn default() -> Self {
        ContinuityPolicy { correction: 0.5 }
    }
}

impl ContinuityPolicy {
    pub fn new(correction: f64) -> Result<Self> {
        if !(correction.is_finite() && correction >= 0.0) {
            return Err(MetaError::InvalidParameter {
                name: "continuity".into(),
                reason: format!("correction must be a non-negative finite number, got {correction}"),
            });
        }
        Ok(ContinuityPolicy { correction })
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }

    pub fn apply(&self, cells: [u64; 4]) -> [f64; 4] {
        let add = if cells.contains(&0) { self.correction } else { 0.0 };
        cells.map(|x| x as f64 + add)
    }
}

/// Small-sample bias factor `J = 1 - 3 / (4 (n_e + n_c - 2) - 1)`.
pub fn hedges_j(n_total: u64) -> f64 {
    1.0 - 3.0 / (4.0 * (n_total as f64 - 2.0) - 1.0)
}

pub fn pooled_sd(study: &ContinuousStudy) -> f64 {
    let (e, c) = (study.experimental(), study.control());
    let (n1, n2) = (e.n as f64, c.n as f64);
    (((n1 - 1.0) * e.sd * e.sd + (n2 - 1.0) * c.sd * c.sd) / (n1 + n2 - 2.0)).sqrt()
}

pub fn smd(study: &ContinuousStudy, hedges_correction: bool) -> Result<EffectEstimate> {
    let (e, c) = (study.experimental(), study.control());
    let s_pooled = pooled_sd(study);
    if s_pooled.is_nan() || s_pooled <= 0.0 {
        return Err(MetaError::DegenerateStudy {
            study_id: study.study_id().to_string(),
            reason: "pooled standard deviation is zero".into(),
        });
    }
    let n_total = e.n + c.n;
    let mut d = (e.mean - c.mean) / s_pooled;
    if hedges_correction {
        d *= hedges_j(n_total);
    }
    let (n1, n2) = (e.n as f64, c.n as f64);
    let variance = (n1 + n2) / (n1 * n2) + d * d / (2.0 * (n1 + n2));
    Ok(EffectEstimate::new(study.study_id(), Measure::StandardizedMeanDifference, d, variance)?
        .with_n_total(n_total)
        .with_subgroup(study.subgroup()))
}

pub fn mean_diff(study: &ContinuousStudy) -> Result<EffectEstimate> {
    let (e, c) = (study.experimental(), study.control());
    let variance = e.sd * e.sd / e.n as f64 + c.sd * c.sd / c.n as f64;
    Ok(EffectEstimate::new(study.study_id(), Measure::MeanDifference, e.mean - c.mean, variance)?
        .with_n_total(e.n + c.n)
        .with_subgroup(study.subgroup()))
}

fn undefined(study: &BinaryStudy, measure: Measure, reason: &str) -> MetaError {
    MetaError::UndefinedRatio { study_id: study.study_id().to_string(), measure, reason: reason.to_string() }
}

fn check_double_zero(study: &BinaryStudy, measure: Measure) -> Result<()> {
    let [a, b, c, d] = study.cells();
    if a + c == 0 {
        return Err(undefined(study, measure, "no events in either arm"));
    }
    if b + d == 0 {
        return Err(undefined(study, measure, "all participants had events in both arms"));
    }
    Ok(())
}

pub fn log_odds_ratio(study: &BinaryStudy, policy: ContinuityPolicy) -> Result<EffectEstimate> {
    let measure = Measure::LogOddsRatio;
    check_double_zero(study, measure)?;
    let [a, b, c, d] = policy.apply(study.cells());
    if [a, b, c, d].iter().any(|&x| x <= 0.0) {
        return Err(undefined(study, measure, "zero cell with no continuity correction"));
    }
    // ln(ad) - ln(bc) negates exactly under an arm swap
    let value = (a * d).ln() - (b * c).ln();
    let variance = (1.0 / a + 1.0 / d) + (1.0 / b + 1.0 / c);
    Ok(EffectEstimate::new(study.study_id(), measure, value, variance)?
        .with_n_total(study.total_e() + study.total_c())
        .with_subgroup(study.subgroup()))
}

pub fn log_risk_ratio(study: &BinaryStudy, policy: ContinuityPolicy) -> Result<EffectEstimate> {
    let measure = Measure::LogRiskRatio;
    check_double_zero(study, measure)?;
    let [a, b, c, d] = policy.apply(study.cells());
    if a <= 0.0 || c <= 0.0 {
        return Err(undefined(study, measure, "zero event risk in an arm with no continuity correction"));
    }
    let (n1, n2) = (a + b, c + d);
    let value = (a / n1).ln() - (c / n2).ln();
    let variance = (1.0 / a - 1.0 / n1) + (1.0 / c - 1.0 / n2);
    Ok(EffectEstimate::new(study.study_id(), measure, value, variance)?
        .with_n_total(study.total_e() + study.total_c())
        .with_subgroup(study.subgroup()))
}

pub fn fisher_z(study: &CorrelationStudy) -> Result<EffectEstimate> {
    let r = study.r();
    let value = r.signum() * r.abs().atanh();
    let variance = 1.0 / (study.n() as f64 - 3.0);
    Ok(EffectEstimate::new(study.study_id(), Measure::FisherZ, value, variance)?
        .with_n_total(study.n())
        .with_subgroup(study.subgroup()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EffectOptions {
    pub hedges: bool,
    pub continuity: ContinuityPolicy,
}

/// Computes `measure` for every study in `dataset`, in dataset order.
pub fn compute_effects(dataset: &Dataset, measure: Measure, options: EffectOptions) -> Result<Vec<EffectEstimate>> {
    let mismatch = || MetaError::IncompatibleMeasure { measure, kind: dataset.kind().to_string() };
    match (dataset, measure) {
        (Dataset::Continuous(studies), Measure::MeanDifference) => studies.iter().map(mean_diff).collect(),
        (Dataset::Continuous(studies), Measure::StandardizedMeanDifference) => {
            studies.iter().map(|s| smd(s, options.hedges)).collect()
        }
        (Dataset::Binary(studies), Measure::LogOddsRatio) => {
            studies.iter().map(|s| log_odds_ratio(s, options.continuity)).collect()
        }
        (Dataset::Binary(studies), Measure::LogRiskRatio) => {
            studies.iter().map(|s| log_risk_ratio(s, options.continuity)).collect()
        }
        (Dataset::Correlation(studies), Measure::FisherZ) => studies.iter().map(fisher_z).collect(),
        _ => Err(mismatch()),
    }
}
