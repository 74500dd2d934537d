use std::path::PathBuf;

use thiserror::Error;

use crate::effect_size::Measure;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("schema error: unexpected column `{column}`")]
    UnexpectedColumn { column: String },

    #[error("row {row} (study `{study_id}`): field `{field}`: {reason}")]
    InvalidRow { row: usize, study_id: String, field: String, reason: String },

    #[error("invalid study `{study_id}`: field `{field}`: {reason}")]
    InvalidStudy { study_id: String, field: String, reason: String },

    #[error("duplicate study_id `{0}`")]
    DuplicateStudy(String),

    #[error("degenerate study `{study_id}`: {reason}")]
    DegenerateStudy { study_id: String, reason: String },

    #[error("undefined {measure} for study `{study_id}`: {reason}")]
    UndefinedRatio { study_id: String, measure: Measure, reason: String },

    #[error("measure `{measure}` cannot be computed from a {kind} dataset")]
    IncompatibleMeasure { measure: Measure, kind: String },

    #[error("effects mix measures {first} and {other}")]
    MeasureMismatch { first: Measure, other: Measure },

    #[error("insufficient studies{}: need at least {needed}, found {found}", group.as_ref().map(|g| format!(" in group `{g}`")).unwrap_or_default())]
    InsufficientStudies { needed: usize, found: usize, group: Option<String> },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("study `{0}` has no subgroup label")]
    MissingSubgroup(String),

    #[error("trim-and-fill did not converge within {cap} iterations (last k0 = {last_k0})")]
    NonConvergence { cap: usize, last_k0: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("PRISMA counts inconsistent: {0}")]
    PrismaInconsistent(String),

    #[error("unknown rubric `{name}` (available: {available})")]
    UnknownRubric { name: String, available: String },

    #[error("item `{item_id}`: value {value} not allowed (allowed: {allowed}, cap {cap})")]
    ItemOutOfRange { item_id: String, value: u32, allowed: String, cap: u32 },

    #[error("invalid rubric: {0}")]
    InvalidRubric(String),

    #[error("scores come from different rubrics: `{expected}` and `{found}`")]
    MixedRubrics { expected: String, found: String },

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MetaError> = std::result::Result<T, E>;

impl MetaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MetaError::Io { path: path.into(), source }
    }

    pub(crate) fn insufficient(needed: usize, found: usize) -> Self {
        MetaError::InsufficientStudies { needed, found, group: None }
    }
}
