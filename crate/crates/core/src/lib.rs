//! Meta-analysis of study summary data: effect sizes, fixed- and
//! random-effects pooling, heterogeneity, trim-and-fill, leave-one-out
//! sensitivity, quality rubrics and forest/funnel plots.

pub mod cli;
pub mod distributions;
pub mod effect_size;
pub mod error;
pub mod heterogeneity;
pub mod pooling;
pub mod publication_bias;
pub mod quality;
pub mod report;
pub mod sensitivity;
pub mod study_data;

pub use effect_size::{ContinuityPolicy, EffectEstimate, EffectOptions, Measure};
pub use error::{MetaError, Result};
pub use heterogeneity::{HeterogeneityBand, HeterogeneityReport, SubgroupReport};
pub use pooling::{Model, PooledResult};
pub use publication_bias::{FunnelPoint, TrimFillResult};
pub use quality::{QualityScore, Rubric};
pub use sensitivity::LeaveOneOutRow;
pub use study_data::{Arm, BinaryStudy, ContinuousStudy, CorrelationStudy, Dataset, DatasetKind, PrismaCounts};
