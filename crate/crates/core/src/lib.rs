//! Learning diversified rankings.
//!
//! A linear bi-criteria ranking model (per-document relevance plus per-pair
//! dissimilarity) is trained with cutting-plane structural max-margin
//! learning so that its greedy predictions score well under the cascade
//! diversity measures alpha-NDCG, ERR-IA and NRBP.

pub mod baselines;
pub mod error;
pub mod features;
pub mod greedy;
pub mod instance;
pub mod io;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use instance::{
    validate_instance, DocumentMeta, DocumentRecord, Measure, MeasureParams, PairwiseTensor,
    QueryInstance, Ranking, SubtopicJudgments, WeightVector,
};
