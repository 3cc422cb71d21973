//! Global-aware beam search: beam search whose joint score is calibrated at
//! every step by how well the attention paid so far matches a predicted
//! global attention distribution, together with baseline scorers, an
//! exhaustive-search reference, an attention predictor and evaluation tools.

pub mod attention;
pub mod config;
pub mod error;
pub mod eval;
pub mod hypothesis;
pub mod model;
pub mod predictor;
pub mod scoring;
pub mod search;
pub mod verify;

pub use attention::{AttentionLedger, GlobalAttention, SourceDocument, Token};
pub use config::{ScorerConfig, ScorerKind};
pub use error::{Error, Result};
pub use hypothesis::{Hypothesis, StepRecord};
pub use model::{
    AttentiveModel, Model, ModelFile, StepOutput, SyntheticModel, SyntheticSpec, TableModel,
};
pub use search::{
    beam_search, blocked_decode, exhaustive_oracle, BlockSchedule, DecodeResult, ScoredHypothesis,
};
