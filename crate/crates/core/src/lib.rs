//! Relation extraction by contrastive ranking of relation hypotheses.
//!
//! Each example is expanded into one input per candidate relation (the marked
//! sentence followed by that relation's descriptive prompt), every input is
//! encoded to a single vector, and a shared linear head ranks the candidates
//! under a softmax restricted to the relations its entity-type pair licenses.

pub mod candidates;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod model;
pub mod ranker;
pub mod scalar;
pub mod templates;
pub mod trainer;

pub use candidates::{CandidateIndex, FallbackPolicy, TypePair};
pub use corpus::{Dataset, EntityType, Example, RelationLabel, Span};
pub use encoder::{Checkpoint, Embedding, EncoderConfig, EncoderParams, Vocab};
pub use eval::{BucketMode, BucketReport, EvaluationReport, ScoreReport};
pub use model::RelationModel;
pub use ranker::{CandidateScores, ScoringHead};
pub use scalar::Scalar;
pub use templates::{MarkerStyle, PromptStyle, RelationRegistry, TemplateConfig};
pub use trainer::{Experiment, MultiSeedReport, TrainConfig, TrainReport};

pub type EncoderParams64 = EncoderParams<f64>;
pub type EncoderParams32 = EncoderParams<f32>;
pub type ScoringHead64 = ScoringHead<f64>;
pub type ScoringHead32 = ScoringHead<f32>;
pub type RelationModel64 = RelationModel<f64>;
pub type RelationModel32 = RelationModel<f32>;
pub type Checkpoint64 = Checkpoint<f64>;
pub type Checkpoint32 = Checkpoint<f32>;
