//! Scoring, frequency buckets, ablations and report rendering.

mod ablation;
mod metrics;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{ablation_matrix, default_cells, AblationCell, AblationMatrix};
pub use metrics::{
    bucket_macro_f1, bucket_size, f1, frequency_ranking, micro_prf, preset_buckets, BucketMode,
    BucketReport, ConfusionCounts, RelationScore, ScoreReport, Tally, TAIL_RATIOS, TOP_RATIOS,
};
pub use report::{ablation_csv, bucket_csv, bucket_svg, score_csv, BarSeries};

use crate::candidates::CandidateIndex;
use crate::corpus::{Dataset, RelationCounts, RelationLabel};
use crate::model::{ModelError, RelationModel};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} labels but pred has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("bucket ratio {0} outside (0, 1]")]
    Ratio(f64),
    #[error("{mode:?} bucket at ratio {ratio} has no relation with gold support")]
    EmptyBucket { mode: BucketMode, ratio: f64 },
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("no ablation cells")]
    NoCells,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training failed: {0}")]
    Train(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: String,
    pub examples: usize,
    pub score: ScoreReport,
    pub buckets: Vec<BucketReport>,
    /// Examples whose type pair was unseen in training.
    pub fallback_count: usize,
    pub truncated_inputs: usize,
    pub predictions: Vec<RelationLabel>,
}

pub fn evaluate<T: Scalar>(
    model: &RelationModel<T>,
    dataset: &Dataset,
    index: &CandidateIndex,
    split: &str,
    train_counts: &RelationCounts,
) -> Result<EvaluationReport, EvalError> {
    let examples = dataset
        .split(split)
        .ok_or_else(|| EvalError::UnknownSplit(split.to_string()))?;
    let preds = model.predict_split(&dataset.registry, index, examples)?;
    let gold: Vec<RelationLabel> = examples.iter().map(|e| e.gold.clone()).collect();
    let score = micro_prf(&gold, &preds.labels)?;
    let buckets = preset_buckets(train_counts, &gold, &preds.labels);
    Ok(EvaluationReport {
        split: split.to_string(),
        examples: examples.len(),
        score,
        buckets,
        fallback_count: preds.fallback_count,
        truncated_inputs: preds.truncated_inputs,
        predictions: preds.labels,
    })
}
