//! Linear scoring head, softmax over the restricted candidate set, argmax
//! prediction and the per-example contrastive loss with its gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RelationLabel;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("no candidates to score")]
    NoCandidates,
    #[error("embedding {index} has length {got}, head expects {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("{relations} relations but {embeddings} embeddings")]
    Misaligned { relations: usize, embeddings: usize },
    #[error("positive relation {0} is not among the candidates")]
    PositiveNotCandidate(String),
}

/// Shared affine scorer `w·h + b` used for every relation and for NA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringHead<T> {
    pub w: Vec<T>,
    pub b: T,
}

impl<T: Scalar> ScoringHead<T> {
    pub fn zeros(dim: usize) -> Self {
        ScoringHead {
            w: vec![T::zero(); dim],
            b: T::zero(),
        }
    }

    /// Weights drawn from `N(0, std)`, bias zero. Uses its own stream so it
    /// does not shift the encoder's draws for the same seed.
    pub fn init(dim: usize, std: f64, seed: u64) -> Self {
        if std == 0.0 {
            return Self::zeros(dim);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, std).expect("std is finite and positive");
        ScoringHead {
            w: (0..dim).map(|_| T::of(normal.sample(&mut rng))).collect(),
            b: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn logit(&self, h: &[T]) -> T {
        dot(&self.w, h) + self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores<T> {
    pub relations: Vec<RelationLabel>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn score_candidates<T: Scalar, E: AsRef<[T]>>(
    head: &ScoringHead<T>,
    relations: &[RelationLabel],
    embeddings: &[E],
) -> Result<CandidateScores<T>, RankError> {
    if embeddings.is_empty() {
        return Err(RankError::NoCandidates);
    }
    if relations.len() != embeddings.len() {
        return Err(RankError::Misaligned {
            relations: relations.len(),
            embeddings: embeddings.len(),
        });
    }
    let mut logits = Vec::with_capacity(embeddings.len());
    for (index, h) in embeddings.iter().enumerate() {
        let h = h.as_ref();
        if h.len() != head.dim() {
            return Err(RankError::DimensionMismatch {
                index,
                got: h.len(),
                expected: head.dim(),
            });
        }
        logits.push(head.logit(h));
    }
    Ok(scores_from_logits(relations.to_vec(), logits))
}

pub fn scores_from_logits<T: Scalar>(
    relations: Vec<RelationLabel>,
    logits: Vec<T>,
) -> CandidateScores<T> {
    let probs = softmax(&logits);
    CandidateScores {
        relations,
        logits,
        probs,
    }
}

/// Index of the highest-probability candidate; the earliest wins ties.
pub fn predict_index<T: Scalar>(scores: &CandidateScores<T>) -> usize {
    let mut best = 0;
    for (i, &p) in scores.probs.iter().enumerate().skip(1) {
        if p > scores.probs[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Scalar>(scores: &CandidateScores<T>) -> RelationLabel {
    scores.relations[predict_index(scores)].clone()
}

fn positive_index<T>(
    scores: &CandidateScores<T>,
    positive: &RelationLabel,
) -> Result<usize, RankError> {
    scores
        .relations
        .iter()
        .position(|r| r == positive)
        .ok_or_else(|| RankError::PositiveNotCandidate(positive.id().to_string()))
}

/// `-log P(positive)` over the example's own hypothesis set, computed as
/// `logsumexp(z) - z_pos` for stability.
pub fn contrastive_loss<T: Scalar>(
    scores: &CandidateScores<T>,
    positive: &RelationLabel,
) -> Result<T, RankError> {
    let pos = positive_index(scores, positive)?;
    Ok(nll_from_logits(&scores.logits, pos))
}

pub(crate) fn nll_from_logits<T: Scalar>(logits: &[T], pos: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    (lse - logits[pos]).max(T::zero())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads<T> {
    pub loss: T,
    /// `∂l/∂z_i = p_i - 1{i = positive}`; the positive entry is set to minus
    /// the sum of the others so the vector sums to zero.
    pub logits: Vec<T>,
    pub w: Vec<T>,
    pub b: T,
    /// `∂l/∂h_i = (∂l/∂z_i) · w`
    pub embeddings: Vec<Vec<T>>,
}

pub fn loss_grads<T: Scalar, E: AsRef<[T]>>(
    head: &ScoringHead<T>,
    relations: &[RelationLabel],
    embeddings: &[E],
    positive: &RelationLabel,
) -> Result<LossGrads<T>, RankError> {
    let scores = score_candidates(head, relations, embeddings)?;
    let pos = positive_index(&scores, positive)?;
    let mut dlogits: Vec<T> = scores.probs.clone();
    let others: T = dlogits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != pos)
        .map(|(_, &g)| g)
        .sum();
    dlogits[pos] = -others;
    let mut w = vec![T::zero(); head.dim()];
    let mut b = T::zero();
    let mut dembs = Vec::with_capacity(embeddings.len());
    for (g, h) in dlogits.iter().zip(embeddings) {
        for (wv, &hv) in w.iter_mut().zip(h.as_ref()) {
            *wv += *g * hv;
        }
        b += *g;
        dembs.push(head.w.iter().map(|&wv| *g * wv).collect());
    }
    Ok(LossGrads {
        loss: nll_from_logits(&scores.logits, pos),
        logits: dlogits,
        w,
        b,
        embeddings: dembs,
    })
}
