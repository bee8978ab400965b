use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{RelationCounts, RelationLabel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Tally {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn prf(&self) -> (f64, f64, f64) {
        prf(self.tp, self.fp, self.fn_)
    }
}

/// Per-relation tallies with NA as the null class: an NA prediction is never a
/// false positive and an NA gold label is never a false negative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_relation: BTreeMap<RelationLabel, Tally>,
    pub examples: usize,
}

impl ConfusionCounts {
    pub fn tally(gold: &[RelationLabel], pred: &[RelationLabel]) -> Result<Self, EvalError> {
        if gold.len() != pred.len() {
            return Err(EvalError::LengthMismatch {
                gold: gold.len(),
                pred: pred.len(),
            });
        }
        let mut per_relation: BTreeMap<RelationLabel, Tally> = BTreeMap::new();
        for (g, p) in gold.iter().zip(pred) {
            if g == p {
                if !g.is_na() {
                    per_relation.entry(g.clone()).or_default().tp += 1;
                }
                continue;
            }
            if !p.is_na() {
                per_relation.entry(p.clone()).or_default().fp += 1;
            }
            if !g.is_na() {
                per_relation.entry(g.clone()).or_default().fn_ += 1;
            }
        }
        Ok(ConfusionCounts {
            per_relation,
            examples: gold.len(),
        })
    }

    pub fn totals(&self) -> Tally {
        self.per_relation
            .values()
            .fold(Tally::default(), |acc, t| Tally {
                tp: acc.tp + t.tp,
                fp: acc.fp + t.fp,
                fn_: acc.fn_ + t.fn_,
            })
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1(p, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub relation: RelationLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    /// Unweighted mean of `per_relation[..].f1`.
    pub macro_f1: f64,
    /// Relations with at least one gold example.
    pub per_relation: Vec<RelationScore>,
    /// Relations that were predicted but never occur in gold; their F1 is
    /// undefined and they are left out of `macro_f1`.
    pub excluded: Vec<RelationLabel>,
    pub counts: ConfusionCounts,
}

impl ScoreReport {
    pub fn relation_f1(&self, relation: &RelationLabel) -> Option<f64> {
        self.per_relation
            .iter()
            .find(|s| &s.relation == relation)
            .map(|s| s.f1)
    }
}

/// Micro P/R/F1 with NA excluded from both the predicted and gold positives.
pub fn micro_prf(gold: &[RelationLabel], pred: &[RelationLabel]) -> Result<ScoreReport, EvalError> {
    let counts = ConfusionCounts::tally(gold, pred)?;
    let total = counts.totals();
    let (precision, recall, micro_f1) = total.prf();
    let mut per_relation = Vec::new();
    let mut excluded = Vec::new();
    for (relation, t) in &counts.per_relation {
        if t.support() == 0 {
            excluded.push(relation.clone());
            continue;
        }
        let (p, r, f) = t.prf();
        per_relation.push(RelationScore {
            relation: relation.clone(),
            precision: p,
            recall: r,
            f1: f,
            support: t.support(),
        });
    }
    let macro_f1 = if per_relation.is_empty() {
        0.0
    } else {
        per_relation.iter().map(|s| s.f1).sum::<f64>() / per_relation.len() as f64
    };
    Ok(ScoreReport {
        precision,
        recall,
        micro_f1,
        macro_f1,
        per_relation,
        excluded,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketMode {
    Top,
    Tail,
}

/// Ratios plotted for the head and the tail of the train-frequency ranking.
pub const TOP_RATIOS: [f64; 3] = [0.2, 0.3, 0.4];
pub const TAIL_RATIOS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub mode: BucketMode,
    pub ratio: f64,
    /// Bucket relations in train-frequency order.
    pub members: Vec<RelationLabel>,
    /// Members without gold test examples, left out of the mean.
    pub excluded: Vec<RelationLabel>,
    pub macro_f1: f64,
}

/// Relations (NA excluded) in descending train frequency, ties by id.
pub fn frequency_ranking(train_counts: &RelationCounts) -> Vec<RelationLabel> {
    train_counts
        .iter()
        .filter(|(l, _)| !l.is_na())
        .map(|(l, _)| l.clone())
        .collect()
}

pub fn bucket_size(ratio: f64, relations: usize) -> usize {
    // Guard against 0.2 * 40 = 8.000000000000002 rounding up.
    ((ratio * relations as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn bucket_macro_f1(
    train_counts: &RelationCounts,
    gold: &[RelationLabel],
    pred: &[RelationLabel],
    mode: BucketMode,
    ratio: f64,
) -> Result<BucketReport, EvalError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(EvalError::Ratio(ratio));
    }
    let ranking = frequency_ranking(train_counts);
    let n = bucket_size(ratio, ranking.len()).min(ranking.len());
    let members: Vec<RelationLabel> = match mode {
        BucketMode::Top => ranking[..n].to_vec(),
        BucketMode::Tail => ranking[ranking.len() - n..].to_vec(),
    };
    let report = micro_prf(gold, pred)?;
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    for r in &members {
        match report.relation_f1(r) {
            Some(f) => scores.push(f),
            None => excluded.push(r.clone()),
        }
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyBucket { mode, ratio });
    }
    let macro_f1 = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(BucketReport {
        mode,
        ratio,
        members,
        excluded,
        macro_f1,
    })
}

/// Every preset bucket that is non-empty for this data.
pub fn preset_buckets(
    train_counts: &RelationCounts,
    gold: &[RelationLabel],
    pred: &[RelationLabel],
) -> Vec<BucketReport> {
    let presets = TOP_RATIOS
        .iter()
        .map(|&r| (BucketMode::Top, r))
        .chain(TAIL_RATIOS.iter().map(|&r| (BucketMode::Tail, r)));
    presets
        .filter_map(|(mode, ratio)| bucket_macro_f1(train_counts, gold, pred, mode, ratio).ok())
        .collect()
}
