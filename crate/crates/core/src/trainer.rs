//! Training loop, seeded experiments and multi-seed aggregation.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{CandidateIndex, FallbackPolicy};
use crate::corpus::{relation_counts, Dataset, Example, RelationLabel};
use crate::encoder::{build_vocab, EncoderConfig, EncoderError, EncoderParams};
use crate::eval::{evaluate, micro_prf, EvalError, EvaluationReport};
use crate::model::{build_hypotheses, Hypotheses, ModelError, RelationModel};
use crate::ranker::{loss_grads, RankError, ScoringHead};
use crate::scalar::Scalar;
use crate::templates::{TemplateConfig, TemplateError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("train split is empty")]
    EmptyTrain,
    #[error("example {id}: gold relation {relation} is not among its candidates")]
    GoldNotInCandidates { id: String, relation: String },
    #[error("non-finite loss in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<RankError> for TrainError {
    fn from(e: RankError) -> Self {
        TrainError::Model(ModelError::Rank(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// What `examples_per_step` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepUnit {
    #[default]
    Examples,
    /// Hypothesis rows, i.e. example × candidate pairs. Examples are never split
    /// across steps, so a step holds at least this many rows.
    CandidateRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub examples_per_step: usize,
    pub step_unit: StepUnit,
    pub optimizer: OptimizerConfig,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Sum per-example gradients in example order.
    pub deterministic: bool,
    pub shuffle: bool,
    /// Fraction of NA-gold train examples drawn each epoch.
    pub na_keep_ratio: f64,
    /// Keep the weights of the epoch with the best dev micro-F1.
    pub select_best_epoch: bool,
    /// Std of the normal init of the head weights; `None` means `1/sqrt(dim)`.
    /// Zero gives a loss of exactly `ln k` on the first step but leaves the
    /// encoder without gradient until the head has moved.
    pub head_init_std: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 3e-4,
            examples_per_step: 16,
            step_unit: StepUnit::Examples,
            optimizer: OptimizerConfig::default(),
            clip_norm: None,
            seed: 0,
            deterministic: true,
            shuffle: true,
            na_keep_ratio: 1.0,
            select_best_epoch: false,
            head_init_std: None,
        }
    }
}

impl TrainConfig {
    /// Batch 512, learning rate 1e-5, 10 epochs: the setting used with
    /// pretrained encoders.
    pub fn large_batch_preset() -> Self {
        TrainConfig {
            examples_per_step: 512,
            learning_rate: 1e-5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs < 1 {
            return err("epochs must be at least 1");
        }
        // Zero is allowed as a no-op run.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning rate must be finite and non-negative");
        }
        if self.examples_per_step == 0 {
            return err("examples_per_step must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return err("clip_norm must be positive");
            }
        }
        if let Some(s) = self.head_init_std {
            if !(s >= 0.0 && s.is_finite()) {
                return err("head_init_std must be finite and non-negative");
            }
        }
        if !(self.na_keep_ratio > 0.0 && self.na_keep_ratio <= 1.0) {
            return err("na_keep_ratio must be in (0, 1]");
        }
        if let OptimizerConfig::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return err("adam needs betas in [0, 1) and eps > 0");
            }
        }
        Ok(())
    }
}

/// Kept apart so reports can be compared byte-for-byte with this field masked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Empty when there is no dev split.
    pub dev_micro_f1: Vec<f64>,
    /// 1-based; set only with `select_best_epoch`.
    pub best_epoch: Option<usize>,
    pub steps: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub encoder: EncoderConfig,
    pub templates: TemplateConfig,
    pub timing: Timing,
}

pub struct TrainOutcome<T> {
    pub model: RelationModel<T>,
    pub report: TrainReport,
}

struct ExampleGrads<T> {
    loss: T,
    encoder: EncoderParams<T>,
    head: ScoringHead<T>,
}

fn example_grads<T: Scalar>(
    model: &RelationModel<T>,
    hyps: &Hypotheses,
    gold_index: usize,
) -> Result<ExampleGrads<T>, TrainError> {
    let mut tapes = Vec::with_capacity(hyps.inputs.len());
    let mut embeddings = Vec::with_capacity(hyps.inputs.len());
    for ids in &hyps.inputs {
        let (e, tape) = model.params.forward(ids)?;
        embeddings.push(e.values);
        tapes.push(tape);
    }
    let g = loss_grads(
        &model.head,
        &hyps.relations,
        &embeddings,
        &hyps.relations[gold_index],
    )?;
    let mut encoder = model.params.zeros_like();
    for (tape, up) in tapes.iter().zip(&g.embeddings) {
        model.params.backward(tape, up, &mut encoder)?;
    }
    Ok(ExampleGrads {
        loss: g.loss,
        encoder,
        head: ScoringHead { w: g.w, b: g.b },
    })
}

fn add_head<T: Scalar>(acc: &mut ScoringHead<T>, other: &ScoringHead<T>) {
    acc.w.iter_mut().zip(&other.w).for_each(|(a, &b)| *a += b);
    acc.b += other.b;
}

fn sum_grads<T: Scalar>(mut parts: Vec<ExampleGrads<T>>) -> ExampleGrads<T> {
    let mut acc = parts.remove(0);
    for p in &parts {
        acc.loss += p.loss;
        acc.encoder.add_assign(&p.encoder);
        add_head(&mut acc.head, &p.head);
    }
    acc
}

type Moment<T> = (EncoderParams<T>, ScoringHead<T>);

struct AdamMoments<T> {
    m: Moment<T>,
    v: Moment<T>,
}

enum Optimizer<T> {
    Sgd,
    Adam {
        beta1: T,
        beta2: T,
        eps: T,
        t: i32,
        moments: Box<AdamMoments<T>>,
    },
}

impl<T: Scalar> Optimizer<T> {
    fn new(config: OptimizerConfig, model: &RelationModel<T>) -> Self {
        match config {
            OptimizerConfig::Sgd => Optimizer::Sgd,
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let zeros = || {
                    (
                        model.params.zeros_like(),
                        ScoringHead::zeros(model.head.dim()),
                    )
                };
                Optimizer::Adam {
                    beta1: T::of(beta1),
                    beta2: T::of(beta2),
                    eps: T::of(eps),
                    t: 0,
                    moments: Box::new(AdamMoments {
                        m: zeros(),
                        v: zeros(),
                    }),
                }
            }
        }
    }

    fn step(&mut self, model: &mut RelationModel<T>, grads: &ExampleGrads<T>, lr: T) {
        let grad_slices: Vec<&[T]> = grads
            .encoder
            .tensors()
            .into_iter()
            .map(|(_, _, s)| s)
            .chain([grads.head.w.as_slice(), std::slice::from_ref(&grads.head.b)])
            .collect();
        let mut params = slices_mut(&mut model.params, &mut model.head);
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad_slices) {
                    p.iter_mut().zip(g.iter()).for_each(|(p, &g)| *p -= lr * g);
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                eps,
                t,
                moments,
            } => {
                let AdamMoments { m, v } = &mut **moments;
                *t += 1;
                let (b1, b2, eps) = (*beta1, *beta2, *eps);
                let c1 = T::one() - b1.powi(*t);
                let c2 = T::one() - b2.powi(*t);
                let ms = slices_mut(&mut m.0, &mut m.1);
                let vs = slices_mut(&mut v.0, &mut v.1);
                for (((p, g), m), v) in params.iter_mut().zip(&grad_slices).zip(ms).zip(vs) {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                        let mhat = m[i] / c1;
                        let vhat = v[i] / c2;
                        p[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

fn slices_mut<'a, T: Scalar>(
    params: &'a mut EncoderParams<T>,
    head: &'a mut ScoringHead<T>,
) -> Vec<&'a mut [T]> {
    let mut out: Vec<&mut [T]> = params
        .tensors_mut()
        .into_iter()
        .map(|v| v.as_mut_slice())
        .collect();
    out.push(head.w.as_mut_slice());
    out.push(std::slice::from_mut(&mut head.b));
    out
}

/// Splits the epoch order into optimizer steps.
fn steps(order: &[usize], rows: &[usize], config: &TrainConfig) -> Vec<Vec<usize>> {
    match config.step_unit {
        StepUnit::Examples => order
            .chunks(config.examples_per_step)
            .map(<[usize]>::to_vec)
            .collect(),
        StepUnit::CandidateRows => {
            let mut out = Vec::new();
            let mut cur = Vec::new();
            let mut filled = 0;
            for &i in order {
                cur.push(i);
                filled += rows[i];
                if filled >= config.examples_per_step {
                    out.push(std::mem::take(&mut cur));
                    filled = 0;
                }
            }
            if !cur.is_empty() {
                out.push(cur);
            }
            out
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Trains encoder and head on `dataset.train`, ranking each example's gold
/// relation against the other members of its candidate set.
pub fn train<T: Scalar>(
    dataset: &Dataset,
    index: &CandidateIndex,
    templates: TemplateConfig,
    encoder: EncoderConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    encoder.validate()?;
    if dataset.train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let started = Instant::now();
    let started_unix_secs = unix_now();
    let registry = &dataset.registry;
    let vocab = build_vocab(dataset, registry);

    let mut prepared = Vec::with_capacity(dataset.train.len());
    for ex in &dataset.train {
        let hyps = build_hypotheses(&vocab, templates, registry, index, ex)?;
        let gold = hyps
            .relations
            .iter()
            .position(|r| r == &ex.gold)
            .ok_or_else(|| TrainError::GoldNotInCandidates {
                id: ex.id.clone(),
                relation: ex.gold.to_string(),
            })?;
        prepared.push((hyps, gold));
    }
    let rows: Vec<usize> = prepared.iter().map(|(h, _)| h.inputs.len()).collect();

    let params = EncoderParams::init(encoder, vocab.len())?;
    let head_std = config
        .head_init_std
        .unwrap_or(1.0 / (encoder.dim as f64).sqrt());
    let head = ScoringHead::init(encoder.dim, head_std, encoder.seed);
    let mut model = RelationModel {
        vocab,
        params,
        head,
        templates,
    };

    let mut optimizer = Optimizer::new(config.optimizer, &model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lr = T::of(config.learning_rate);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut dev_micro_f1 = Vec::new();
    let mut best: Option<(f64, usize, EncoderParams<T>, ScoringHead<T>)> = None;
    let mut step_count = 0;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..prepared.len())
            .filter(|&i| {
                config.na_keep_ratio >= 1.0
                    || !dataset.train[i].gold.is_na()
                    || rng.random::<f64>() < config.na_keep_ratio
            })
            .collect();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for step in steps(&order, &rows, config) {
            let parts: Vec<ExampleGrads<T>> = step
                .par_iter()
                .map(|&i| example_grads(&model, &prepared[i].0, prepared[i].1))
                .collect::<Result<_, _>>()?;
            let mut total = if config.deterministic {
                sum_grads(parts)
            } else {
                parts
                    .into_par_iter()
                    .reduce_with(|mut a, b| {
                        a.loss += b.loss;
                        a.encoder.add_assign(&b.encoder);
                        add_head(&mut a.head, &b.head);
                        a
                    })
                    .expect("steps are non-empty")
            };
            loss_sum += total.loss.as_f64();
            let inv = T::one() / T::of(step.len() as f64);
            total.encoder.scale(inv);
            total.head.w.iter_mut().for_each(|g| *g *= inv);
            total.head.b *= inv;
            if let Some(clip) = config.clip_norm {
                let norm = (total.encoder.sum_squares()
                    + total.head.w.iter().map(|&g| g * g).sum::<T>()
                    + total.head.b * total.head.b)
                    .sqrt();
                let clip = T::of(clip);
                if norm > clip {
                    let f = clip / norm;
                    total.encoder.scale(f);
                    total.head.w.iter_mut().for_each(|g| *g *= f);
                    total.head.b *= f;
                }
            }
            optimizer.step(&mut model, &total, lr);
            step_count += 1;
        }
        let mean = loss_sum / order.len().max(1) as f64;
        if !mean.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }
        epoch_losses.push(mean);
        if !dataset.dev.is_empty() {
            let preds = model.predict_split(registry, index, &dataset.dev)?;
            let f1 = micro_prf(&gold_of(&dataset.dev), &preds.labels)?.micro_f1;
            dev_micro_f1.push(f1);
            if config.select_best_epoch && best.as_ref().is_none_or(|b| f1 > b.0) {
                best = Some((f1, epoch, model.params.clone(), model.head.clone()));
            }
        }
    }
    let mut best_epoch = None;
    if let Some((_, epoch, params, head)) = best {
        model.params = params;
        model.head = head;
        best_epoch = Some(epoch);
    }
    let report = TrainReport {
        epoch_losses,
        dev_micro_f1,
        best_epoch,
        steps: step_count,
        seed: config.seed,
        config: config.clone(),
        encoder,
        templates,
        timing: Timing {
            started_unix_secs,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    };
    Ok(TrainOutcome { model, report })
}

/// Everything that defines one train + evaluate run apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiment {
    pub templates: TemplateConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub fallback: FallbackPolicy,
    /// Minimum train co-occurrences for a relation to enter a pair's set.
    pub min_support: usize,
    pub eval_split: String,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            templates: TemplateConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            fallback: FallbackPolicy::default(),
            min_support: 1,
            eval_split: "test".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub train: TrainReport,
    pub eval: EvaluationReport,
}

pub struct RunOutcome<T> {
    pub model: RelationModel<T>,
    pub index: CandidateIndex,
    pub summary: RunSummary,
}

impl Experiment {
    /// Same experiment with both the weight-init and the data-order seed set.
    pub fn with_seed(&self, seed: u64) -> Experiment {
        let mut e = self.clone();
        e.encoder.seed = seed;
        e.train.seed = seed;
        e
    }

    pub fn build_index(&self, dataset: &Dataset) -> CandidateIndex {
        CandidateIndex::build_with_support(
            &dataset.train,
            &dataset.registry,
            self.fallback,
            self.min_support.max(1),
        )
    }

    pub fn run<T: Scalar>(&self, dataset: &Dataset) -> Result<RunOutcome<T>, TrainError> {
        let index = self.build_index(dataset);
        let outcome = train::<T>(dataset, &index, self.templates, self.encoder, &self.train)?;
        let counts = relation_counts(&dataset.train);
        let eval = evaluate(&outcome.model, dataset, &index, &self.eval_split, &counts)?;
        Ok(RunOutcome {
            model: outcome.model,
            index,
            summary: RunSummary {
                seed: self.train.seed,
                train: outcome.report,
                eval,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub aggregate: BTreeMap<String, MeanStd>,
}

pub fn summary_metrics(run: &RunSummary) -> BTreeMap<String, f64> {
    let s = &run.eval.score;
    let mut m = BTreeMap::new();
    m.insert("precision".to_string(), s.precision);
    m.insert("recall".to_string(), s.recall);
    m.insert("micro_f1".to_string(), s.micro_f1);
    m.insert("macro_f1".to_string(), s.macro_f1);
    if let Some(&l) = run.train.epoch_losses.last() {
        m.insert("final_loss".to_string(), l);
    }
    m
}

pub fn aggregate(runs: &[RunSummary]) -> BTreeMap<String, MeanStd> {
    let per_run: Vec<_> = runs.iter().map(summary_metrics).collect();
    let mut out = BTreeMap::new();
    if let Some(first) = per_run.first() {
        for key in first.keys() {
            let values: Vec<f64> = per_run.iter().filter_map(|m| m.get(key).copied()).collect();
            out.insert(key.clone(), MeanStd::of(&values));
        }
    }
    out
}

/// Runs `experiment` once per seed and reports mean and spread of the metrics.
pub fn multi_seed<T: Scalar>(
    experiment: &Experiment,
    dataset: &Dataset,
    seeds: &[u64],
) -> Result<MultiSeedReport, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("at least one seed is required".into()));
    }
    let runs = seeds
        .iter()
        .map(|&s| experiment.with_seed(s).run::<T>(dataset).map(|o| o.summary))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MultiSeedReport {
        experiment: experiment.clone(),
        seeds: seeds.to_vec(),
        aggregate: aggregate(&runs),
        runs,
    })
}

pub fn gold_of(examples: &[Example]) -> Vec<RelationLabel> {
    examples.iter().map(|e| e.gold.clone()).collect()
}
