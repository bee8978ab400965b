//! A trained scorer: encoder, shared head, vocabulary and the template
//! settings used to build its hypotheses.

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::candidates::CandidateIndex;
use crate::corpus::{Example, RelationLabel};
use crate::encoder::{Checkpoint, EncoderError, EncoderParams, Vocab};
use crate::ranker::{self, CandidateScores, RankError, ScoringHead};
use crate::scalar::Scalar;
use crate::templates::{
    assemble_input, drp_for, render_markers, RelationRegistry, TemplateConfig, TemplateError,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
}

/// The candidate set of one example and the token ids of each hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses {
    pub relations: Vec<RelationLabel>,
    pub inputs: Vec<Vec<usize>>,
    pub fallback_used: bool,
}

pub fn build_hypotheses(
    vocab: &Vocab,
    templates: TemplateConfig,
    registry: &RelationRegistry,
    index: &CandidateIndex,
    example: &Example,
) -> Result<Hypotheses, TemplateError> {
    let cands = index.for_example(example);
    let marked = render_markers(example, templates.marker)?;
    let inputs = cands
        .relations
        .iter()
        .map(|r| {
            let text = drp_for(registry, r, templates.prompt)?;
            Ok(vocab.encode(&assemble_input(&marked, &text).tokens))
        })
        .collect::<Result<Vec<_>, TemplateError>>()?;
    Ok(Hypotheses {
        relations: cands.relations,
        inputs,
        fallback_used: cands.fallback_used,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<RelationLabel>,
    /// Examples whose type pair was unseen in training.
    pub fallback_count: usize,
    /// Hypotheses that had sentence tokens dropped to fit `max_len`.
    pub truncated_inputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel<T> {
    pub vocab: Vocab,
    pub params: EncoderParams<T>,
    pub head: ScoringHead<T>,
    pub templates: TemplateConfig,
}

impl<T: Scalar> RelationModel<T> {
    pub fn hypotheses(
        &self,
        registry: &RelationRegistry,
        index: &CandidateIndex,
        example: &Example,
    ) -> Result<Hypotheses, ModelError> {
        Ok(build_hypotheses(
            &self.vocab,
            self.templates,
            registry,
            index,
            example,
        )?)
    }

    /// Scores every hypothesis; also returns how many inputs were truncated.
    pub fn score(&self, hyps: &Hypotheses) -> Result<(CandidateScores<T>, usize), ModelError> {
        let mut truncated = 0;
        let mut embeddings = Vec::with_capacity(hyps.inputs.len());
        for ids in &hyps.inputs {
            let e = self.params.encode(ids)?;
            truncated += usize::from(e.truncated > 0);
            embeddings.push(e.values);
        }
        Ok((
            ranker::score_candidates(&self.head, &hyps.relations, &embeddings)?,
            truncated,
        ))
    }

    pub fn predict(
        &self,
        registry: &RelationRegistry,
        index: &CandidateIndex,
        example: &Example,
    ) -> Result<RelationLabel, ModelError> {
        let (scores, _) = self.score(&self.hypotheses(registry, index, example)?)?;
        Ok(ranker::predict(&scores))
    }

    pub fn predict_split(
        &self,
        registry: &RelationRegistry,
        index: &CandidateIndex,
        examples: &[Example],
    ) -> Result<Predictions, ModelError> {
        let per_example: Vec<(RelationLabel, bool, usize)> = examples
            .par_iter()
            .map(|ex| {
                let hyps = self.hypotheses(registry, index, ex)?;
                let (scores, truncated) = self.score(&hyps)?;
                Ok((ranker::predict(&scores), hyps.fallback_used, truncated))
            })
            .collect::<Result<_, ModelError>>()?;
        let mut out = Predictions {
            labels: Vec::with_capacity(examples.len()),
            fallback_count: 0,
            truncated_inputs: 0,
        };
        for (label, fallback, truncated) in per_example {
            out.labels.push(label);
            out.fallback_count += usize::from(fallback);
            out.truncated_inputs += truncated;
        }
        Ok(out)
    }

    /// `extra` is merged into the checkpoint metadata next to the template settings.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint<T> {
        let mut meta = json!({ "templates": self.templates });
        if let (Some(m), serde_json::Value::Object(extra)) = (meta.as_object_mut(), extra) {
            m.extend(extra);
        }
        Checkpoint {
            params: self.params.clone(),
            head: self.head.clone(),
            vocab: self.vocab.clone(),
            meta,
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<T>) -> Result<Self, ModelError> {
        let templates = match ckpt.meta.get("templates") {
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| ModelError::Meta(e.to_string()))?
            }
            None => TemplateConfig::default(),
        };
        Ok(RelationModel {
            vocab: ckpt.vocab,
            params: ckpt.params,
            head: ckpt.head,
            templates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::FallbackPolicy;
    use crate::corpus::{EntityType, Span};
    use crate::encoder::EncoderConfig;
    use crate::templates::{MarkerStyle, PromptStyle};

    fn example(tokens: &str, subj_type: &str, obj_type: &str, gold: RelationLabel) -> Example {
        let tokens: Vec<String> = tokens.split(' ').map(String::from).collect();
        let n = tokens.len();
        Example::new(
            "x",
            tokens,
            Span::new(0, 0),
            EntityType::new(subj_type),
            Span::new(n - 1, n - 1),
            EntityType::new(obj_type),
            gold,
        )
        .unwrap()
    }

    fn fixture() -> (RelationRegistry, CandidateIndex, Vec<Example>) {
        let registry = RelationRegistry::shipped()
            .subset(["per:employee_of", "org:founded_by"])
            .unwrap();
        let train = vec![
            example(
                "Ann works at Acme",
                "PERSON",
                "ORGANIZATION",
                RelationLabel::relation("per:employee_of"),
            ),
            example(
                "Acme founded by Ann",
                "ORGANIZATION",
                "PERSON",
                RelationLabel::relation("org:founded_by"),
            ),
        ];
        let index = CandidateIndex::build(&train, &registry, FallbackPolicy::FullSet);
        (registry, index, train)
    }

    #[test]
    fn hypotheses_follow_candidates() {
        let (registry, index, train) = fixture();
        let vocab = Vocab::from_tokens(["Ann", "works", "at", "Acme"]);
        let templates = TemplateConfig {
            marker: MarkerStyle::Iem,
            prompt: PromptStyle::Drp,
        };
        let h = build_hypotheses(&vocab, templates, &registry, &index, &train[0]).unwrap();
        assert_eq!(
            h.relations,
            vec![
                RelationLabel::relation("per:employee_of"),
                RelationLabel::Na
            ]
        );
        assert_eq!(h.inputs.len(), 2);
        assert!(!h.fallback_used);
        assert_ne!(h.inputs[0], h.inputs[1]);
        assert_eq!(h.inputs[0][0], crate::encoder::BOS_ID);
    }

    #[test]
    fn zero_head_predicts_first_candidate() {
        let (registry, index, train) = fixture();
        let vocab = Vocab::specials_only();
        let cfg = EncoderConfig {
            dim: 8,
            layers: 1,
            heads: 2,
            max_len: 64,
            ff_dim: 16,
            seed: 1,
        };
        let model = RelationModel::<f64> {
            params: EncoderParams::init(cfg, vocab.len()).unwrap(),
            head: ScoringHead::zeros(8),
            vocab,
            templates: TemplateConfig::default(),
        };
        let preds = model.predict_split(&registry, &index, &train).unwrap();
        assert_eq!(
            preds.labels,
            vec![
                RelationLabel::relation("per:employee_of"),
                RelationLabel::relation("org:founded_by")
            ]
        );
        assert_eq!(preds.fallback_count, 0);
    }

    #[test]
    fn checkpoint_keeps_templates() {
        let vocab = Vocab::specials_only();
        let cfg = EncoderConfig {
            dim: 4,
            layers: 1,
            heads: 1,
            max_len: 16,
            ff_dim: 8,
            seed: 1,
        };
        let model = RelationModel::<f32> {
            params: EncoderParams::init(cfg, vocab.len()).unwrap(),
            head: ScoringHead::zeros(4),
            vocab,
            templates: TemplateConfig {
                marker: MarkerStyle::Tem,
                prompt: PromptStyle::NameOnly,
            },
        };
        let ckpt = model.to_checkpoint(json!({ "seed": 3 }));
        assert_eq!(ckpt.meta["seed"], 3);
        assert_eq!(RelationModel::from_checkpoint(ckpt).unwrap(), model);
    }
}
