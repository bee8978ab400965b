//! Trigger-token synthetic corpus.
//!
//! Every non-NA sentence carries its relation's trigger word between the two
//! mentions; NA sentences carry a neutral verb instead. The gold label is a
//! function of (trigger, subject type, object type), so a perfect rule-based
//! oracle exists for the generated task.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, EntityType, Example, RelationLabel, Span};
use crate::templates::RelationRegistry;

const FILLERS: &[&str] = &[
    "the",
    "reportedly",
    "on",
    "Monday",
    "in",
    "2009",
    "officials",
    "said",
    "that",
    "recently",
    "sources",
    "last",
    "year",
    "also",
    "publicly",
    "Tuesday",
    "early",
];

const NEUTRAL_VERBS: &[&str] = &[
    "met",
    "visited",
    "mentioned",
    "criticized",
    "thanked",
    "called",
    "praised",
];

fn default_pool(entity_type: &str) -> Vec<Vec<&'static str>> {
    let names: &[&[&str]] = match entity_type {
        "PERSON" => &[
            &["Sharpton"],
            &["Maria", "Lopez"],
            &["Kwame", "Mensah"],
            &["Li", "Wei"],
            &["Anna", "Berg"],
            &["Omar"],
            &["Priya", "Natarajan"],
            &["John", "Smith"],
            &["Yuki", "Tanaka"],
            &["Elena"],
            &["Carlos", "Ruiz"],
            &["Fatima", "Haddad"],
        ],
        "ORGANIZATION" => &[
            &["National", "Action", "Network"],
            &["Acme", "Corp"],
            &["Red", "Cross"],
            &["Globex"],
            &["Harvard", "University"],
            &["Initech"],
            &["World", "Bank"],
            &["Stark", "Industries"],
            &["United", "Nations"],
            &["Umbrella", "Group"],
        ],
        "CITY" => &[
            &["Boston"],
            &["Lagos"],
            &["New", "Delhi"],
            &["Kyoto"],
            &["Lyon"],
            &["Santiago"],
            &["Cairo"],
            &["Oslo"],
        ],
        "COUNTRY" => &[
            &["France"],
            &["Kenya"],
            &["Peru"],
            &["Japan"],
            &["Canada"],
            &["Egypt"],
        ],
        "DATE" => &[&["1998"], &["March", "2004"], &["2011"], &["June", "1987"]],
        "NUMBER" => &[&["42"], &["300"], &["1,200"], &["seven"]],
        _ => &[],
    };
    names.iter().map(|n| n.to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRelation {
    pub id: String,
    pub trigger: String,
    pub subj_type: String,
    pub obj_type: String,
    pub weight: f64,
    /// Falls back to the shipped description for the id when absent.
    #[serde(default)]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub relations: Vec<SynthRelation>,
    pub na_proportion: f64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
}

impl Default for SynthConfig {
    /// Six relations over three type pairs, 600/200/200 examples, 30% NA.
    fn default() -> Self {
        let rel = |id: &str, trigger: &str, s: &str, o: &str, weight: f64| SynthRelation {
            id: id.into(),
            trigger: trigger.into(),
            subj_type: s.into(),
            obj_type: o.into(),
            weight,
            description: None,
        };
        SynthConfig {
            relations: vec![
                rel("org:founded_by", "founded", "ORGANIZATION", "PERSON", 3.0),
                rel(
                    "org:top_members/employees",
                    "heads",
                    "ORGANIZATION",
                    "PERSON",
                    2.0,
                ),
                rel("per:employee_of", "works", "PERSON", "ORGANIZATION", 3.0),
                rel(
                    "per:schools_attended",
                    "studied",
                    "PERSON",
                    "ORGANIZATION",
                    1.0,
                ),
                rel("per:city_of_birth", "born", "PERSON", "CITY", 2.0),
                rel("per:cities_of_residence", "lives", "PERSON", "CITY", 1.0),
            ],
            na_proportion: 0.3,
            train_size: 600,
            dev_size: 200,
            test_size: 200,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Config(m));
        if !(0.0..=1.0).contains(&self.na_proportion) {
            return err(format!(
                "NA proportion {} outside [0, 1]",
                self.na_proportion
            ));
        }
        if self.relations.is_empty() {
            return err("at least one relation is required".into());
        }
        let mut keys = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for r in &self.relations {
            if !(r.weight.is_finite() && r.weight >= 0.0) {
                return err(format!("{}: weight must be finite and non-negative", r.id));
            }
            if r.trigger.is_empty() || r.trigger.contains(char::is_whitespace) {
                return err(format!(
                    "{}: trigger must be a single non-empty token",
                    r.id
                ));
            }
            if FILLERS.contains(&r.trigger.as_str()) || NEUTRAL_VERBS.contains(&r.trigger.as_str())
            {
                return err(format!(
                    "{}: trigger {:?} collides with filler vocabulary",
                    r.id, r.trigger
                ));
            }
            for t in [&r.subj_type, &r.obj_type] {
                if default_pool(t).iter().flatten().any(|w| *w == r.trigger) {
                    return err(format!(
                        "{}: trigger {:?} collides with an entity name",
                        r.id, r.trigger
                    ));
                }
            }
            if !keys.insert((&r.trigger, &r.subj_type, &r.obj_type)) {
                return err(format!(
                    "relations share (trigger, subject type, object type) = ({}, {}, {})",
                    r.trigger, r.subj_type, r.obj_type
                ));
            }
            if !ids.insert(&r.id) {
                return err(format!("relation {} declared twice", r.id));
            }
        }
        if self.na_proportion < 1.0 && self.relations.iter().all(|r| r.weight == 0.0) {
            return err("all relation weights are zero".into());
        }
        Ok(())
    }

    fn registry(&self) -> Result<RelationRegistry, CorpusError> {
        let shipped = RelationRegistry::shipped();
        let mut entries = Vec::new();
        for r in &self.relations {
            let desc = match &r.description {
                Some(d) => d.clone(),
                None => {
                    let label = shipped
                        .resolve(&r.id)
                        .map_err(|e| CorpusError::Config(e.to_string()))?;
                    shipped
                        .description(&label)
                        .map_err(|e| CorpusError::Config(e.to_string()))?
                        .to_string()
                }
            };
            entries.push((r.id.clone(), desc));
        }
        RelationRegistry::from_entries(entries).map_err(|e| CorpusError::Config(e.to_string()))
    }
}

fn fill(rng: &mut ChaCha8Rng, max: usize, out: &mut Vec<String>) {
    for _ in 0..rng.random_range(0..=max) {
        out.push(FILLERS.choose(rng).unwrap().to_string());
    }
}

struct Generator<'a> {
    config: &'a SynthConfig,
    pools: BTreeMap<&'a str, Vec<Vec<String>>>,
    relation_dist: Option<WeightedIndex<f64>>,
    labels: Vec<RelationLabel>,
    rng: ChaCha8Rng,
}

impl<'a> Generator<'a> {
    fn pool(entity_type: &str) -> Vec<Vec<String>> {
        let pool = default_pool(entity_type);
        if pool.is_empty() {
            let stem = entity_type.to_lowercase();
            (0..6).map(|i| vec![format!("{stem}{i}")]).collect()
        } else {
            pool.into_iter()
                .map(|n| n.into_iter().map(String::from).collect())
                .collect()
        }
    }

    fn sentence(&mut self, id: String, rel: &SynthRelation, gold: RelationLabel) -> Example {
        let rng = &mut self.rng;
        let subj_name = self.pools[rel.subj_type.as_str()]
            .choose(rng)
            .unwrap()
            .clone();
        let mut obj_name = self.pools[rel.obj_type.as_str()]
            .choose(rng)
            .unwrap()
            .clone();
        while obj_name == subj_name {
            obj_name = self.pools[rel.obj_type.as_str()]
                .choose(rng)
                .unwrap()
                .clone();
        }
        let verb = if gold.is_na() {
            NEUTRAL_VERBS.choose(rng).unwrap().to_string()
        } else {
            rel.trigger.clone()
        };
        let subject_first = rng.random_bool(0.5);
        let mut tokens = Vec::new();
        fill(rng, 2, &mut tokens);
        let first_start = tokens.len();
        tokens.extend(if subject_first {
            subj_name.clone()
        } else {
            obj_name.clone()
        });
        let first = Span::new(first_start, tokens.len() - 1);
        fill(rng, 1, &mut tokens);
        tokens.push(verb);
        fill(rng, 1, &mut tokens);
        let second_start = tokens.len();
        tokens.extend(if subject_first { obj_name } else { subj_name });
        let second = Span::new(second_start, tokens.len() - 1);
        fill(rng, 2, &mut tokens);
        tokens.push(".".into());
        let (subj, obj) = if subject_first {
            (first, second)
        } else {
            (second, first)
        };
        Example::new(
            id,
            tokens,
            subj,
            EntityType::new(rel.subj_type.clone()),
            obj,
            EntityType::new(rel.obj_type.clone()),
            gold,
        )
        .expect("generated example is valid")
    }

    fn split(&mut self, name: &str, size: usize) -> Vec<Example> {
        let relations = &self.config.relations;
        (0..size)
            .map(|i| {
                let id = format!("synth-{name}-{i:05}");
                let na =
                    self.relation_dist.is_none() || self.rng.random_bool(self.config.na_proportion);
                if na {
                    // NA sentences reuse a declared type pair so candidates are non-trivial.
                    let r = relations.choose(&mut self.rng).unwrap().clone();
                    self.sentence(id, &r, RelationLabel::Na)
                } else {
                    let k = self.relation_dist.as_ref().unwrap().sample(&mut self.rng);
                    let gold = self.labels[k].clone();
                    let r = relations[k].clone();
                    self.sentence(id, &r, gold)
                }
            })
            .collect()
    }
}

/// Generates a dataset as a pure function of `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset, CorpusError> {
    config.validate()?;
    let registry = config.registry()?;
    let labels = config
        .relations
        .iter()
        .map(|r| {
            registry
                .resolve(&r.id)
                .map_err(|e| CorpusError::Config(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let relation_dist = if config.na_proportion < 1.0 {
        Some(
            WeightedIndex::new(config.relations.iter().map(|r| r.weight))
                .map_err(|e| CorpusError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let mut pools = BTreeMap::new();
    for r in &config.relations {
        for t in [&r.subj_type, &r.obj_type] {
            pools
                .entry(t.as_str())
                .or_insert_with(|| Generator::pool(t));
        }
    }
    let mut gen = Generator {
        config,
        pools,
        relation_dist,
        labels,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let train = gen.split("train", config.train_size);
    let dev = gen.split("dev", config.dev_size);
    let test = gen.split("test", config.test_size);
    Ok(Dataset {
        train,
        dev,
        test,
        registry,
    })
}
