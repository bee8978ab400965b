//! Entity-type candidate restriction: which relations a (subject type, object
//! type) pair licenses, as observed in the training split.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityType, Example, RelationLabel};
use crate::templates::{RegistryError, RelationRegistry};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypePair {
    pub subj_type: EntityType,
    pub obj_type: EntityType,
}

impl TypePair {
    pub fn new(subj_type: EntityType, obj_type: EntityType) -> Self {
        TypePair {
            subj_type,
            obj_type,
        }
    }

    pub fn of(example: &Example) -> Self {
        TypePair::new(example.subj_type.clone(), example.obj_type.clone())
    }

    /// `SUBJ_TYPE|OBJ_TYPE`, the key used in index files.
    pub fn key(&self) -> String {
        format!("{}|{}", self.subj_type, self.obj_type)
    }
}

/// What to return for a type pair never seen in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    FullSet,
    NaOnly,
}

impl FromStr for FallbackPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full_set" | "full" => Ok(FallbackPolicy::FullSet),
            "na_only" | "na" => Ok(FallbackPolicy::NaOnly),
            other => Err(format!("unknown fallback policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    /// Licensed relations in id order, NA last.
    pub relations: Vec<RelationLabel>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateIndex {
    table: BTreeMap<TypePair, BTreeSet<RelationLabel>>,
    all_relations: Vec<RelationLabel>,
    pub fallback: FallbackPolicy,
}

impl CandidateIndex {
    /// Index with the literal co-occurrence rule: a relation is licensed for a
    /// pair iff at least one training example carries it with that pair.
    pub fn build(train: &[Example], registry: &RelationRegistry, fallback: FallbackPolicy) -> Self {
        Self::build_with_support(train, registry, fallback, 1)
    }

    /// Like [`CandidateIndex::build`] but drops relations seen fewer than
    /// `min_support` times for a pair.
    pub fn build_with_support(
        train: &[Example],
        registry: &RelationRegistry,
        fallback: FallbackPolicy,
        min_support: usize,
    ) -> Self {
        let mut support: BTreeMap<TypePair, BTreeMap<RelationLabel, usize>> = BTreeMap::new();
        for ex in train.iter().filter(|e| !e.gold.is_na()) {
            *support
                .entry(TypePair::of(ex))
                .or_default()
                .entry(ex.gold.clone())
                .or_default() += 1;
        }
        let table = support
            .into_iter()
            .filter_map(|(pair, counts)| {
                let set: BTreeSet<_> = counts
                    .into_iter()
                    .filter(|(_, c)| *c >= min_support.max(1))
                    .map(|(r, _)| r)
                    .collect();
                (!set.is_empty()).then_some((pair, set))
            })
            .collect();
        CandidateIndex {
            table,
            all_relations: registry.relations(),
            fallback,
        }
    }

    pub fn lookup(&self, subj_type: &EntityType, obj_type: &EntityType) -> Candidates {
        let pair = TypePair::new(subj_type.clone(), obj_type.clone());
        let (mut relations, fallback_used): (Vec<RelationLabel>, bool) = match self.table.get(&pair)
        {
            Some(set) => (set.iter().cloned().collect(), false),
            None => match self.fallback {
                FallbackPolicy::FullSet => (self.all_relations.clone(), true),
                FallbackPolicy::NaOnly => (Vec::new(), true),
            },
        };
        relations.push(RelationLabel::Na);
        Candidates {
            relations,
            fallback_used,
        }
    }

    /// The restricted set for the pair with NA appended.
    pub fn candidates_for(
        &self,
        subj_type: &EntityType,
        obj_type: &EntityType,
    ) -> Vec<RelationLabel> {
        self.lookup(subj_type, obj_type).relations
    }

    pub fn for_example(&self, example: &Example) -> Candidates {
        self.lookup(&example.subj_type, &example.obj_type)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&TypePair, &BTreeSet<RelationLabel>)> {
        self.table.iter()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// JSON object mapping `SUBJ|OBJ` to the sorted relation ids.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, Vec<&str>> = self
            .table
            .iter()
            .map(|(p, set)| (p.key(), set.iter().map(|r| r.id()).collect()))
            .collect();
        serde_json::to_string_pretty(&map).expect("index serializes")
    }

    pub fn from_json(
        text: &str,
        registry: &RelationRegistry,
        fallback: FallbackPolicy,
    ) -> Result<Self, IndexFileError> {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut table = BTreeMap::new();
        for (key, ids) in map {
            let (s, o) = key
                .split_once('|')
                .ok_or_else(|| IndexFileError::Key(key.clone()))?;
            let set = ids
                .iter()
                .map(|id| registry.resolve(id))
                .filter(|r| !matches!(r, Ok(RelationLabel::Na)))
                .collect::<Result<BTreeSet<_>, _>>()?;
            table.insert(TypePair::new(EntityType::new(s), EntityType::new(o)), set);
        }
        Ok(CandidateIndex {
            table,
            all_relations: registry.relations(),
            fallback,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IndexFileError {
    #[error("malformed index file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("index key {0:?} is not of the form SUBJ|OBJ")]
    Key(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}
