//! Annotated relation-extraction examples: types, TACRED-format ingestion,
//! label statistics and a deterministic synthetic corpus generator.

mod synth;
mod tacred;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::templates::{RegistryError, RelationRegistry};

pub use synth::{generate_synthetic, SynthConfig, SynthRelation};
pub use tacred::{load_tacred, parse_tacred, to_tacred_json};

/// Spelling used for the null label in TACRED-format files.
pub const NA_ID: &str = "no_relation";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid example {id}: {reason}")]
    Validation { id: String, reason: String },
    #[error("example {id}: {source}")]
    Registry {
        id: String,
        #[source]
        source: RegistryError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("synthetic config: {0}")]
    Config(String),
}

/// Inclusive token span, as in the TACRED source format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }
}

/// NER type of an entity mention, e.g. `PERSON`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityType(String);

impl EntityType {
    pub fn new(name: impl Into<String>) -> Self {
        EntityType(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Lowercased form used inside entity markers and descriptions.
    pub fn marker_form(&self) -> String {
        self.0.to_lowercase()
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A relation from the registry, or the distinguished null label.
///
/// Ordering puts every relation before `Na` and relations in lexicographic id
/// order, which is the candidate ordering used throughout.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationLabel {
    Relation(String),
    Na,
}

impl RelationLabel {
    pub fn relation(id: impl Into<String>) -> Self {
        RelationLabel::Relation(id.into())
    }

    pub fn is_na(&self) -> bool {
        matches!(self, RelationLabel::Na)
    }

    pub fn id(&self) -> &str {
        match self {
            RelationLabel::Relation(id) => id,
            RelationLabel::Na => NA_ID,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for RelationLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for RelationLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(match normalize_relation_id(&raw) {
            None => RelationLabel::Na,
            Some(id) => RelationLabel::Relation(id),
        })
    }
}

/// Canonical relation id for a raw label, or `None` for the null label.
///
/// Hyphen/underscore drift after the `:` is folded to underscores and the
/// short `org:top_members` spelling maps to `org:top_members/employees`.
pub fn normalize_relation_id(raw: &str) -> Option<String> {
    let raw = raw.trim();
    let folded = raw.to_lowercase();
    if matches!(
        folded.as_str(),
        "no_relation" | "no-relation" | "na" | "no relation"
    ) {
        return None;
    }
    let id = match folded.split_once(':') {
        Some((prefix, rest)) => format!("{}:{}", prefix, rest.replace('-', "_")),
        None => folded.replace('-', "_"),
    };
    let id = match id.as_str() {
        "org:top_members" => "org:top_members/employees".to_string(),
        _ => id,
    };
    Some(id)
}

/// One annotated sentence with its subject/object mentions and gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub tokens: Vec<String>,
    pub subj: Span,
    pub subj_type: EntityType,
    pub obj: Span,
    pub obj_type: EntityType,
    pub gold: RelationLabel,
}

impl Example {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        subj: Span,
        subj_type: EntityType,
        obj: Span,
        obj_type: EntityType,
        gold: RelationLabel,
    ) -> Result<Self, CorpusError> {
        let ex = Example {
            id: id.into(),
            tokens,
            subj,
            subj_type,
            obj,
            obj_type,
            gold,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: String| {
            Err(CorpusError::Validation {
                id: self.id.clone(),
                reason,
            })
        };
        let n = self.tokens.len();
        for (role, span) in [("subject", self.subj), ("object", self.obj)] {
            if span.start > span.end {
                return fail(format!(
                    "{role} span {}..{} is reversed",
                    span.start, span.end
                ));
            }
            if span.end >= n {
                return fail(format!(
                    "{role} span {}..{} exceeds sentence of {n} tokens",
                    span.start, span.end
                ));
            }
        }
        if self.subj.overlaps(&self.obj) {
            return fail("subject and object spans overlap".into());
        }
        if self.subj_type.as_str().is_empty() || self.obj_type.as_str().is_empty() {
            return fail("empty entity type".into());
        }
        Ok(())
    }

    pub fn type_pair(&self) -> (&EntityType, &EntityType) {
        (&self.subj_type, &self.obj_type)
    }
}

/// Train/dev/test splits sharing one relation registry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub registry: RelationRegistry,
}

impl Dataset {
    pub const SPLITS: [&'static str; 3] = ["train", "dev", "test"];

    pub fn split(&self, name: &str) -> Option<&[Example]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Loads `train.json`, `dev.json` and `test.json` from a directory.
    /// Missing dev/test files yield empty splits; a missing train file is an error.
    pub fn load_dir(dir: &Path, registry: RelationRegistry) -> Result<Self, CorpusError> {
        let train = load_tacred(&dir.join("train.json"), &registry)?;
        let mut rest = Vec::new();
        for name in ["dev", "test"] {
            let path = dir.join(format!("{name}.json"));
            rest.push(if path.exists() {
                load_tacred(&path, &registry)?
            } else {
                Vec::new()
            });
        }
        let test = rest.pop().unwrap_or_default();
        let dev = rest.pop().unwrap_or_default();
        Ok(Dataset {
            train,
            dev,
            test,
            registry,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.into(),
            source,
        })?;
        for name in Self::SPLITS {
            let path = dir.join(format!("{name}.json"));
            let body = to_tacred_json(self.split(name).unwrap_or_default());
            std::fs::write(&path, body).map_err(|source| CorpusError::Io { path, source })?;
        }
        let path = dir.join("descriptions.tsv");
        std::fs::write(&path, self.registry.to_tsv())
            .map_err(|source| CorpusError::Io { path, source })?;
        Ok(())
    }

    pub fn find(&self, id: &str) -> Option<&Example> {
        self.train
            .iter()
            .chain(&self.dev)
            .chain(&self.test)
            .find(|e| e.id == id)
    }

    /// CSV with columns `relation,split,count`, one row per label per split.
    pub fn stats_csv(&self) -> String {
        let mut out = String::from("relation,split,count\n");
        for name in Self::SPLITS {
            for (label, count) in relation_counts(self.split(name).unwrap_or_default()).iter() {
                out.push_str(&format!("{},{name},{count}\n", csv_field(label.id())));
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Gold-label frequencies, ordered by descending count then ascending id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts(Vec<(RelationLabel, usize)>);

impl RelationCounts {
    pub fn iter(&self) -> impl Iterator<Item = &(RelationLabel, usize)> {
        self.0.iter()
    }

    pub fn get(&self, label: &RelationLabel) -> usize {
        self.0
            .iter()
            .find(|(l, _)| l == label)
            .map_or(0, |(_, c)| *c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|(_, c)| c).sum()
    }

    pub fn from_map(map: BTreeMap<RelationLabel, usize>) -> Self {
        let mut v: Vec<_> = map.into_iter().filter(|(_, c)| *c > 0).collect();
        v.sort_by(|(la, ca), (lb, cb)| match cb.cmp(ca) {
            Ordering::Equal => la.id().cmp(lb.id()),
            o => o,
        });
        RelationCounts(v)
    }
}

pub fn relation_counts(split: &[Example]) -> RelationCounts {
    let mut map = BTreeMap::new();
    for ex in split {
        *map.entry(ex.gold.clone()).or_insert(0usize) += 1;
    }
    RelationCounts::from_map(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, gold: RelationLabel) -> Example {
        Example::new(
            id,
            vec!["a".into(), "b".into()],
            Span::new(0, 0),
            EntityType::new("PERSON"),
            Span::new(1, 1),
            EntityType::new("CITY"),
            gold,
        )
        .unwrap()
    }

    #[test]
    fn normalizes_spelling_drift() {
        assert_eq!(normalize_relation_id("no-relation"), None);
        assert_eq!(normalize_relation_id("no_relation"), None);
        assert_eq!(
            normalize_relation_id("org:founded-by").as_deref(),
            Some("org:founded_by")
        );
        assert_eq!(
            normalize_relation_id("org:top-members").as_deref(),
            Some("org:top_members/employees")
        );
        assert_eq!(
            normalize_relation_id("org:political/religious-affiliation").as_deref(),
            Some("org:political/religious_affiliation")
        );
    }

    #[test]
    fn counts_sorted_by_frequency_then_id() {
        assert!(relation_counts(&[]).is_empty());
        let a = RelationLabel::relation("a");
        let b = RelationLabel::relation("b");
        let split = vec![ex("1", b.clone()), ex("2", a.clone()), ex("3", a.clone())];
        let counts = relation_counts(&split);
        assert_eq!(
            counts.iter().cloned().collect::<Vec<_>>(),
            vec![(a, 2), (b, 1)]
        );
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn ties_break_lexicographically_with_na_by_id() {
        let split = vec![
            ex("1", RelationLabel::relation("per:x")),
            ex("2", RelationLabel::Na),
            ex("3", RelationLabel::relation("org:y")),
        ];
        let ids: Vec<_> = relation_counts(&split)
            .iter()
            .map(|(l, _)| l.id().to_string())
            .collect();
        assert_eq!(ids, ["no_relation", "org:y", "per:x"]);
    }

    #[test]
    fn rejects_bad_spans() {
        let toks: Vec<String> = "a b c".split(' ').map(String::from).collect();
        let p = EntityType::new("PERSON");
        let mk = |s: Span, o: Span| {
            Example::new(
                "x",
                toks.clone(),
                s,
                p.clone(),
                o,
                p.clone(),
                RelationLabel::Na,
            )
        };
        assert!(mk(Span::new(0, 0), Span::new(2, 2)).is_ok());
        assert!(matches!(
            mk(Span::new(0, 1), Span::new(1, 2)),
            Err(CorpusError::Validation { .. })
        ));
        assert!(matches!(
            mk(Span::new(0, 0), Span::new(2, 3)),
            Err(CorpusError::Validation { .. })
        ));
        assert!(matches!(
            mk(Span::new(1, 0), Span::new(2, 2)),
            Err(CorpusError::Validation { .. })
        ));
    }

    #[test]
    fn na_sorts_after_relations() {
        let mut v = [
            RelationLabel::Na,
            RelationLabel::relation("z"),
            RelationLabel::relation("a"),
        ];
        v.sort();
        assert_eq!(v.last(), Some(&RelationLabel::Na));
        assert_eq!(v[0].id(), "a");
    }
}
