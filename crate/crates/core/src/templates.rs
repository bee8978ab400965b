//! Entity markers, the relation-description registry and hypothesis assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_relation_id, Example, RelationLabel};

pub const BOS: &str = "[BOS]";
pub const SEP: &str = "[SEP]";
pub const EOS: &str = "[EOS]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SUBJ_OPEN: &str = "[u1]";
pub const SUBJ_CLOSE: &str = "[u2]";
pub const OBJ_OPEN: &str = "[u3]";
pub const OBJ_CLOSE: &str = "[u4]";

pub const DEFAULT_REL_PROMPT: &str = "There is a relation between subject and object";
pub const DEFAULT_NA_PROMPT: &str = "There is no relation between subject and object.";

const SHIPPED_TSV: &str = include_str!("../data/descriptions.tsv");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("relation {0} has an empty description")]
    EmptyDescription(String),
    #[error("relation {0} listed twice")]
    Duplicate(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("example {0}: subject and object spans overlap")]
    OverlappingSpans(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    id: String,
    source_id: String,
    description: String,
}

/// The relation set together with one description per relation and the two
/// narrative prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRegistry {
    entries: Vec<Entry>,
    index: BTreeMap<String, usize>,
    na_description: Option<String>,
    rel_prompt: String,
    na_prompt: String,
}

impl RelationRegistry {
    /// Registry backed by the bundled `descriptions.tsv`.
    pub fn shipped() -> Self {
        Self::from_tsv(SHIPPED_TSV).expect("bundled descriptions.tsv is well formed")
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    /// Parses `relation_id<TAB>description` lines. A `relation_id` header,
    /// blank lines and `#` comments are skipped. A null-label row is kept as
    /// the NA description and never enters the relation set.
    pub fn from_tsv(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Self::empty();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty()
                || line.starts_with('#')
                || (n == 0 && line.starts_with("relation_id\t"))
            {
                continue;
            }
            let (id, desc) = line
                .split_once('\t')
                .ok_or_else(|| RegistryError::Malformed {
                    line: n + 1,
                    reason: "expected relation_id<TAB>description".into(),
                })?;
            reg.insert(id.trim(), desc.trim())?;
        }
        Ok(reg)
    }

    pub fn from_entries<I, A, B>(entries: I) -> Result<Self, RegistryError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut reg = Self::empty();
        for (id, desc) in entries {
            reg.insert(id.as_ref(), desc.as_ref())?;
        }
        Ok(reg)
    }

    fn empty() -> Self {
        RelationRegistry {
            entries: Vec::new(),
            index: BTreeMap::new(),
            na_description: None,
            rel_prompt: DEFAULT_REL_PROMPT.into(),
            na_prompt: DEFAULT_NA_PROMPT.into(),
        }
    }

    fn insert(&mut self, raw_id: &str, description: &str) -> Result<(), RegistryError> {
        if description.is_empty() {
            return Err(RegistryError::EmptyDescription(raw_id.into()));
        }
        match normalize_relation_id(raw_id) {
            None => {
                if self.na_description.is_some() {
                    return Err(RegistryError::Duplicate(raw_id.into()));
                }
                self.na_description = Some(description.into());
            }
            Some(id) => {
                if self.index.contains_key(&id) {
                    return Err(RegistryError::Duplicate(id));
                }
                self.index.insert(id.clone(), self.entries.len());
                self.entries.push(Entry {
                    id,
                    source_id: raw_id.into(),
                    description: description.into(),
                });
            }
        }
        Ok(())
    }

    pub fn with_prompts(
        mut self,
        rel_prompt: impl Into<String>,
        na_prompt: impl Into<String>,
    ) -> Self {
        self.rel_prompt = rel_prompt.into();
        self.na_prompt = na_prompt.into();
        self
    }

    /// Restricts the registry to the given relation ids, keeping prompts.
    pub fn subset<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, RegistryError> {
        let mut reg = Self::empty().with_prompts(self.rel_prompt.clone(), self.na_prompt.clone());
        reg.na_description = self.na_description.clone();
        for raw in ids {
            let label = self.resolve(raw)?;
            if let RelationLabel::Relation(id) = label {
                let e = &self.entries[self.index[&id]];
                reg.insert(&e.source_id, &e.description)?;
            }
        }
        Ok(reg)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("relation_id\tdescription\n");
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\n", e.source_id, e.description));
        }
        if let Some(na) = &self.na_description {
            out.push_str(&format!("no-relation\t{na}\n"));
        }
        out
    }

    /// Maps a raw label string to a registry relation or NA.
    pub fn resolve(&self, raw: &str) -> Result<RelationLabel, RegistryError> {
        match normalize_relation_id(raw) {
            None => Ok(RelationLabel::Na),
            Some(id) if self.index.contains_key(&id) => Ok(RelationLabel::Relation(id)),
            Some(_) => Err(RegistryError::UnknownRelation(raw.into())),
        }
    }

    pub fn contains(&self, label: &RelationLabel) -> bool {
        match label {
            RelationLabel::Na => true,
            RelationLabel::Relation(id) => self.index.contains_key(id),
        }
    }

    pub fn description(&self, label: &RelationLabel) -> Result<&str, RegistryError> {
        match label {
            RelationLabel::Na => Err(RegistryError::UnknownRelation(
                "no_relation has no description".into(),
            )),
            RelationLabel::Relation(id) => self
                .index
                .get(id)
                .map(|&i| self.entries[i].description.as_str())
                .ok_or_else(|| RegistryError::UnknownRelation(id.clone())),
        }
    }

    /// The relation set in lexicographic id order (NA excluded).
    pub fn relations(&self) -> Vec<RelationLabel> {
        self.index
            .keys()
            .map(|id| RelationLabel::Relation(id.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Description row given for the null label in the source file, if any.
    pub fn na_description(&self) -> Option<&str> {
        self.na_description.as_deref()
    }

    pub fn rel_prompt(&self) -> &str {
        &self.rel_prompt
    }

    pub fn na_prompt(&self) -> &str {
        &self.na_prompt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerStyle {
    /// `[u1] SUBJ ( subject type ) [u2]` / `[u3] OBJ ( object type ) [u4]`.
    Iem,
    /// Typed punctuation markers: `@ * type * SUBJ @` / `# ^ type ^ OBJ #`.
    Tem,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Drp,
    DescriptionOnly,
    NameOnly,
}

macro_rules! str_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().replace('-', "_").as_str() {
                    $($name => Ok($variant),)+
                    other => Err(format!("unknown {} {other:?}", stringify!($ty))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

str_enum!(MarkerStyle { "iem" => MarkerStyle::Iem, "tem" => MarkerStyle::Tem, "raw" => MarkerStyle::Raw });
str_enum!(PromptStyle {
    "drp" => PromptStyle::Drp,
    "description_only" => PromptStyle::DescriptionOnly,
    "name_only" => PromptStyle::NameOnly,
});

/// Token sequence plus the inclusive token ranges covered by each mention
/// (markers included) and the separator position once assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedInput {
    pub tokens: Vec<String>,
    pub subj_marker: (usize, usize),
    pub obj_marker: (usize, usize),
    pub sep: Option<usize>,
}

impl RenderedInput {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn detokenized(&self) -> String {
        detokenize(&self.tokens)
    }
}

/// Joins tokens with single spaces, attaching closing punctuation to the left
/// and opening parentheses to the right.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for t in tokens {
        let t = t.as_ref();
        let attach_left = matches!(t, "." | "," | ")" | ";" | ":" | "!" | "?");
        if !glue_next && !attach_left {
            out.push(' ');
        }
        out.push_str(t);
        glue_next = t == "(";
    }
    out
}

pub fn render_markers(
    example: &Example,
    style: MarkerStyle,
) -> Result<RenderedInput, TemplateError> {
    if example.subj.overlaps(&example.obj) {
        return Err(TemplateError::OverlappingSpans(example.id.clone()));
    }
    let subj_type = example.subj_type.marker_form();
    let obj_type = example.obj_type.marker_form();
    let (s_open, s_close): (Vec<&str>, Vec<&str>) = match style {
        MarkerStyle::Iem => (
            vec![SUBJ_OPEN],
            vec!["(", "subject", &subj_type, ")", SUBJ_CLOSE],
        ),
        MarkerStyle::Tem => (vec!["@", "*", &subj_type, "*"], vec!["@"]),
        MarkerStyle::Raw => (vec![], vec![]),
    };
    let (o_open, o_close): (Vec<&str>, Vec<&str>) = match style {
        MarkerStyle::Iem => (
            vec![OBJ_OPEN],
            vec!["(", "object", &obj_type, ")", OBJ_CLOSE],
        ),
        MarkerStyle::Tem => (vec!["#", "^", &obj_type, "^"], vec!["#"]),
        MarkerStyle::Raw => (vec![], vec![]),
    };

    let mut tokens = Vec::with_capacity(example.tokens.len() + 12);
    let (mut subj_marker, mut obj_marker) = ((0, 0), (0, 0));
    for (i, tok) in example.tokens.iter().enumerate() {
        if i == example.subj.start {
            subj_marker.0 = tokens.len();
            tokens.extend(s_open.iter().map(|s| s.to_string()));
        }
        if i == example.obj.start {
            obj_marker.0 = tokens.len();
            tokens.extend(o_open.iter().map(|s| s.to_string()));
        }
        tokens.push(tok.clone());
        if i == example.subj.end {
            tokens.extend(s_close.iter().map(|s| s.to_string()));
            subj_marker.1 = tokens.len() - 1;
        }
        if i == example.obj.end {
            tokens.extend(o_close.iter().map(|s| s.to_string()));
            obj_marker.1 = tokens.len() - 1;
        }
    }
    Ok(RenderedInput {
        tokens,
        subj_marker,
        obj_marker,
        sep: None,
    })
}

/// Text of the relation hypothesis for `relation` under `style`.
pub fn drp_for(
    registry: &RelationRegistry,
    relation: &RelationLabel,
    style: PromptStyle,
) -> Result<String, RegistryError> {
    if !registry.contains(relation) {
        return Err(RegistryError::UnknownRelation(relation.id().into()));
    }
    Ok(match (style, relation) {
        (PromptStyle::Drp | PromptStyle::DescriptionOnly, RelationLabel::Na) => {
            registry.na_prompt().to_string()
        }
        (PromptStyle::NameOnly, RelationLabel::Na) => "no relation".to_string(),
        (PromptStyle::Drp, r) => format!("{}: {}", registry.rel_prompt(), registry.description(r)?),
        (PromptStyle::DescriptionOnly, r) => registry.description(r)?.to_string(),
        (PromptStyle::NameOnly, RelationLabel::Relation(id)) => id
            .replace([':', '_'], " ")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" "),
    })
}

/// `[BOS] marked [SEP] relation-text [EOS]`, relation text split on whitespace.
pub fn assemble_input(marked: &RenderedInput, relation_text: &str) -> RenderedInput {
    let mut tokens = Vec::with_capacity(marked.tokens.len() + 24);
    tokens.push(BOS.to_string());
    tokens.extend(marked.tokens.iter().cloned());
    let sep = tokens.len();
    tokens.push(SEP.to_string());
    tokens.extend(relation_text.split_whitespace().map(String::from));
    tokens.push(EOS.to_string());
    let shift = |(a, b): (usize, usize)| (a + 1, b + 1);
    RenderedInput {
        tokens,
        subj_marker: shift(marked.subj_marker),
        obj_marker: shift(marked.obj_marker),
        sep: Some(sep),
    }
}

/// Marker and prompt style used to turn an example into hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub marker: MarkerStyle,
    pub prompt: PromptStyle,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            marker: MarkerStyle::Iem,
            prompt: PromptStyle::Drp,
        }
    }
}

impl TemplateConfig {
    pub fn render(
        &self,
        registry: &RelationRegistry,
        example: &Example,
        relation: &RelationLabel,
    ) -> Result<RenderedInput, TemplateError> {
        let marked = render_markers(example, self.marker)?;
        Ok(assemble_input(
            &marked,
            &drp_for(registry, relation, self.prompt)?,
        ))
    }
}
