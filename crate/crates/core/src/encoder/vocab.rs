use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, RelationLabel};
use crate::templates::{self, drp_for, render_markers, MarkerStyle, PromptStyle, RelationRegistry};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const EOS_ID: usize = 4;

pub const SPECIALS: [&str; 9] = [
    templates::PAD,
    templates::UNK,
    templates::BOS,
    templates::SEP,
    templates::EOS,
    templates::SUBJ_OPEN,
    templates::SUBJ_CLOSE,
    templates::OBJ_OPEN,
    templates::OBJ_CLOSE,
];

/// Dense token ids: the specials first, then every other token in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn specials_only() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rest: BTreeSet<String> = tokens
            .into_iter()
            .map(Into::into)
            .filter(|t| !SPECIALS.contains(&t.as_str()))
            .collect();
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(rest).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Vocabulary covering every marked train sentence under each marker style
/// and every hypothesis text under each prompt style.
pub fn build_vocab(dataset: &Dataset, registry: &RelationRegistry) -> Vocab {
    let mut seen = BTreeSet::new();
    for ex in &dataset.train {
        for style in [MarkerStyle::Iem, MarkerStyle::Tem, MarkerStyle::Raw] {
            if let Ok(r) = render_markers(ex, style) {
                seen.extend(r.tokens);
            }
        }
    }
    let labels = registry.relations().into_iter().chain([RelationLabel::Na]);
    for label in labels {
        for style in [
            PromptStyle::Drp,
            PromptStyle::DescriptionOnly,
            PromptStyle::NameOnly,
        ] {
            if let Ok(text) = drp_for(registry, &label, style) {
                seen.extend(text.split_whitespace().map(String::from));
            }
        }
    }
    Vocab::from_tokens(seen)
}
