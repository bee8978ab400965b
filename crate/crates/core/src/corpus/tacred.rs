use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, EntityType, Example, RelationLabel, Span, NA_ID};
use crate::templates::RelationRegistry;

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    token: Vec<String>,
    subj_start: usize,
    subj_end: usize,
    subj_type: String,
    obj_start: usize,
    obj_end: usize,
    obj_type: String,
    relation: String,
}

pub fn load_tacred(path: &Path, registry: &RelationRegistry) -> Result<Vec<Example>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tacred(&text, registry)
}

/// Parses a TACRED-format JSON array. Extra fields on each object are ignored.
pub fn parse_tacred(text: &str, registry: &RelationRegistry) -> Result<Vec<Example>, CorpusError> {
    let records: Vec<Record> = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    records
        .into_iter()
        .map(|r| {
            let gold = registry
                .resolve(&r.relation)
                .map_err(|source| CorpusError::Registry {
                    id: r.id.clone(),
                    source,
                })?;
            Example::new(
                r.id,
                r.token,
                Span::new(r.subj_start, r.subj_end),
                EntityType::new(r.subj_type),
                Span::new(r.obj_start, r.obj_end),
                EntityType::new(r.obj_type),
                gold,
            )
        })
        .collect()
}

pub fn to_tacred_json(split: &[Example]) -> String {
    let records: Vec<Record> = split
        .iter()
        .map(|e| Record {
            id: e.id.clone(),
            token: e.tokens.clone(),
            subj_start: e.subj.start,
            subj_end: e.subj.end,
            subj_type: e.subj_type.as_str().to_string(),
            obj_start: e.obj.start,
            obj_end: e.obj.end,
            obj_type: e.obj_type.as_str().to_string(),
            relation: match &e.gold {
                RelationLabel::Na => NA_ID.to_string(),
                RelationLabel::Relation(id) => id.clone(),
            },
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}

// serde_json reports 1-based line and column (column counted in bytes).
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
