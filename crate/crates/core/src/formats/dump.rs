use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{FormatError, NumberedLines};
use crate::graph::EntityId;

/// One entity of the simplified dump. Also what the Wikidata adapter produces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub sitelinks: u64,
    #[serde(default)]
    pub instance_of: Vec<EntityId>,
    #[serde(default)]
    pub subclass_of: Vec<EntityId>,
    #[serde(default)]
    pub is_disambiguation: bool,
    #[serde(default)]
    pub wiki_titles: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<EntityId>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
    #[serde(default)]
    sitelinks: u64,
    #[serde(default)]
    instance_of: Vec<EntityId>,
    #[serde(default)]
    subclass_of: Vec<EntityId>,
    #[serde(default)]
    is_disambiguation: bool,
    #[serde(default)]
    wiki_titles: BTreeMap<String, String>,
}

/// Decode one `.kg.jsonl` line. Unknown keys are ignored; errors carry line 1
/// and the byte offset into `line`.
pub fn parse_entity_record(line: &str) -> Result<EntityRecord, FormatError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| FormatError::json(1, &e))?;
    let id = match raw.id {
        Some(id) if !id.as_str().is_empty() => id,
        _ => return Err(FormatError::MissingId { line: 1 }),
    };
    Ok(EntityRecord {
        id,
        labels: raw.labels,
        sitelinks: raw.sitelinks,
        instance_of: raw.instance_of,
        subclass_of: raw.subclass_of,
        is_disambiguation: raw.is_disambiguation,
        wiki_titles: raw.wiki_titles,
    })
}

/// Stream records from a `.kg.jsonl` source, skipping blank lines.
pub fn read_entity_records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<EntityRecord, FormatError>> {
    NumberedLines::new(reader).filter_map(|item| match item {
        Err(e) => Some(Err(e)),
        Ok((_, line)) if line.trim().is_empty() => None,
        Ok((n, line)) => Some(parse_entity_record(&line).map_err(|e| e.at_line(n))),
    })
}
