//! Adapter for the Wikidata JSON entity dump.
//!
//! Only the parts the generator needs are kept: labels, `P31` (instance of)
//! and `P279` (subclass of) targets, sitelinks and the per-language Wikipedia
//! page titles hidden inside the sitelinks.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde_json::{Map, Value};

use super::{EntityRecord, FormatError, NumberedLines};
use crate::graph::EntityId;

/// "Wikimedia disambiguation page".
pub const DEFAULT_DISAMBIGUATION_CLASS: &str = "Q4167410";

const INSTANCE_OF: &str = "P31";
const SUBCLASS_OF: &str = "P279";

// Sitelink keys ending in "wiki" that are not language Wikipedias.
const NON_LANGUAGE_WIKIS: &[&str] = &[
    "commonswiki",
    "specieswiki",
    "metawiki",
    "mediawikiwiki",
    "wikidatawiki",
    "sourceswiki",
    "wikimaniawiki",
    "foundationwiki",
    "outreachwiki",
    "incubatorwiki",
    "testwiki",
    "testwikidatawiki",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikidataOptions {
    pub disambiguation_class: EntityId,
}

impl Default for WikidataOptions {
    fn default() -> Self {
        Self {
            disambiguation_class: EntityId::from(DEFAULT_DISAMBIGUATION_CLASS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WikidataEntity {
    Item(EntityRecord),
    /// Properties, lexemes and other non-item entries.
    Skip,
}

fn invalid(message: impl Into<String>) -> FormatError {
    FormatError::Entity {
        line: 1,
        message: message.into(),
    }
}

fn object_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<Option<&'a Map<String, Value>>, FormatError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Object(m)) => Ok(Some(m)),
        // Empty claim/label maps are serialized as `[]` in the dumps.
        Some(Value::Array(a)) if a.is_empty() => Ok(None),
        Some(_) => Err(invalid(format!("`{key}` is not an object"))),
    }
}

fn claim_targets(claims: Option<&Map<String, Value>>, property: &str) -> Result<Vec<EntityId>, FormatError> {
    let Some(statements) = claims.and_then(|c| c.get(property)) else {
        return Ok(Vec::new());
    };
    let statements = statements
        .as_array()
        .ok_or_else(|| invalid(format!("claims for {property} are not an array")))?;
    let mut out = Vec::new();
    for statement in statements {
        let snak = statement
            .get("mainsnak")
            .ok_or_else(|| invalid(format!("{property} statement without mainsnak")))?;
        if snak.get("snaktype").and_then(Value::as_str).unwrap_or("value") != "value" {
            continue;
        }
        let value = snak.get("datavalue").and_then(|d| d.get("value"));
        let id = match value {
            Some(v) => match (v.get("id"), v.get("numeric-id")) {
                (Some(Value::String(id)), _) => Some(id.clone()),
                (_, Some(n)) => n.as_u64().map(|n| format!("Q{n}")),
                _ => None,
            },
            None => None,
        };
        if let Some(id) = id.filter(|s| !s.is_empty()) {
            out.push(EntityId::new(id));
        }
    }
    Ok(out)
}

/// Decode one raw entity object. `Skip` for anything that is not an item.
pub fn parse_wikidata_entity(raw: &str, opts: &WikidataOptions) -> Result<WikidataEntity, FormatError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| FormatError::json(1, &e))?;
    let obj = value.as_object().ok_or_else(|| invalid("entity is not an object"))?;
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.as_str(),
        Some(_) => return Err(invalid("`id` is not a non-empty string")),
        None => return Err(FormatError::MissingId { line: 1 }),
    };
    let is_item = match obj.get("type") {
        Some(Value::String(t)) => t == "item",
        Some(_) => return Err(invalid("`type` is not a string")),
        None => id.starts_with('Q'),
    };
    if !is_item {
        return Ok(WikidataEntity::Skip);
    }

    let mut labels = BTreeMap::new();
    if let Some(map) = object_field(obj, "labels")? {
        for (lang, label) in map {
            let text = label
                .get("value")
                .and_then(Value::as_str)
                .ok_or_else(|| invalid(format!("label `{lang}` has no string value")))?;
            labels.insert(lang.clone(), text.to_owned());
        }
    }

    let claims = object_field(obj, "claims")?;
    let instance_of = claim_targets(claims, INSTANCE_OF)?;
    let subclass_of = claim_targets(claims, SUBCLASS_OF)?;

    let mut sitelinks = 0u64;
    let mut wiki_titles = BTreeMap::new();
    if let Some(map) = object_field(obj, "sitelinks")? {
        sitelinks = map.len() as u64;
        for (site, link) in map {
            let Some(lang) = site.strip_suffix("wiki") else {
                continue;
            };
            if lang.is_empty() || NON_LANGUAGE_WIKIS.contains(&site.as_str()) {
                continue;
            }
            if let Some(title) = link.get("title").and_then(Value::as_str) {
                wiki_titles.insert(lang.replace('_', "-"), title.to_owned());
            }
        }
    }

    let is_disambiguation = instance_of.contains(&opts.disambiguation_class);
    Ok(WikidataEntity::Item(EntityRecord {
        id: EntityId::from(id),
        labels,
        sitelinks,
        instance_of,
        subclass_of,
        is_disambiguation,
        wiki_titles,
    }))
}

/// Stream items from a decompressed dump: a JSON array with one entity per
/// line and trailing commas.
pub fn read_wikidata_dump<R: BufRead>(
    reader: R,
    opts: WikidataOptions,
) -> impl Iterator<Item = Result<EntityRecord, FormatError>> {
    NumberedLines::new(reader).filter_map(move |item| {
        let (n, line) = match item {
            Ok(x) => x,
            Err(e) => return Some(Err(e)),
        };
        let body = line.trim();
        let body = body.strip_suffix(',').unwrap_or(body);
        if body.is_empty() || body == "[" || body == "]" {
            return None;
        }
        match parse_wikidata_entity(body, &opts) {
            Ok(WikidataEntity::Item(r)) => Some(Ok(r)),
            Ok(WikidataEntity::Skip) => None,
            Err(e) => Some(Err(e.at_line(n))),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snak(target: &str) -> String {
        format!(
            r#"{{"mainsnak":{{"snaktype":"value","property":"P31","datavalue":{{"value":{{"entity-type":"item","numeric-id":{},"id":"{}"}},"type":"wikibase-entityid"}}}},"type":"statement","rank":"normal"}}"#,
            &target[1..],
            target
        )
    }

    #[test]
    fn item_with_two_instance_claims() {
        let raw = format!(
            r#"{{"type":"item","id":"Q42","labels":{{"en":{{"language":"en","value":"Douglas Adams"}}}},"claims":{{"P31":[{},{}]}},"sitelinks":{{}}}}"#,
            snak("Q5"),
            snak("Q36180")
        );
        let WikidataEntity::Item(r) = parse_wikidata_entity(&raw, &WikidataOptions::default()).unwrap() else {
            panic!("expected item");
        };
        assert_eq!(r.instance_of, vec![EntityId::from("Q5"), EntityId::from("Q36180")]);
        assert_eq!(r.labels["en"], "Douglas Adams");
        assert_eq!(r.sitelinks, 0);
        assert!(!r.is_disambiguation);
    }

    #[test]
    fn property_entry_is_skipped() {
        let raw = r#"{"type":"property","id":"P31","datatype":"wikibase-item","labels":{}}"#;
        assert_eq!(
            parse_wikidata_entity(raw, &WikidataOptions::default()).unwrap(),
            WikidataEntity::Skip
        );
    }

    #[test]
    fn sitelinks_and_disambiguation_flag() {
        let langs = ["en", "de", "fr", "es", "it", "ja", "zh", "nl", "pl", "pt", "ru"];
        let mut links: Vec<String> = langs
            .iter()
            .map(|l| format!(r#""{l}wiki":{{"site":"{l}wiki","title":"Mercury ({l})","badges":[]}}"#))
            .collect();
        links.push(r#""commonswiki":{"site":"commonswiki","title":"Category:Mercury"}"#.into());
        let raw = format!(
            r#"{{"type":"item","id":"Q1","claims":{{"P31":[{}]}},"sitelinks":{{{}}}}}"#,
            snak(DEFAULT_DISAMBIGUATION_CLASS),
            links.join(",")
        );
        let WikidataEntity::Item(r) = parse_wikidata_entity(&raw, &WikidataOptions::default()).unwrap() else {
            panic!("expected item");
        };
        assert_eq!(r.sitelinks, 12);
        assert!(r.is_disambiguation);
        assert_eq!(r.wiki_titles.len(), 11);
        assert_eq!(r.wiki_titles["ja"], "Mercury (ja)");
    }

    #[test]
    fn novalue_snaks_and_empty_arrays_are_tolerated() {
        let raw = r#"{"type":"item","id":"Q9","labels":[],"claims":{"P279":[{"mainsnak":{"snaktype":"novalue","property":"P279"}}]},"sitelinks":[]}"#;
        let WikidataEntity::Item(r) = parse_wikidata_entity(raw, &WikidataOptions::default()).unwrap() else {
            panic!("expected item");
        };
        assert!(r.subclass_of.is_empty());
    }

    #[test]
    fn structural_errors() {
        let o = WikidataOptions::default();
        assert!(parse_wikidata_entity("[1,2]", &o).is_err());
        assert!(parse_wikidata_entity(r#"{"id":5}"#, &o).is_err());
        assert!(parse_wikidata_entity(r#"{"id":"Q1","labels":"x"}"#, &o).is_err());
        assert!(parse_wikidata_entity(r#"{"id":"Q1","claims":{"P31":{}}}"#, &o).is_err());
    }

    #[test]
    fn dump_framing_is_stripped() {
        let dump = "[\n{\"type\":\"item\",\"id\":\"Q1\"},\n{\"type\":\"property\",\"id\":\"P1\"},\n{\"type\":\"item\",\"id\":\"Q2\"}\n]\n";
        let ids: Vec<_> = read_wikidata_dump(dump.as_bytes(), WikidataOptions::default())
            .map(|r| r.unwrap().id)
            .collect();
        assert_eq!(ids, vec![EntityId::from("Q1"), EntityId::from("Q2")]);
    }
}
