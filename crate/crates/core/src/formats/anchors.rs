use std::io::BufRead;

use super::{FormatError, NumberedLines};

/// Count of links with text `anchor` pointing at page `target_title`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorEntry {
    pub anchor: String,
    pub target_title: String,
    pub count: u64,
}

/// Parse `anchor<TAB>target_title<TAB>count`. `line_no` is only used in errors.
pub fn parse_anchor_record(line: &str, line_no: usize) -> Result<AnchorEntry, FormatError> {
    let err = |message: String| FormatError::Anchor { line: line_no, message };
    let fields: Vec<&str> = line.split('\t').collect();
    let [anchor, title, count] = fields[..] else {
        return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
    };
    if anchor.is_empty() {
        return Err(err("empty anchor".into()));
    }
    let count: u64 = count
        .trim()
        .parse()
        .map_err(|e| err(format!("bad count {count:?}: {e}")))?;
    if count == 0 {
        return Err(err("count must be at least 1".into()));
    }
    Ok(AnchorEntry {
        anchor: anchor.to_owned(),
        target_title: title.to_owned(),
        count,
    })
}

/// Stream entries from an `.anchors.tsv` source. Blank lines are skipped.
pub fn read_anchor_records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<AnchorEntry, FormatError>> {
    NumberedLines::new(reader).filter_map(|item| match item {
        Err(e) => Some(Err(e)),
        Ok((_, line)) if line.is_empty() => None,
        Ok((n, line)) => Some(parse_anchor_record(&line, n)),
    })
}
