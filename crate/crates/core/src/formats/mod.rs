//! File parsing and serialization.
//!
//! Every reader here is line-oriented and streaming: memory use is bounded by
//! the longest line, not the file.
//!
//! | file                | contents                                   |
//! |---------------------|--------------------------------------------|
//! | `*.kg.jsonl`        | one [`EntityRecord`] object per line       |
//! | Wikidata JSON dump  | one entity object per line, `[`/`]` framed |
//! | `*.anchors.tsv`     | `anchor<TAB>title<TAB>count`               |
//! | `*.dataset.jsonl`   | one [`DatasetRecord`] object per line      |
//! | embeddings          | `token c1 .. cd`, optional `n d` header    |

mod anchors;
mod dataset;
mod dump;
mod embedding;
mod wikidata;

use std::io::{self, BufRead};

use thiserror::Error;

pub use anchors::{parse_anchor_record, read_anchor_records, AnchorEntry};
pub use dataset::{
    read_dataset, read_dataset_with, validate_record, write_dataset, write_dataset_with, DatasetLimits, DatasetRecord,
    Outlier, Tier,
};
pub use dump::{parse_entity_record, read_entity_records, EntityRecord};
pub use embedding::{load_embedding, Embedding, HeaderMode};
pub use wikidata::{
    parse_wikidata_entity, read_wikidata_dump, WikidataEntity, WikidataOptions, DEFAULT_DISAMBIGUATION_CLASS,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed JSON at byte {offset}: {message}")]
    Json {
        line: usize,
        offset: usize,
        message: String,
    },
    #[error("line {line}: record has no id")]
    MissingId { line: usize },
    #[error("line {line}: invalid entity: {message}")]
    Entity { line: usize, message: String },
    #[error("line {line}: invalid anchor record: {message}")]
    Anchor { line: usize, message: String },
    #[error("dataset record {index}: {rule}")]
    Dataset { index: usize, rule: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid embedding line: {message}")]
    Embedding { line: usize, message: String },
    #[error("embedding has no data lines")]
    EmptyEmbedding,
}

impl FormatError {
    fn json(line: usize, err: &serde_json::Error) -> Self {
        FormatError::Json {
            line,
            offset: err.column().saturating_sub(1),
            message: err.to_string(),
        }
    }

    /// Replace the line number of a single-line error with `line`.
    fn at_line(self, line: usize) -> Self {
        match self {
            FormatError::Json { offset, message, .. } => FormatError::Json { line, offset, message },
            FormatError::MissingId { .. } => FormatError::MissingId { line },
            FormatError::Entity { message, .. } => FormatError::Entity { line, message },
            FormatError::Anchor { message, .. } => FormatError::Anchor { line, message },
            other => other,
        }
    }
}

/// Numbered lines of a reader with the line terminator (`\n` or `\r\n`) removed.
pub(crate) struct NumberedLines<R> {
    reader: R,
    line: usize,
}

impl<R: BufRead> NumberedLines<R> {
    pub(crate) fn new(reader: R) -> Self {
        Self { reader, line: 0 }
    }
}

impl<R: BufRead> Iterator for NumberedLines<R> {
    type Item = Result<(usize, String), FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = String::new();
        match self.reader.read_line(&mut buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line += 1;
                if buf.ends_with('\n') {
                    buf.pop();
                    if buf.ends_with('\r') {
                        buf.pop();
                    }
                }
                Some(Ok((self.line, buf)))
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}
