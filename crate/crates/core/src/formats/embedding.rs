use std::collections::HashMap;
use std::io::BufRead;
use std::sync::OnceLock;

use super::{FormatError, NumberedLines};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// A first line of exactly two integers is a `vocab_size dimension` header.
    #[default]
    Auto,
    Present,
    Absent,
}

/// Token to dense vector table. Tokens are case-sensitive and stored as given.
#[derive(Debug)]
pub struct Embedding {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    data: Vec<f32>,
    supports_phrases: bool,
    duplicate_tokens: usize,
    declared_vocab: Option<usize>,
    folded: OnceLock<HashMap<String, u32>>,
}

impl Embedding {
    /// Build from in-memory rows. Duplicate tokens keep the first row.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, FormatError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut builder: Option<Builder> = None;
        for (i, (token, vector)) in rows.into_iter().enumerate() {
            let b = builder.get_or_insert_with(|| Builder::new(vector.len()));
            b.push(token.into(), &vector, i + 1)?;
        }
        builder.ok_or(FormatError::EmptyEmbedding)?.finish(None)
    }

    pub fn with_phrases(mut self, supports_phrases: bool) -> Self {
        self.supports_phrases = supports_phrases;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of distinct tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whether multi-word tokens joined with `_` are present by convention.
    pub fn supports_phrases(&self) -> bool {
        self.supports_phrases
    }

    /// Rows dropped because their token had already been seen.
    pub fn duplicate_tokens(&self) -> usize {
        self.duplicate_tokens
    }

    /// Vocabulary size announced by the header line, if any.
    pub fn declared_vocab(&self) -> Option<usize> {
        self.declared_vocab
    }

    pub fn tokens(&self) -> impl ExactSizeIterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    fn row(&self, r: u32) -> &[f32] {
        let start = r as usize * self.dimension;
        &self.data[start..start + self.dimension]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index.get(token).map(|&r| self.row(r))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Exact match first, then a lowercase match against the lowercased
    /// vocabulary (earliest row wins among case variants).
    pub fn get_folded(&self, token: &str) -> Option<&[f32]> {
        if let Some(v) = self.get(token) {
            return Some(v);
        }
        let folded = self.folded.get_or_init(|| {
            let mut m = HashMap::with_capacity(self.tokens.len());
            for (r, t) in self.tokens.iter().enumerate() {
                m.entry(t.to_lowercase()).or_insert(r as u32);
            }
            m
        });
        folded.get(&token.to_lowercase()).map(|&r| self.row(r))
    }
}

struct Builder {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    data: Vec<f32>,
    duplicates: usize,
}

impl Builder {
    fn new(dimension: usize) -> Self {
        Self {
            dimension,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        }
    }

    fn push(&mut self, token: String, vector: &[f32], line: usize) -> Result<(), FormatError> {
        if vector.len() != self.dimension || self.dimension == 0 {
            return Err(FormatError::Dimension {
                line,
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if self.index.contains_key(&token) {
            self.duplicates += 1;
            return Ok(());
        }
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    fn finish(self, declared_vocab: Option<usize>) -> Result<Embedding, FormatError> {
        if self.tokens.is_empty() {
            return Err(FormatError::EmptyEmbedding);
        }
        Ok(Embedding {
            dimension: self.dimension,
            tokens: self.tokens,
            index: self.index,
            data: self.data,
            supports_phrases: false,
            duplicate_tokens: self.duplicates,
            declared_vocab,
            folded: OnceLock::new(),
        })
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let vocab = fields.next()?.parse().ok()?;
    let dim = fields.next()?.parse().ok()?;
    fields.next().is_none().then_some((vocab, dim))
}

/// Load a whitespace-separated text embedding (word2vec text / GloVe style).
pub fn load_embedding<R: BufRead>(source: R, mode: HeaderMode) -> Result<Embedding, FormatError> {
    let mut builder: Option<Builder> = None;
    let mut declared_vocab = None;
    let mut first = true;
    let mut components = Vec::new();

    for item in NumberedLines::new(source) {
        let (n, line) = item?;
        if first {
            first = false;
            let header = parse_header(&line);
            match (mode, header) {
                (HeaderMode::Present, None) => {
                    return Err(FormatError::Embedding {
                        line: n,
                        message: "expected `vocab_size dimension` header".into(),
                    })
                }
                (HeaderMode::Present | HeaderMode::Auto, Some((vocab, dim))) => {
                    declared_vocab = Some(vocab);
                    builder = Some(Builder::new(dim));
                    continue;
                }
                _ => {}
            }
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-blank line has a field");
        components.clear();
        for f in fields {
            let x: f32 = f.parse().map_err(|_| FormatError::Embedding {
                line: n,
                message: format!("component {f:?} is not a number"),
            })?;
            components.push(x);
        }
        let b = builder.get_or_insert_with(|| Builder::new(components.len()));
        b.push(token.to_owned(), &components, n)?;
    }
    builder.ok_or(FormatError::EmptyEmbedding)?.finish(declared_vocab)
}
