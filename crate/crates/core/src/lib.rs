//! Taxonomy-driven outlier-detection datasets.
//!
//! The crate has two halves. The generation half treats a knowledge base as a
//! graph of `instance of` / `subclass of` edges, forms clusters from the
//! instances of a class and draws tiered outliers from sibling classes, cousin
//! classes and classes far away in the subclass graph ([`graph`],
//! [`generator`], [`refine`]). The evaluation half scores word embeddings on
//! such datasets with compactness-based outlier ranking ([`evaluate`]).
//! Everything that touches bytes on disk lives in [`formats`].

pub mod evaluate;
pub mod formats;
pub mod generator;
pub mod graph;
pub mod refine;

pub use evaluate::{EvalReport, LookupPolicy};
pub use formats::{DatasetRecord, Embedding, EntityRecord, Tier};
pub use generator::{GeneratorConfig, RawGroup};
pub use graph::{EntityId, KnowledgeGraph, NodeIx};
pub use refine::{AnchorIndex, LanguageProfile};
