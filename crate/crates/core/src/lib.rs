//! Schema, normalized storage and cross-filter queries for exploring text corpora.
//!
//! Records are validated against a [`schema::DatasetSchema`], normalized into a
//! [`store::NormalizedStore`] (one main table plus a child table per list
//! attribute), and queried through [`query::Engine`].

#![no_std]

extern crate alloc;

pub mod embeddings;
pub mod highlight;
pub mod ingest;
pub mod query;
pub mod schema;
pub mod store;
pub mod temporal;
pub mod text;
pub mod value;

pub use embeddings::{DerivedColumn, DerivedSet, Embedder, EmbeddingError, HashedEmbedder};
pub use highlight::{compute_highlights, merge_ranges, HighlightRange};
pub use ingest::{normalize_dataset, reassemble_document, IngestError, IngestErrorKind};
pub use query::{Engine, Predicate, QueryError, SelectionState};
pub use schema::{
    validate_schema, AttributeDescriptor, AttributeKind, DataType, DatasetSchema, SchemaError,
    ValidatedSchema,
};
pub use store::{NormalizedStore, StoreError};
pub use value::{RawRecord, RawValue, Scalar};
