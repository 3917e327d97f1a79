//! Cross-filtered queries over a [`NormalizedStore`].

use alloc::string::String;

use crate::embeddings::DerivedSet;
use crate::store::NormalizedStore;

mod page;
mod plan;
mod predicate;
mod summary;

pub use page::{
    DocumentPage, DocumentRow, PageRequest, Preview, ProjectionPoint, SortDirection, SortSpec,
    DEFAULT_PAGE_LIMIT, PREVIEW_MAX_CHARS, PREVIEW_MAX_LINES,
};
pub use plan::{CrossFilter, DocSet, DocumentFilterPlan, Existence, SemiJoinClause};
pub use predicate::{search_predicate, DerivedPredicate, Predicate, SelectionState, Test};
pub use summary::{BarRow, Summary, SummaryOptions, SummaryResult};

pub(crate) use plan::{compile_value_matcher, lookup};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown derived column `{0}`")]
    UnknownDerivedColumn(String),
    #[error("attribute `{attribute}` is not {expected}")]
    WrongDataType {
        attribute: String,
        expected: &'static str,
    },
    #[error("attribute `{0}` has no non-null values")]
    AllNull(String),
    #[error("attribute `{0}` cannot be used as a sort key")]
    UnsortableAttribute(String),
    #[error("invalid predicate on `{attribute}`: {reason}")]
    InvalidPredicate { attribute: String, reason: String },
    #[error("more than one predicate on `{0}`")]
    DuplicatePredicate(String),
    #[error("search query is empty")]
    EmptyQuery,
    #[error("no document with id {0}")]
    UnknownDocument(u32),
    #[error("dataset has no embedding attribute")]
    NoEmbedding,
    #[error("dataset has no 2-D projection")]
    NoProjection,
    #[error("attribute `{0}` cannot color points; use a single-value attribute")]
    InvalidColorAttribute(String),
}

static NO_DERIVED: DerivedSet = DerivedSet::new();

/// Read-only query context: a store plus the derived columns in scope.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub(crate) store: &'a NormalizedStore,
    pub(crate) derived: &'a DerivedSet,
}

impl<'a> Engine<'a> {
    pub fn new(store: &'a NormalizedStore) -> Self {
        Self {
            store,
            derived: &NO_DERIVED,
        }
    }

    pub fn with_derived(store: &'a NormalizedStore, derived: &'a DerivedSet) -> Self {
        Self { store, derived }
    }

    pub fn store(&self) -> &'a NormalizedStore {
        self.store
    }

    pub fn derived(&self) -> &'a DerivedSet {
        self.derived
    }
}
