//! Sorted document pages and projection points.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::plan::lookup;
use super::predicate::SelectionState;
use super::{Engine, QueryError};
use crate::highlight::{compute_highlights, HighlightRange};
use crate::store::{AttributeData, ValueColumn, NULL_CODE};
use crate::value::Scalar;

pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const PREVIEW_MAX_LINES: usize = 5;
pub const PREVIEW_MAX_CHARS: usize = 500;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortDirection {
    #[default]
    Asc,
    Desc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortSpec {
    /// A single-value attribute or a derived column handle.
    pub attribute: String,
    #[serde(default)]
    pub direction: SortDirection,
}

impl SortSpec {
    pub fn asc(attribute: &str) -> Self {
        Self {
            attribute: attribute.into(),
            direction: SortDirection::Asc,
        }
    }

    pub fn desc(attribute: &str) -> Self {
        Self {
            attribute: attribute.into(),
            direction: SortDirection::Desc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageRequest {
    pub sort: Option<SortSpec>,
    pub offset: usize,
    pub limit: usize,
}

impl Default for PageRequest {
    fn default() -> Self {
        Self {
            sort: None,
            offset: 0,
            limit: DEFAULT_PAGE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Preview {
    pub text: String,
    pub truncated: bool,
}

impl Preview {
    /// The first [`PREVIEW_MAX_LINES`] lines or [`PREVIEW_MAX_CHARS`] characters, whichever is shorter.
    pub fn of(text: &str) -> Self {
        let mut end = text.len();
        if let Some((i, _)) = text.match_indices('\n').nth(PREVIEW_MAX_LINES - 1) {
            end = i;
        }
        if let Some((i, _)) = text.char_indices().nth(PREVIEW_MAX_CHARS) {
            end = end.min(i);
        }
        Self {
            text: text[..end].into(),
            truncated: end < text.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DocumentRow {
    pub doc_id: u32,
    pub previews: BTreeMap<String, Preview>,
    /// Single-value attributes; `None` for a null cell.
    pub values: BTreeMap<String, Option<Scalar>>,
    /// List and span-list values in array order.
    pub lists: BTreeMap<String, Vec<Scalar>>,
    pub derived: BTreeMap<String, f64>,
    pub highlights: Vec<HighlightRange>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DocumentPage {
    pub total_matching: usize,
    pub offset: usize,
    pub rows: Vec<DocumentRow>,
}

impl DocumentPage {
    pub fn doc_ids(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.doc_id).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionPoint {
    pub doc_id: u32,
    pub x: f64,
    pub y: f64,
    pub selected: bool,
    pub color_value: Option<Scalar>,
}

/// Per-document sort key; `None` sorts last in either direction.
enum SortKeys<'s> {
    Codes(&'s [u32]),
    Epochs(&'s [u32], &'s [i64]),
    Numbers(&'s [f64]),
}

impl SortKeys<'_> {
    fn number(&self, doc: u32) -> Option<f64> {
        let doc = doc as usize;
        match self {
            SortKeys::Codes(codes) => (codes[doc] != NULL_CODE).then(|| codes[doc] as f64),
            SortKeys::Epochs(codes, epochs) => {
                (codes[doc] != NULL_CODE).then(|| epochs[codes[doc] as usize] as f64)
            }
            SortKeys::Numbers(values) => (!values[doc].is_nan()).then_some(values[doc]),
        }
    }
}

impl<'a> Engine<'a> {
    fn sort_keys(&self, attribute: &str) -> Result<SortKeys<'a>, QueryError> {
        if let Some(d) = self.derived.get(attribute) {
            return Ok(SortKeys::Numbers(&d.values));
        }
        let (_, _, data) = lookup(self.store, attribute)?;
        match data {
            AttributeData::Single(ValueColumn::Categorical { codes, .. }) => {
                Ok(SortKeys::Codes(codes))
            }
            AttributeData::Single(ValueColumn::Temporal { codes, epochs, .. }) => {
                Ok(SortKeys::Epochs(codes, epochs))
            }
            AttributeData::Single(ValueColumn::Quantitative { values }) => {
                Ok(SortKeys::Numbers(values))
            }
            _ => Err(QueryError::UnsortableAttribute(attribute.into())),
        }
    }

    /// Matching documents, sorted (nulls last, ties by doc id), sliced to one page.
    pub fn document_page(
        &self,
        selection: &SelectionState,
        request: &PageRequest,
    ) -> Result<DocumentPage, QueryError> {
        let keys = request
            .sort
            .as_ref()
            .map(|s| self.sort_keys(&s.attribute).map(|k| (k, s.direction)))
            .transpose()?;
        let docs = self.select(selection)?;
        let mut ids = docs.to_vec();
        if let Some((keys, direction)) = keys {
            let mut keyed: Vec<(Option<f64>, u32)> =
                ids.iter().map(|&d| (keys.number(d), d)).collect();
            keyed.sort_unstable_by(|a, b| {
                let by_value = match (a.0, b.0) {
                    (Some(x), Some(y)) => match direction {
                        SortDirection::Asc => x.total_cmp(&y),
                        SortDirection::Desc => y.total_cmp(&x),
                    },
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                };
                by_value.then(a.1.cmp(&b.1))
            });
            ids = keyed.into_iter().map(|(_, d)| d).collect();
        }
        let rows = ids
            .iter()
            .skip(request.offset)
            .take(request.limit)
            .map(|&doc| self.document_row(doc, selection))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DocumentPage {
            total_matching: ids.len(),
            offset: request.offset,
            rows,
        })
    }

    pub fn document_row(
        &self,
        doc_id: u32,
        selection: &SelectionState,
    ) -> Result<DocumentRow, QueryError> {
        if doc_id as usize >= self.store.n_docs() {
            return Err(QueryError::UnknownDocument(doc_id));
        }
        let doc = doc_id as usize;
        let mut row = DocumentRow {
            doc_id,
            previews: BTreeMap::new(),
            values: BTreeMap::new(),
            lists: BTreeMap::new(),
            derived: BTreeMap::new(),
            highlights: compute_highlights(self.store, doc_id, selection)?,
        };
        let attributes = self.store.schema().attributes();
        for (desc, data) in attributes.iter().zip(self.store.columns()) {
            let name = desc.name.clone();
            match data {
                AttributeData::Text(texts) => {
                    row.previews.insert(name, Preview::of(&texts[doc]));
                }
                AttributeData::Single(col) => {
                    row.values.insert(name, col.value(doc));
                }
                AttributeData::Child(table) => {
                    let values = table
                        .rows_of(doc_id)
                        .filter_map(|r| table.values().value(r))
                        .collect();
                    row.lists.insert(name, values);
                }
                AttributeData::Embedding => {}
            }
        }
        for d in self.derived.iter() {
            row.derived.insert(d.handle.clone(), d.values[doc]);
        }
        Ok(row)
    }

    /// Every document's 2-D position, flagged by whether it matches the full selection.
    pub fn projection_points(
        &self,
        selection: &SelectionState,
        color_attribute: Option<&str>,
    ) -> Result<Vec<ProjectionPoint>, QueryError> {
        let matrix = self.store.embeddings().ok_or(QueryError::NoEmbedding)?;
        let projection = matrix.projection().ok_or(QueryError::NoProjection)?;
        let color = match color_attribute {
            None => None,
            Some(name) => match lookup(self.store, name)?.2 {
                AttributeData::Single(col) => Some(col),
                _ => return Err(QueryError::InvalidColorAttribute(name.into())),
            },
        };
        let docs = self.select(selection)?;
        Ok(projection
            .iter()
            .enumerate()
            .map(|(doc, &[x, y])| ProjectionPoint {
                doc_id: doc as u32,
                x,
                y,
                selected: docs.contains(doc as u32),
                color_value: color.and_then(|c| c.value(doc)),
            })
            .collect())
    }
}
