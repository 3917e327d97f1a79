//! Character ranges to highlight in a document for the active selection.

use alloc::string::String;
use alloc::vec::Vec;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::query::{lookup, Predicate, QueryError, SelectionState, Test};
use crate::schema::AttributeKind;
use crate::store::{AttributeData, NormalizedStore};
use crate::text::{self, SearchText};

/// `[start, end)` in characters of the highlighted text attribute.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HighlightRange {
    pub start: u32,
    pub end: u32,
    /// The span-list or text attribute whose predicate produced the range.
    pub attribute: String,
}

impl HighlightRange {
    pub fn new(start: u32, end: u32, attribute: &str) -> Self {
        Self {
            start,
            end,
            attribute: attribute.into(),
        }
    }
}

impl Serialize for HighlightRange {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("HighlightRange", 2)?;
        st.serialize_field("attribute", &self.attribute)?;
        st.serialize_field("range", &[self.start, self.end])?;
        st.end()
    }
}

/// Stored spans of child rows matching each span-list predicate, plus
/// case-insensitive scan hits for substring predicates on text attributes.
/// Sorted by start, then end, then attribute.
pub fn compute_highlights(
    store: &NormalizedStore,
    doc_id: u32,
    selection: &SelectionState,
) -> Result<Vec<HighlightRange>, QueryError> {
    if doc_id as usize >= store.n_docs() {
        return Err(QueryError::UnknownDocument(doc_id));
    }
    let mut out = Vec::new();
    for predicate in selection.predicates() {
        highlights_for(store, doc_id, predicate, &mut out)?;
    }
    out.sort_unstable();
    Ok(out)
}

fn highlights_for(
    store: &NormalizedStore,
    doc_id: u32,
    predicate: &Predicate,
    out: &mut Vec<HighlightRange>,
) -> Result<(), QueryError> {
    let name = predicate.attribute.as_str();
    let (_, desc, data) = lookup(store, name)?;
    match (desc.kind, data) {
        (AttributeKind::SpanList, AttributeData::Child(table)) => {
            if matches!(predicate.test, Test::Null) {
                return Ok(());
            }
            let matcher =
                crate::query::compile_value_matcher(name, table.values(), &predicate.test)?;
            for row in table.rows_of(doc_id) {
                if matcher.row(table.values(), row) {
                    if let Some((start, end)) = table.span(row) {
                        out.push(HighlightRange::new(start, end, name));
                    }
                }
            }
        }
        (
            AttributeKind::Text,
            AttributeData::Text(texts),
        ) => {
            if let Test::Substring {
                query,
                case_sensitive,
            } = &predicate.test
            {
                let haystack = SearchText::new(&texts[doc_id as usize], *case_sensitive);
                let needle = text::needle(query, *case_sensitive);
                out.extend(
                    haystack
                        .find_all(&needle)
                        .into_iter()
                        .map(|(s, e)| HighlightRange::new(s, e, name)),
                );
            }
        }
        _ => {}
    }
    Ok(())
}

/// Coalesces overlapping or touching ranges of the same attribute.
/// Ranges of different attributes are never merged.
pub fn merge_ranges(ranges: &[HighlightRange]) -> Vec<HighlightRange> {
    let mut sorted: Vec<&HighlightRange> = ranges.iter().collect();
    sorted.sort_unstable_by(|a, b| {
        a.attribute
            .cmp(&b.attribute)
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    let mut out: Vec<HighlightRange> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match out.last_mut() {
            Some(last) if last.attribute == r.attribute && r.start <= last.end => {
                last.end = last.end.max(r.end);
            }
            _ => out.push(r.clone()),
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn r(s: u32, e: u32) -> HighlightRange {
        HighlightRange::new(s, e, "word")
    }

    #[test]
    fn merges_overlap_and_keeps_gaps() {
        assert_eq!(merge_ranges(&[r(3, 6), r(5, 9)]), vec![r(3, 9)]);
        assert_eq!(merge_ranges(&[r(5, 9), r(0, 4)]), vec![r(0, 4), r(5, 9)]);
        assert_eq!(merge_ranges(&[r(0, 4), r(4, 6)]), vec![r(0, 6)]);
        assert!(merge_ranges(&[]).is_empty());
    }

    #[test]
    fn attributes_stay_separate() {
        let other = HighlightRange::new(2, 5, "text");
        let merged = merge_ranges(&[r(0, 4), other.clone()]);
        assert_eq!(merged, vec![r(0, 4), other]);
    }

    #[test]
    fn serializes_as_pair() {
        let json = serde_json::to_string(&r(3, 6)).unwrap();
        assert_eq!(json, r#"{"attribute":"word","range":[3,6]}"#);
    }
}
