//! The normalized multi-table store.
//!
//! Text and single-value attributes are columns of the main table, one row per
//! document. Each list or span-list attribute owns a child table whose rows are
//! grouped by document in array order. Categorical and temporal values are
//! dictionary-encoded with a sorted dictionary, so code order is value order.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};
use core::ops::Range;

use hashbrown::{Equivalent, HashMap};

use crate::embeddings::EmbeddingMatrix;
use crate::schema::{
    validate_schema, AttributeDescriptor, AttributeKind, DataType, SchemaError, ValidatedSchema,
};
use crate::temporal::{self, Precision};
use crate::text::{char_len, tokenize_words};
use crate::value::Scalar;

pub const NULL_CODE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("`{0}` is not a text attribute")]
    NotTextAttribute(String),
    #[error("attribute `{0}` already exists")]
    NameCollision(String),
    #[error("unknown document {0}")]
    UnknownDocument(u32),
    #[error("attribute `{attribute}`: {reason}")]
    Inconsistent { attribute: String, reason: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

fn inconsistent(attribute: &str, reason: impl ToString) -> StoreError {
    StoreError::Inconsistent {
        attribute: attribute.into(),
        reason: reason.to_string(),
    }
}

/// Sorted, duplicate-free value dictionary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dictionary {
    values: Vec<Scalar>,
}

impl Dictionary {
    pub fn from_sorted(values: Vec<Scalar>) -> Option<Self> {
        values
            .windows(2)
            .all(|w| w[0] < w[1])
            .then_some(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, code: u32) -> Option<&Scalar> {
        self.values.get(code as usize)
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }
}

/// Borrowed string key hashing exactly like `Scalar::Str`.
struct StrKey<'a>(&'a str);

impl Hash for StrKey<'_> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        2u8.hash(state);
        self.0.hash(state);
    }
}

impl Equivalent<Scalar> for StrKey<'_> {
    fn equivalent(&self, key: &Scalar) -> bool {
        matches!(key, Scalar::Str(s) if s == self.0)
    }
}

/// Interns values while a column is built, then sorts the dictionary.
#[derive(Default)]
pub(crate) struct DictBuilder {
    lookup: HashMap<Scalar, u32>,
    values: Vec<Scalar>,
    codes: Vec<u32>,
}

impl DictBuilder {
    /// Returns true when the value was new.
    pub(crate) fn push(&mut self, value: Option<Scalar>) -> bool {
        let Some(value) = value else {
            self.codes.push(NULL_CODE);
            return false;
        };
        if let Some(&code) = self.lookup.get(&value) {
            self.codes.push(code);
            return false;
        }
        let code = self.values.len() as u32;
        self.lookup.insert(value.clone(), code);
        self.values.push(value);
        self.codes.push(code);
        true
    }

    pub(crate) fn push_str(&mut self, value: &str) {
        let code = match self.lookup.get(&StrKey(value)) {
            Some(&c) => c,
            None => {
                let c = self.values.len() as u32;
                let key = Scalar::Str(value.into());
                self.lookup.insert(key.clone(), c);
                self.values.push(key);
                c
            }
        };
        self.codes.push(code);
    }

    pub(crate) fn finish(self) -> (Dictionary, Vec<u32>) {
        let mut order: Vec<u32> = (0..self.values.len() as u32).collect();
        order.sort_by(|&a, &b| self.values[a as usize].cmp(&self.values[b as usize]));
        let mut remap = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut values = self.values;
        let mut slots: Vec<Option<Scalar>> = values.drain(..).map(Some).collect();
        let sorted = order
            .iter()
            .map(|&old| slots[old as usize].take().unwrap_or(Scalar::Bool(false)))
            .collect();
        let codes = self
            .codes
            .into_iter()
            .map(|c| if c == NULL_CODE { NULL_CODE } else { remap[c as usize] })
            .collect();
        (Dictionary { values: sorted }, codes)
    }
}

/// Typed storage for the values of one attribute.
#[derive(Clone, Debug)]
pub enum ValueColumn {
    Categorical {
        dict: Dictionary,
        codes: Vec<u32>,
    },
    /// NaN marks a null cell.
    Quantitative { values: Vec<f64> },
    Temporal {
        dict: Dictionary,
        /// Epoch seconds per dictionary entry.
        epochs: Vec<i64>,
        /// Finest precision present among the values.
        precision: Precision,
        codes: Vec<u32>,
    },
}

// Null cells compare equal to each other, so stores compare by content.
impl PartialEq for ValueColumn {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ValueColumn::Quantitative { values: a }, ValueColumn::Quantitative { values: b }) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
            }
            (
                ValueColumn::Categorical { dict: da, codes: ca },
                ValueColumn::Categorical { dict: db, codes: cb },
            ) => da == db && ca == cb,
            (
                ValueColumn::Temporal { dict: da, epochs: ea, precision: pa, codes: ca },
                ValueColumn::Temporal { dict: db, epochs: eb, precision: pb, codes: cb },
            ) => da == db && ea == eb && pa == pb && ca == cb,
            _ => false,
        }
    }
}

impl ValueColumn {
    pub fn categorical(dict: Dictionary, codes: Vec<u32>) -> Self {
        ValueColumn::Categorical { dict, codes }
    }

    /// Builds a temporal column, parsing each dictionary entry once.
    pub fn temporal(dict: Dictionary, codes: Vec<u32>) -> Result<Self, Scalar> {
        let mut epochs = Vec::with_capacity(dict.len());
        let mut precision = Precision::Year;
        for v in dict.values() {
            let ts = temporal::parse_scalar(v).ok_or_else(|| v.clone())?;
            epochs.push(ts.epoch);
            precision = precision.min(ts.precision);
        }
        Ok(ValueColumn::Temporal {
            dict,
            epochs,
            precision,
            codes,
        })
    }

    pub fn data_type(&self) -> DataType {
        match self {
            ValueColumn::Categorical { .. } => DataType::Categorical,
            ValueColumn::Quantitative { .. } => DataType::Quantitative,
            ValueColumn::Temporal { .. } => DataType::Temporal,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ValueColumn::Categorical { codes, .. } | ValueColumn::Temporal { codes, .. } => {
                codes.len()
            }
            ValueColumn::Quantitative { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_null(&self, row: usize) -> bool {
        match self {
            ValueColumn::Categorical { codes, .. } | ValueColumn::Temporal { codes, .. } => {
                codes[row] == NULL_CODE
            }
            ValueColumn::Quantitative { values } => values[row].is_nan(),
        }
    }

    /// The stored value, as it was ingested.
    pub fn value(&self, row: usize) -> Option<Scalar> {
        match self {
            ValueColumn::Categorical { dict, codes } | ValueColumn::Temporal { dict, codes, .. } => {
                dict.get(codes[row]).cloned()
            }
            ValueColumn::Quantitative { values } => {
                let v = values[row];
                (!v.is_nan()).then_some(Scalar::Number(v))
            }
        }
    }

    pub fn null_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_null(r)).count()
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        match self {
            ValueColumn::Categorical { dict, .. } | ValueColumn::Temporal { dict, .. } => Some(dict),
            ValueColumn::Quantitative { .. } => None,
        }
    }

    pub fn codes(&self) -> Option<&[u32]> {
        match self {
            ValueColumn::Categorical { codes, .. } | ValueColumn::Temporal { codes, .. } => {
                Some(codes)
            }
            ValueColumn::Quantitative { .. } => None,
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            ValueColumn::Categorical { dict, codes } | ValueColumn::Temporal { dict, codes, .. } => {
                if codes
                    .iter()
                    .any(|&c| c != NULL_CODE && c as usize >= dict.len())
                {
                    return Err("value code outside dictionary".into());
                }
            }
            ValueColumn::Quantitative { values } => {
                if values.iter().any(|v| v.is_infinite()) {
                    return Err("non-finite quantitative value".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanColumns {
    pub starts: Vec<u32>,
    pub ends: Vec<u32>,
}

/// Rows of one list-like attribute, grouped by document in array order.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildTable {
    doc_offsets: Vec<u32>,
    doc_ids: Vec<u32>,
    values: ValueColumn,
    spans: Option<SpanColumns>,
}

impl ChildTable {
    /// Assembles a child table from row columns, checking grouping and array order.
    pub fn from_rows(
        n_docs: usize,
        doc_ids: Vec<u32>,
        array_index: &[u32],
        values: ValueColumn,
        spans: Option<SpanColumns>,
    ) -> Result<Self, String> {
        let rows = doc_ids.len();
        if array_index.len() != rows || values.len() != rows {
            return Err("column lengths differ".into());
        }
        if let Some(s) = &spans {
            if s.starts.len() != rows || s.ends.len() != rows {
                return Err("span column lengths differ".into());
            }
        }
        let mut doc_offsets = vec![0u32; n_docs + 1];
        for (row, (&doc, &idx)) in doc_ids.iter().zip(array_index).enumerate() {
            if doc as usize >= n_docs {
                return Err(format!("row {row} refers to missing document {doc}"));
            }
            if row > 0 && doc < doc_ids[row - 1] {
                return Err(format!("row {row} is out of document order"));
            }
            let expected = if row > 0 && doc_ids[row - 1] == doc {
                array_index[row - 1] + 1
            } else {
                0
            };
            if idx != expected {
                return Err(format!("row {row} has array index {idx}, expected {expected}"));
            }
            doc_offsets[doc as usize + 1] += 1;
        }
        for i in 0..n_docs {
            doc_offsets[i + 1] += doc_offsets[i];
        }
        values.check()?;
        Ok(Self {
            doc_offsets,
            doc_ids,
            values,
            spans,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[u32] {
        &self.doc_ids
    }

    pub fn values(&self) -> &ValueColumn {
        &self.values
    }

    pub fn spans(&self) -> Option<&SpanColumns> {
        self.spans.as_ref()
    }

    pub fn rows_of(&self, doc: u32) -> Range<usize> {
        self.doc_offsets[doc as usize] as usize..self.doc_offsets[doc as usize + 1] as usize
    }

    pub fn array_index(&self, row: usize) -> u32 {
        (row - self.doc_offsets[self.doc_ids[row] as usize] as usize) as u32
    }

    pub fn span(&self, row: usize) -> Option<(u32, u32)> {
        self.spans.as_ref().map(|s| (s.starts[row], s.ends[row]))
    }

    pub fn row(&self, row: usize) -> ChildRow {
        ChildRow {
            doc_id: self.doc_ids[row],
            value: self.values.value(row),
            array_index: self.array_index(row),
            span: self.span(row),
        }
    }
}

/// One child-table row as a plain record.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildRow {
    pub doc_id: u32,
    pub value: Option<Scalar>,
    pub array_index: u32,
    pub span: Option<(u32, u32)>,
}

/// Storage for one attribute, aligned with the schema's attribute order.
#[derive(Clone, Debug, PartialEq)]
pub enum AttributeData {
    Text(Vec<String>),
    Single(ValueColumn),
    Child(ChildTable),
    /// Held in the store's embedding matrix.
    Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedStore {
    schema: ValidatedSchema,
    n_docs: usize,
    columns: Vec<AttributeData>,
    embeddings: Option<EmbeddingMatrix>,
}

impl NormalizedStore {
    /// Assembles a store, checking that every column matches its descriptor.
    ///
    /// A missing projection is filled in with PCA when the data allows it.
    pub fn from_parts(
        schema: ValidatedSchema,
        n_docs: usize,
        columns: Vec<AttributeData>,
        embeddings: Option<EmbeddingMatrix>,
    ) -> Result<Self, StoreError> {
        if columns.len() != schema.attributes().len() {
            return Err(inconsistent(
                schema.dataset_name(),
                "column count differs from attribute count",
            ));
        }
        let mut text_lengths: Vec<Option<Vec<usize>>> = vec![None; columns.len()];
        for (i, (attr, data)) in schema.attributes().iter().zip(&columns).enumerate() {
            let ok = match (attr.kind, data) {
                (AttributeKind::Text, AttributeData::Text(texts)) => {
                    if texts.len() != n_docs {
                        return Err(inconsistent(&attr.name, "row count differs from document count"));
                    }
                    text_lengths[i] = Some(texts.iter().map(|t| char_len(t)).collect());
                    true
                }
                (AttributeKind::SingleValue, AttributeData::Single(col)) => {
                    if col.len() != n_docs {
                        return Err(inconsistent(&attr.name, "row count differs from document count"));
                    }
                    col.check().map_err(|e| inconsistent(&attr.name, e))?;
                    Some(col.data_type()) == attr.data_type
                }
                (AttributeKind::List, AttributeData::Child(t)) => {
                    t.spans.is_none()
                        && Some(t.values.data_type()) == attr.data_type
                        && t.doc_offsets.len() == n_docs + 1
                }
                (AttributeKind::SpanList, AttributeData::Child(t)) => {
                    t.spans.is_some()
                        && Some(t.values.data_type()) == attr.data_type
                        && t.doc_offsets.len() == n_docs + 1
                }
                (AttributeKind::Embedding, AttributeData::Embedding) => true,
                _ => false,
            };
            if !ok {
                return Err(inconsistent(&attr.name, "stored column does not match its descriptor"));
            }
        }
        for (attr, data) in schema.attributes().iter().zip(&columns) {
            let (AttributeData::Child(table), Some(source)) = (data, attr.span_source.as_deref())
            else {
                continue;
            };
            let lengths = schema
                .position(source)
                .and_then(|p| text_lengths[p].as_ref())
                .ok_or_else(|| inconsistent(&attr.name, "span source is not stored"))?;
            let spans = table.spans.as_ref().expect("span list has spans");
            for row in 0..table.len() {
                let (s, e) = (spans.starts[row], spans.ends[row]);
                if s >= e || e as usize > lengths[table.doc_ids[row] as usize] {
                    return Err(inconsistent(
                        &attr.name,
                        format!("row {row} span [{s}, {e}) is outside its text"),
                    ));
                }
            }
        }
        let mut embeddings = embeddings;
        match (schema.embedding(), embeddings.as_mut()) {
            (None, None) => {}
            (Some(desc), Some(m)) => {
                if m.rows() != n_docs || Some(m.dimension()) != desc.dimension {
                    return Err(inconsistent(&desc.name, "embedding shape does not match"));
                }
                m.ensure_projection();
            }
            (Some(desc), None) => return Err(inconsistent(&desc.name, "embedding matrix missing")),
            (None, Some(_)) => {
                return Err(inconsistent(schema.dataset_name(), "undeclared embedding matrix"))
            }
        }
        Ok(Self {
            schema,
            n_docs,
            columns,
            embeddings,
        })
    }

    pub fn schema(&self) -> &ValidatedSchema {
        &self.schema
    }

    pub fn name(&self) -> &str {
        self.schema.dataset_name()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn columns(&self) -> &[AttributeData] {
        &self.columns
    }

    pub fn attribute(&self, name: &str) -> Option<(&AttributeDescriptor, &AttributeData)> {
        let i = self.schema.position(name)?;
        Some((&self.schema.attributes()[i], &self.columns[i]))
    }

    pub fn text(&self, name: &str, doc: u32) -> Option<&str> {
        match self.attribute(name)?.1 {
            AttributeData::Text(t) => t.get(doc as usize).map(String::as_str),
            _ => None,
        }
    }

    pub fn child_table(&self, name: &str) -> Option<&ChildTable> {
        match self.attribute(name)?.1 {
            AttributeData::Child(t) => Some(t),
            _ => None,
        }
    }

    pub fn embeddings(&self) -> Option<&EmbeddingMatrix> {
        self.embeddings.as_ref()
    }

    /// Adds a span-list attribute of lowercase word tokens over a text attribute.
    pub fn with_tokenized(&self, text_attribute: &str, new_name: &str) -> Result<Self, StoreError> {
        if self.schema.get(new_name).is_some() {
            return Err(StoreError::NameCollision(new_name.into()));
        }
        let texts = match self.attribute(text_attribute) {
            None => return Err(StoreError::UnknownAttribute(text_attribute.into())),
            Some((_, AttributeData::Text(t))) => t,
            Some(_) => return Err(StoreError::NotTextAttribute(text_attribute.into())),
        };
        let mut schema = self.schema.as_schema().clone();
        schema.attributes.push(AttributeDescriptor::span_list(
            new_name,
            DataType::Categorical,
            text_attribute,
        ));
        let schema = validate_schema(schema)?;

        let mut doc_ids = Vec::new();
        let mut array_index = Vec::new();
        let mut starts = Vec::new();
        let mut ends = Vec::new();
        let mut dict = DictBuilder::default();
        for (doc, text) in texts.iter().enumerate() {
            for (i, token) in tokenize_words(text).into_iter().enumerate() {
                doc_ids.push(doc as u32);
                array_index.push(i as u32);
                starts.push(token.start);
                ends.push(token.end);
                dict.push_str(&token.value);
            }
        }
        let (dict, codes) = dict.finish();
        let table = ChildTable::from_rows(
            self.n_docs,
            doc_ids,
            &array_index,
            ValueColumn::categorical(dict, codes),
            Some(SpanColumns { starts, ends }),
        )
        .map_err(|e| inconsistent(new_name, e))?;
        let mut columns = self.columns.clone();
        columns.push(AttributeData::Child(table));
        Ok(Self {
            schema,
            n_docs: self.n_docs,
            columns,
            embeddings: self.embeddings.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_builder_sorts_and_remaps() {
        let mut b = DictBuilder::default();
        for v in ["b", "a", "c", "a"] {
            b.push(Some(Scalar::from(v)));
        }
        b.push(None);
        let (dict, codes) = b.finish();
        assert_eq!(dict.values(), &[Scalar::from("a"), Scalar::from("b"), Scalar::from("c")]);
        assert_eq!(codes, vec![1, 0, 2, 0, NULL_CODE]);
    }

    #[test]
    fn null_quantitative_cells_compare_equal() {
        let a = ValueColumn::Quantitative { values: vec![1.0, f64::NAN] };
        assert_eq!(a, a.clone());
        assert_ne!(a, ValueColumn::Quantitative { values: vec![1.0, 2.0] });
    }

    #[test]
    fn child_rows_must_be_grouped_in_array_order() {
        let values = || ValueColumn::Quantitative {
            values: vec![1.0, 2.0, 3.0],
        };
        assert!(ChildTable::from_rows(2, vec![0, 0, 1], &[0, 1, 0], values(), None).is_ok());
        assert!(ChildTable::from_rows(2, vec![0, 1, 0], &[0, 0, 1], values(), None).is_err());
        assert!(ChildTable::from_rows(2, vec![0, 0, 1], &[0, 2, 0], values(), None).is_err());
        assert!(ChildTable::from_rows(1, vec![0, 0, 1], &[0, 1, 0], values(), None).is_err());
    }

    #[test]
    fn child_table_indexes_rows_by_document() {
        let t = ChildTable::from_rows(
            3,
            vec![0, 0, 2],
            &[0, 1, 0],
            ValueColumn::Quantitative {
                values: vec![1.0, 2.0, 3.0],
            },
            None,
        )
        .unwrap();
        assert_eq!(t.rows_of(0), 0..2);
        assert_eq!(t.rows_of(1), 2..2);
        assert_eq!(t.rows_of(2), 2..3);
        assert_eq!(t.array_index(1), 1);
        assert_eq!(t.row(2).value, Some(Scalar::from(3.0)));
    }
}
