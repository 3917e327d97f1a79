//! Raw records to normalized tables, and back.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::embeddings::{EmbeddingError, EmbeddingMatrix};
use crate::schema::{
    infer_data_type, validate_schema, AttributeDescriptor, AttributeKind, DataType,
    ValidatedSchema,
};
use crate::store::{
    AttributeData, ChildTable, DictBuilder, NormalizedStore, SpanColumns, StoreError, ValueColumn,
};
use crate::text::{char_slice, fold, needle, SearchText};
use crate::value::{RawRecord, RawValue, Scalar};

pub use crate::text::{tokenize_words, Token};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum IngestErrorKind {
    #[error("missing required field")]
    MissingRequiredField,
    #[error("attribute is not declared in the schema")]
    UnknownAttribute,
    #[error("expected {0}")]
    InvalidValue(&'static str),
    #[error("span [{start}, {end}) is out of bounds for text of length {len}")]
    SpanOutOfBounds { start: u64, end: u64, len: usize },
    #[error("span text {found:?} does not match value {value:?}")]
    SpanValueMismatch { value: String, found: String },
    #[error("could not locate {0:?} in the source text")]
    UnresolvedSpan(String),
    #[error("embedding has dimension {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{0}")]
    Embedding(EmbeddingError),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{0}")]
    Store(StoreError),
}

/// An ingest failure, located by record index and attribute.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("record {record}, attribute `{attribute}`: {kind}")]
pub struct IngestError {
    pub record: usize,
    pub attribute: String,
    pub kind: IngestErrorKind,
}

fn fail<T>(record: usize, attribute: &str, kind: IngestErrorKind) -> Result<T, IngestError> {
    Err(IngestError {
        record,
        attribute: attribute.into(),
        kind,
    })
}

/// Incremental builder for a typed value column.
enum ColumnBuilder {
    Dict(DataType, DictBuilder),
    Numbers(Vec<f64>),
}

impl ColumnBuilder {
    fn new(data_type: DataType) -> Self {
        match data_type {
            DataType::Quantitative => ColumnBuilder::Numbers(Vec::new()),
            dt => ColumnBuilder::Dict(dt, DictBuilder::default()),
        }
    }

    fn push(&mut self, value: Option<Scalar>) -> Result<(), IngestErrorKind> {
        match self {
            ColumnBuilder::Numbers(values) => {
                let v = match value {
                    None => f64::NAN,
                    Some(s) => s
                        .as_number()
                        .ok_or(IngestErrorKind::InvalidValue("a number"))?,
                };
                values.push(v);
            }
            ColumnBuilder::Dict(dt, dict) => {
                if *dt == DataType::Temporal {
                    if let Some(s) = &value {
                        if crate::temporal::parse_scalar(s).is_none() {
                            return Err(IngestErrorKind::InvalidValue("an ISO-8601 date or year"));
                        }
                    }
                }
                dict.push(value);
            }
        }
        Ok(())
    }

    fn finish(self) -> ValueColumn {
        match self {
            ColumnBuilder::Numbers(values) => ValueColumn::Quantitative { values },
            ColumnBuilder::Dict(DataType::Temporal, dict) => {
                let (dict, codes) = dict.finish();
                ValueColumn::temporal(dict, codes).expect("values were parsed on push")
            }
            ColumnBuilder::Dict(_, dict) => {
                let (dict, codes) = dict.finish();
                ValueColumn::categorical(dict, codes)
            }
        }
    }
}

struct ChildBuilder {
    doc_ids: Vec<u32>,
    array_index: Vec<u32>,
    values: ColumnBuilder,
    spans: Option<SpanColumns>,
}

enum Builder {
    Text(Vec<String>),
    Single(ColumnBuilder),
    Child(ChildBuilder),
    Embedding,
}

/// Per-document character boundaries for constant-time span slicing.
struct CharIndex<'a> {
    text: &'a str,
    bounds: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    fn new(text: &'a str) -> Self {
        let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bounds.push(text.len());
        Self { text, bounds }
    }

    fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    fn slice(&self, start: usize, end: usize) -> &'a str {
        &self.text[self.bounds[start]..self.bounds[end]]
    }
}

fn scalar_of(value: &RawValue) -> Result<Option<Scalar>, IngestErrorKind> {
    match value {
        RawValue::Null => Ok(None),
        RawValue::Array(_) | RawValue::Object(_) => Err(IngestErrorKind::InvalidValue("a scalar")),
        other => Ok(other.as_scalar()),
    }
}

fn span_offset(value: Option<&RawValue>) -> Result<u64, IngestErrorKind> {
    match value {
        Some(RawValue::Number(n)) if *n >= 0.0 && crate::value::is_integral(*n) && *n <= u32::MAX as f64 => {
            Ok(*n as u64)
        }
        _ => Err(IngestErrorKind::InvalidValue("non-negative integer span offsets")),
    }
}

/// A span entry: explicit offsets or a bare value to be located.
fn parse_span_item(item: &RawValue) -> Result<(Scalar, Option<(u64, u64)>), IngestErrorKind> {
    match item {
        RawValue::Object(map) => {
            if map.keys().any(|k| !matches!(k.as_str(), "value" | "start" | "end")) {
                return Err(IngestErrorKind::InvalidValue("span entries with only value, start and end"));
            }
            let value = map
                .get("value")
                .and_then(RawValue::as_scalar)
                .ok_or(IngestErrorKind::InvalidValue("a span value"))?;
            let start = span_offset(map.get("start"))?;
            let end = span_offset(map.get("end"))?;
            Ok((value, Some((start, end))))
        }
        other => other
            .as_scalar()
            .map(|v| (v, None))
            .ok_or(IngestErrorKind::InvalidValue("a span entry")),
    }
}

fn parse_numbers(value: &RawValue) -> Option<Vec<f64>> {
    match value {
        RawValue::Array(items) => items
            .iter()
            .map(|v| match v {
                RawValue::Number(n) => Some(*n),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

fn parse_embedding(
    value: &RawValue,
    has_projection: bool,
) -> Result<(Vec<f64>, Option<[f64; 2]>), IngestErrorKind> {
    let invalid = IngestErrorKind::InvalidValue("an array of numbers or {vector, projection}");
    let (vector, projection) = match value {
        RawValue::Array(_) => (parse_numbers(value).ok_or(invalid)?, None),
        RawValue::Object(map) => {
            if map.keys().any(|k| !matches!(k.as_str(), "vector" | "projection")) {
                return Err(invalid);
            }
            let vector = map.get("vector").and_then(parse_numbers).ok_or(invalid.clone())?;
            let projection = match map.get("projection") {
                None => None,
                Some(p) => match parse_numbers(p).as_deref() {
                    Some(&[x, y]) => Some([x, y]),
                    _ => return Err(IngestErrorKind::InvalidValue("a projection [x, y]")),
                },
            };
            (vector, projection)
        }
        RawValue::Null => return Err(IngestErrorKind::MissingRequiredField),
        _ => return Err(invalid),
    };
    match (has_projection, projection.is_some()) {
        (true, false) => Err(IngestErrorKind::InvalidValue("a projection [x, y]")),
        (false, true) => Err(IngestErrorKind::InvalidValue("no projection (has_projection is false)")),
        _ => Ok((vector, projection)),
    }
}

/// Fills in data types the manifest left out, from all non-null values.
fn resolve_data_types(
    records: &[RawRecord],
    schema: &ValidatedSchema,
) -> Result<ValidatedSchema, IngestError> {
    let mut resolved = schema.as_schema().clone();
    for attr in resolved.attributes.iter_mut() {
        if !attr.kind.carries_data_type() || attr.data_type.is_some() {
            continue;
        }
        let mut sample = Vec::new();
        for (i, record) in records.iter().enumerate() {
            let Some(value) = record.get(&attr.name) else {
                continue;
            };
            let items: &[RawValue] = match (attr.kind, value) {
                (AttributeKind::SingleValue, v) => core::slice::from_ref(v),
                (_, RawValue::Array(items)) => items,
                (_, RawValue::Null) => &[],
                _ => return fail(i, &attr.name, IngestErrorKind::InvalidValue("a list")),
            };
            for item in items {
                let scalar = if attr.kind == AttributeKind::SpanList {
                    Some(parse_span_item(item).map_err(|kind| IngestError {
                        record: i,
                        attribute: attr.name.clone(),
                        kind,
                    })?.0)
                } else {
                    scalar_of(item).map_err(|kind| IngestError {
                        record: i,
                        attribute: attr.name.clone(),
                        kind,
                    })?
                };
                sample.extend(scalar);
            }
        }
        attr.data_type = Some(infer_data_type(&sample).unwrap_or(DataType::Categorical));
    }
    validate_schema(resolved).map_err(|e| IngestError {
        record: 0,
        attribute: String::new(),
        kind: IngestErrorKind::Store(e.into()),
    })
}

/// Splits records into the main table and one child table per list-like attribute.
///
/// Document ids are dense and follow input order. Ingest stops at the first
/// offending record.
pub fn normalize_dataset(
    records: &[RawRecord],
    schema: &ValidatedSchema,
) -> Result<NormalizedStore, IngestError> {
    for (i, record) in records.iter().enumerate() {
        if let Some(unknown) = record.keys().find(|k| schema.get(k).is_none()) {
            return fail(i, unknown, IngestErrorKind::UnknownAttribute);
        }
    }
    let schema = resolve_data_types(records, schema)?;
    let attrs = schema.attributes();

    let mut builders: Vec<Builder> = attrs
        .iter()
        .map(|a| match a.kind {
            AttributeKind::Text => Builder::Text(Vec::with_capacity(records.len())),
            AttributeKind::SingleValue => {
                Builder::Single(ColumnBuilder::new(a.data_type.expect("resolved")))
            }
            AttributeKind::List | AttributeKind::SpanList => Builder::Child(ChildBuilder {
                doc_ids: Vec::new(),
                array_index: Vec::new(),
                values: ColumnBuilder::new(a.data_type.expect("resolved")),
                spans: (a.kind == AttributeKind::SpanList).then(|| SpanColumns {
                    starts: Vec::new(),
                    ends: Vec::new(),
                }),
            }),
            AttributeKind::Embedding => Builder::Embedding,
        })
        .collect();

    let embedding = schema.embedding().cloned();
    let mut vectors = Vec::new();
    let mut projection = Vec::new();
    let mut seen_ids = BTreeSet::new();

    for (doc, record) in records.iter().enumerate() {
        // Text first: span lists need their source.
        for (attr, builder) in attrs.iter().zip(builders.iter_mut()) {
            if let Builder::Text(texts) = builder {
                match record.get(&attr.name) {
                    Some(RawValue::String(s)) => texts.push(s.clone()),
                    None | Some(RawValue::Null) => {
                        return fail(doc, &attr.name, IngestErrorKind::MissingRequiredField)
                    }
                    Some(_) => return fail(doc, &attr.name, IngestErrorKind::InvalidValue("a string")),
                }
            }
        }
        for (pos, attr) in attrs.iter().enumerate() {
            let value = record.get(&attr.name).unwrap_or(&RawValue::Null);
            let at = |kind| IngestError {
                record: doc,
                attribute: attr.name.clone(),
                kind,
            };
            match attr.kind {
                AttributeKind::Text => {}
                AttributeKind::SingleValue => {
                    let scalar = scalar_of(value).map_err(at)?;
                    if schema.id_field() == Some(attr.name.as_str()) {
                        let Some(id) = &scalar else {
                            return fail(doc, &attr.name, IngestErrorKind::MissingRequiredField);
                        };
                        if !seen_ids.insert(id.clone()) {
                            return fail(doc, &attr.name, IngestErrorKind::DuplicateId(id.to_text()));
                        }
                    }
                    let Builder::Single(col) = &mut builders[pos] else { unreachable!() };
                    col.push(scalar).map_err(at)?;
                }
                AttributeKind::List => {
                    let items: &[RawValue] = match value {
                        RawValue::Array(items) => items,
                        RawValue::Null => &[],
                        _ => return Err(at(IngestErrorKind::InvalidValue("a list"))),
                    };
                    let Builder::Child(child) = &mut builders[pos] else { unreachable!() };
                    for (i, item) in items.iter().enumerate() {
                        child.values.push(scalar_of(item).map_err(at)?).map_err(at)?;
                        child.doc_ids.push(doc as u32);
                        child.array_index.push(i as u32);
                    }
                }
                AttributeKind::SpanList => {
                    let items: &[RawValue] = match value {
                        RawValue::Array(items) => items,
                        RawValue::Null => &[],
                        _ => return Err(at(IngestErrorKind::InvalidValue("a list"))),
                    };
                    if items.is_empty() {
                        continue;
                    }
                    let source = attr.span_source.as_deref().expect("validated");
                    let source_pos = schema.position(source).expect("validated");
                    let Builder::Text(texts) = &builders[source_pos] else { unreachable!() };
                    let text = texts[doc].clone();
                    let index = CharIndex::new(&text);
                    let mut search: Option<SearchText> = None;
                    let mut cursor = 0u32;
                    let Builder::Child(child) = &mut builders[pos] else { unreachable!() };
                    for (i, item) in items.iter().enumerate() {
                        let (scalar, offsets) = parse_span_item(item).map_err(at)?;
                        let label = scalar.to_text();
                        let (start, end) = match offsets {
                            Some((start, end)) => {
                                if start >= end || end as usize > index.len() {
                                    return Err(at(IngestErrorKind::SpanOutOfBounds {
                                        start,
                                        end,
                                        len: index.len(),
                                    }));
                                }
                                let found = index.slice(start as usize, end as usize);
                                if !attr.span_labels && fold(found) != fold(&label) {
                                    return Err(at(IngestErrorKind::SpanValueMismatch {
                                        value: label,
                                        found: found.into(),
                                    }));
                                }
                                (start as u32, end as u32)
                            }
                            None => {
                                if attr.span_labels {
                                    return Err(at(IngestErrorKind::UnresolvedSpan(label)));
                                }
                                let s = search.get_or_insert_with(|| SearchText::new(&text, false));
                                s.find_from(&needle(&label, false), cursor)
                                    .ok_or_else(|| at(IngestErrorKind::UnresolvedSpan(label.clone())))?
                            }
                        };
                        cursor = end;
                        child.values.push(Some(scalar)).map_err(at)?;
                        child.doc_ids.push(doc as u32);
                        child.array_index.push(i as u32);
                        let spans = child.spans.as_mut().expect("span list");
                        spans.starts.push(start);
                        spans.ends.push(end);
                    }
                }
                AttributeKind::Embedding => {
                    let (vector, point) =
                        parse_embedding(value, attr.has_projection()).map_err(at)?;
                    let dim = attr.dimension.expect("validated");
                    if vector.len() != dim {
                        return Err(at(IngestErrorKind::DimensionMismatch {
                            expected: dim,
                            actual: vector.len(),
                        }));
                    }
                    if vector.iter().any(|v| !v.is_finite()) {
                        return Err(at(IngestErrorKind::Embedding(EmbeddingError::NonFinite)));
                    }
                    if vector.iter().all(|&v| v == 0.0) {
                        return Err(at(IngestErrorKind::Embedding(EmbeddingError::ZeroVector)));
                    }
                    vectors.extend(vector);
                    projection.extend(point);
                }
            }
        }
    }

    let n_docs = records.len();
    let mut columns = Vec::with_capacity(builders.len());
    for (attr, builder) in attrs.iter().zip(builders) {
        columns.push(match builder {
            Builder::Text(t) => AttributeData::Text(t),
            Builder::Single(col) => AttributeData::Single(col.finish()),
            Builder::Child(child) => AttributeData::Child(
                ChildTable::from_rows(
                    n_docs,
                    child.doc_ids,
                    &child.array_index,
                    child.values.finish(),
                    child.spans,
                )
                .map_err(|reason| IngestError {
                    record: 0,
                    attribute: attr.name.clone(),
                    kind: IngestErrorKind::Store(StoreError::Inconsistent {
                        attribute: attr.name.clone(),
                        reason,
                    }),
                })?,
            ),
            Builder::Embedding => AttributeData::Embedding,
        });
    }
    let embeddings = match &embedding {
        None => None,
        Some(desc) => {
            let projection = desc.has_projection().then_some(projection);
            Some(
                EmbeddingMatrix::new(desc.dimension.expect("validated"), vectors, projection)
                    .map_err(|e| IngestError {
                        record: 0,
                        attribute: desc.name.clone(),
                        kind: IngestErrorKind::Embedding(e),
                    })?,
            )
        }
    };
    NormalizedStore::from_parts(schema, n_docs, columns, embeddings).map_err(|e| IngestError {
        record: 0,
        attribute: String::new(),
        kind: IngestErrorKind::Store(e),
    })
}

fn span_object(value: Option<Scalar>, start: u32, end: u32) -> RawValue {
    RawValue::object([
        ("value", RawValue::from(value)),
        ("start", RawValue::Number(start as f64)),
        ("end", RawValue::Number(end as f64)),
    ])
}

/// Rebuilds one document's record from the normalized tables.
///
/// Every attribute is present in the result: missing single values come back
/// as null and missing lists as empty arrays. Span entries always carry offsets.
pub fn reassemble_document(store: &NormalizedStore, doc_id: u32) -> Result<RawRecord, StoreError> {
    if doc_id as usize >= store.n_docs() {
        return Err(StoreError::UnknownDocument(doc_id));
    }
    let mut record = BTreeMap::new();
    for (attr, data) in store.schema().attributes().iter().zip(store.columns()) {
        let value = match data {
            AttributeData::Text(t) => RawValue::String(t[doc_id as usize].clone()),
            AttributeData::Single(col) => col.value(doc_id as usize).into(),
            AttributeData::Child(table) => RawValue::Array(
                table
                    .rows_of(doc_id)
                    .map(|row| {
                        let value = table.values().value(row);
                        match table.span(row) {
                            Some((s, e)) => span_object(value, s, e),
                            None => value.into(),
                        }
                    })
                    .collect(),
            ),
            AttributeData::Embedding => embedding_value(store, attr, doc_id),
        };
        record.insert(attr.name.clone(), value);
    }
    Ok(record)
}

fn embedding_value(store: &NormalizedStore, attr: &AttributeDescriptor, doc_id: u32) -> RawValue {
    let m = store.embeddings().expect("declared embedding is stored");
    let vector = RawValue::Array(m.row(doc_id as usize).iter().map(|&v| v.into()).collect());
    match m.projection() {
        Some(p) if m.projection_ingested() && attr.has_projection() => {
            let [x, y] = p[doc_id as usize];
            RawValue::object([
                ("vector", vector),
                ("projection", RawValue::Array(vec![x.into(), y.into()])),
            ])
        }
        _ => vector,
    }
}

/// The text covered by a span, for callers holding char offsets.
pub fn span_text(text: &str, start: u32, end: u32) -> Option<String> {
    char_slice(text, start as usize, end as usize).map(ToString::to_string)
}
