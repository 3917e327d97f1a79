//! A deterministic JSON description of a store: shape, null counts, and the
//! unfiltered summary of every chartable attribute.

use serde::Serialize;
use texture_core::query::{SummaryOptions, SummaryResult};
use texture_core::schema::{AttributeKind, DataType};
use texture_core::store::AttributeData;
use texture_core::{Engine, NormalizedStore, QueryError, SelectionState};

use crate::api::chartable_attributes;

#[derive(Debug, Serialize)]
pub struct Profile {
    pub dataset: String,
    pub n_docs: usize,
    pub attributes: Vec<AttributeProfile>,
    /// Absent when the store has no embedding.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionProfile>,
}

#[derive(Debug, Serialize)]
pub struct AttributeProfile {
    pub name: String,
    pub kind: AttributeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_type: Option<DataType>,
    /// Null cells; for lists, documents with an empty list; for text, empty texts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_count: Option<usize>,
    /// Child table rows, for list-like attributes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummaryResult>,
}

#[derive(Debug, Serialize)]
pub struct ProjectionProfile {
    pub dimension: usize,
    /// `ingested`, `pca`, or `none` when the data could not be projected.
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_range: Option<[f64; 2]>,
}

fn extent(values: impl Iterator<Item = f64>) -> Option<[f64; 2]> {
    values.fold(None, |acc, v| match acc {
        None => Some([v, v]),
        Some([lo, hi]) => Some([lo.min(v), hi.max(v)]),
    })
}

pub fn profile(store: &NormalizedStore) -> Result<Profile, QueryError> {
    let engine = Engine::new(store);
    let chartable = chartable_attributes(store.schema().as_schema());
    let mut summaries =
        engine.summarize_many(&chartable, &SelectionState::new(), &SummaryOptions::default())?;
    let attributes = store
        .schema()
        .attributes()
        .iter()
        .zip(store.columns())
        .map(|(desc, data)| {
            let (null_count, rows) = match data {
                AttributeData::Text(texts) => (Some(texts.iter().filter(|t| t.is_empty()).count()), None),
                AttributeData::Single(col) => (Some(col.null_count()), None),
                AttributeData::Child(t) => (
                    Some((0..store.n_docs() as u32).filter(|&d| t.rows_of(d).is_empty()).count()),
                    Some(t.len()),
                ),
                AttributeData::Embedding => (None, None),
            };
            AttributeProfile {
                name: desc.name.clone(),
                kind: desc.kind,
                data_type: desc.data_type,
                null_count,
                rows,
                dimension: desc.dimension,
                summary: summaries.remove(&desc.name),
            }
        })
        .collect();
    let projection = store.embeddings().map(|m| {
        let points = m.projection();
        ProjectionProfile {
            dimension: m.dimension(),
            source: match (points.is_some(), m.projection_ingested()) {
                (true, true) => "ingested",
                (true, false) => "pca",
                (false, _) => "none",
            },
            x_range: points.and_then(|p| extent(p.iter().map(|q| q[0]))),
            y_range: points.and_then(|p| extent(p.iter().map(|q| q[1]))),
        }
    });
    Ok(Profile {
        dataset: store.name().to_string(),
        n_docs: store.n_docs(),
        attributes,
        projection,
    })
}
