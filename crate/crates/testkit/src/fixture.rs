//! The canonical six-document corpus, loaded from `fixtures/fixture6`.

use texture_core::schema::AttributeDescriptor;
use texture_core::{
    normalize_dataset, validate_schema, DatasetSchema, NormalizedStore, RawRecord, RawValue,
};

pub const MANIFEST: &str = include_str!("../../../fixtures/fixture6/manifest.json");
pub const RECORDS: &str = include_str!("../../../fixtures/fixture6/records.jsonl");

pub fn fixture6_schema() -> DatasetSchema {
    serde_json::from_str(MANIFEST).expect("fixture manifest parses")
}

pub fn fixture6_records() -> Vec<RawRecord> {
    RECORDS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture record parses"))
        .collect()
}

pub fn fixture6() -> NormalizedStore {
    let schema = validate_schema(fixture6_schema()).expect("fixture schema is valid");
    normalize_dataset(&fixture6_records(), &schema).expect("fixture normalizes")
}

/// Hand-picked 3-d vectors and 2-d projections for the fixture.
/// Docs 0 and 5 share a direction, so they are at distance 0 from each other.
pub const FIXTURE6_VECTORS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [2.0, 0.0, 0.0],
];

pub const FIXTURE6_PROJECTION: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [2.0, 0.0],
    [0.0, 1.0],
    [1.0, 1.0],
    [2.0, 1.0],
];

/// The fixture plus an `embedding` attribute with ingested projections.
pub fn fixture6_with_embeddings() -> NormalizedStore {
    let mut schema = fixture6_schema();
    schema
        .attributes
        .push(AttributeDescriptor::embedding("embedding", 3, true));
    let schema = validate_schema(schema).expect("schema with embedding is valid");
    let records: Vec<RawRecord> = fixture6_records()
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            let vector = RawValue::Array(FIXTURE6_VECTORS[i].iter().map(|&v| v.into()).collect());
            let projection =
                RawValue::Array(FIXTURE6_PROJECTION[i].iter().map(|&v| v.into()).collect());
            r.insert(
                "embedding".into(),
                RawValue::object([("vector", vector), ("projection", projection)]),
            );
            r
        })
        .collect();
    normalize_dataset(&records, &schema).expect("fixture with embeddings normalizes")
}
