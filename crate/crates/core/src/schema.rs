//! Dataset schema: the five attribute kinds and their data types.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::temporal;
use crate::value::Scalar;

/// How an attribute relates to the documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Text,
    SingleValue,
    List,
    SpanList,
    Embedding,
}

impl AttributeKind {
    /// List-like kinds live in their own child table.
    pub fn is_child(self) -> bool {
        matches!(self, AttributeKind::List | AttributeKind::SpanList)
    }

    pub fn carries_data_type(self) -> bool {
        matches!(
            self,
            AttributeKind::SingleValue | AttributeKind::List | AttributeKind::SpanList
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Quantitative,
    Categorical,
    Temporal,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Quantitative => "quantitative",
            DataType::Categorical => "categorical",
            DataType::Temporal => "temporal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDescriptor {
    pub name: String,
    pub kind: AttributeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_type: Option<DataType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_projection: Option<bool>,
    /// Span values are labels of the covered text (tags, entity types) rather
    /// than the covered text itself, so they are not checked against it.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub span_labels: bool,
}

impl AttributeDescriptor {
    fn bare(name: &str, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
            data_type: None,
            span_source: None,
            dimension: None,
            has_projection: None,
            span_labels: false,
        }
    }

    pub fn text(name: &str) -> Self {
        Self::bare(name, AttributeKind::Text)
    }

    pub fn single(name: &str, data_type: DataType) -> Self {
        Self {
            data_type: Some(data_type),
            ..Self::bare(name, AttributeKind::SingleValue)
        }
    }

    pub fn list(name: &str, data_type: DataType) -> Self {
        Self {
            data_type: Some(data_type),
            ..Self::bare(name, AttributeKind::List)
        }
    }

    pub fn span_list(name: &str, data_type: DataType, source: &str) -> Self {
        Self {
            data_type: Some(data_type),
            span_source: Some(source.into()),
            ..Self::bare(name, AttributeKind::SpanList)
        }
    }

    pub fn embedding(name: &str, dimension: usize, has_projection: bool) -> Self {
        Self {
            dimension: Some(dimension),
            has_projection: Some(has_projection),
            ..Self::bare(name, AttributeKind::Embedding)
        }
    }

    /// Leaves the data type to be inferred at ingest.
    pub fn untyped(mut self) -> Self {
        self.data_type = None;
        self
    }

    pub fn has_projection(&self) -> bool {
        self.has_projection.unwrap_or(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub dataset_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_field: Option<String>,
    pub attributes: Vec<AttributeDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    DuplicateName,
    InvalidName,
    MissingSpanSource,
    MultipleEmbeddings,
    NoTextAttribute,
    UnexpectedDataType,
    InvalidDimension,
    MisplacedField(&'static str),
    InvalidIdField,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::DuplicateName => f.write_str("attribute name is declared more than once"),
            Rule::InvalidName => f.write_str("attribute names must match [A-Za-z0-9_]+"),
            Rule::MissingSpanSource => {
                f.write_str("span_list attributes need a span_source naming a text attribute")
            }
            Rule::MultipleEmbeddings => f.write_str("at most one embedding attribute is supported"),
            Rule::NoTextAttribute => f.write_str("schema declares no text attribute"),
            Rule::UnexpectedDataType => {
                f.write_str("text and embedding attributes carry no data_type")
            }
            Rule::InvalidDimension => {
                f.write_str("embedding attributes need a positive dimension")
            }
            Rule::MisplacedField(field) => write!(f, "field `{field}` does not apply to this kind"),
            Rule::InvalidIdField => f.write_str("id_field must name a single_value attribute"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub attribute: Option<String>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attribute {
            Some(name) => write!(f, "`{name}`: {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("invalid schema: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("empty sample")]
    EmptySample,
}

impl SchemaError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            SchemaError::Invalid(v) => v,
            SchemaError::EmptySample => &[],
        }
    }

    pub fn has_rule(&self, rule: &Rule) -> bool {
        self.violations().iter().any(|v| &v.rule == rule)
    }
}

fn join_violations(violations: &[Violation]) -> String {
    let mut out = String::new();
    for (i, v) in violations.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&alloc::format!("{v}"));
    }
    out
}

/// A schema whose invariants have been checked. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedSchema {
    schema: DatasetSchema,
    index: BTreeMap<String, usize>,
}

impl ValidatedSchema {
    pub fn dataset_name(&self) -> &str {
        &self.schema.dataset_name
    }

    pub fn id_field(&self) -> Option<&str> {
        self.schema.id_field.as_deref()
    }

    pub fn attributes(&self) -> &[AttributeDescriptor] {
        &self.schema.attributes
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&AttributeDescriptor> {
        self.position(name).map(|i| &self.schema.attributes[i])
    }

    pub fn embedding(&self) -> Option<&AttributeDescriptor> {
        self.schema
            .attributes
            .iter()
            .find(|a| a.kind == AttributeKind::Embedding)
    }

    pub fn as_schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn into_inner(self) -> DatasetSchema {
        self.schema
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks every schema rule and reports all violations at once.
pub fn validate_schema(schema: DatasetSchema) -> Result<ValidatedSchema, SchemaError> {
    let mut violations = Vec::new();
    let mut index = BTreeMap::new();
    let mut flag = |attribute: Option<&str>, rule: Rule| {
        violations.push(Violation {
            attribute: attribute.map(String::from),
            rule,
        })
    };

    for (i, attr) in schema.attributes.iter().enumerate() {
        if !valid_name(&attr.name) {
            flag(Some(&attr.name), Rule::InvalidName);
        }
        if index.insert(attr.name.clone(), i).is_some() {
            flag(Some(&attr.name), Rule::DuplicateName);
        }
    }

    let kind_of = |name: &str| {
        schema
            .attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.kind)
    };

    let mut embeddings = 0;
    for attr in &schema.attributes {
        let name = Some(attr.name.as_str());
        if !attr.kind.carries_data_type() && attr.data_type.is_some() {
            flag(name, Rule::UnexpectedDataType);
        }
        match attr.kind {
            AttributeKind::SpanList => {
                let resolves = attr
                    .span_source
                    .as_deref()
                    .is_some_and(|src| kind_of(src) == Some(AttributeKind::Text));
                if !resolves {
                    flag(name, Rule::MissingSpanSource);
                }
            }
            _ if attr.span_source.is_some() => flag(name, Rule::MisplacedField("span_source")),
            _ => {}
        }
        if attr.span_labels && attr.kind != AttributeKind::SpanList {
            flag(name, Rule::MisplacedField("span_labels"));
        }
        if attr.kind == AttributeKind::Embedding {
            embeddings += 1;
            if !attr.dimension.is_some_and(|d| d > 0) {
                flag(name, Rule::InvalidDimension);
            }
        } else {
            if attr.dimension.is_some() {
                flag(name, Rule::MisplacedField("dimension"));
            }
            if attr.has_projection.is_some() {
                flag(name, Rule::MisplacedField("has_projection"));
            }
        }
    }
    if embeddings > 1 {
        flag(None, Rule::MultipleEmbeddings);
    }
    if !schema
        .attributes
        .iter()
        .any(|a| a.kind == AttributeKind::Text)
    {
        flag(None, Rule::NoTextAttribute);
    }
    if let Some(id) = schema.id_field.as_deref() {
        if kind_of(id) != Some(AttributeKind::SingleValue) {
            flag(Some(id), Rule::InvalidIdField);
        }
    }

    if violations.is_empty() {
        Ok(ValidatedSchema { schema, index })
    } else {
        Err(SchemaError::Invalid(violations))
    }
}

fn is_year(value: &Scalar) -> bool {
    match value {
        Scalar::Number(n) => crate::value::is_integral(*n) && (1500.0..=2100.0).contains(n),
        Scalar::Str(s) => {
            let t = s.trim();
            t.len() == 4
                && t.bytes().all(|b| b.is_ascii_digit())
                && t.parse::<u32>().is_ok_and(|y| (1500..=2100).contains(&y))
        }
        Scalar::Bool(_) => false,
    }
}

/// Picks a data type for values whose manifest entry omits one.
///
/// Bare four-digit years count as temporal; otherwise all-numeric samples are
/// quantitative, all-ISO-date samples temporal, and anything else categorical.
pub fn infer_data_type(sample: &[Scalar]) -> Result<DataType, SchemaError> {
    if sample.is_empty() {
        return Err(SchemaError::EmptySample);
    }
    if sample.iter().all(is_year) {
        return Ok(DataType::Temporal);
    }
    if sample
        .iter()
        .all(|v| matches!(v, Scalar::Number(_)) || matches!(v, Scalar::Str(s) if crate::value::parse_number(s).is_some()))
    {
        return Ok(DataType::Quantitative);
    }
    if sample
        .iter()
        .all(|v| matches!(v, Scalar::Str(s) if temporal::parse_iso(s).is_some()))
    {
        return Ok(DataType::Temporal);
    }
    Ok(DataType::Categorical)
}
