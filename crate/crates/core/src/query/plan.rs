//! Filter compilation: main-table clauses plus EXISTS semi-joins over child tables.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use fixedbitset::FixedBitSet;

use super::predicate::{Predicate, SelectionState, Test};
use super::{Engine, QueryError};
use crate::schema::{AttributeDescriptor, AttributeKind};
use crate::store::{AttributeData, NormalizedStore, ValueColumn, NULL_CODE};
use crate::temporal;
use crate::text::{self, fold};
use crate::value::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct NumberRange {
    lo: f64,
    hi: f64,
    lo_inclusive: bool,
    hi_inclusive: bool,
}

impl NumberRange {
    fn contains(&self, v: f64) -> bool {
        let above = if self.lo_inclusive { v >= self.lo } else { v > self.lo };
        let below = if self.hi_inclusive { v <= self.hi } else { v < self.hi };
        above && below
    }
}

/// A predicate bound to one stored column.
#[derive(Clone, Debug)]
pub(crate) enum Matcher {
    /// Dictionary columns: accepted codes, plus whether null matches.
    Codes { accept: FixedBitSet, null: bool },
    Range(NumberRange),
    NumberSet(Vec<f64>),
    NullNumber,
    TextEquals(Vec<String>),
    /// Needle is pre-folded unless case sensitive.
    TextContains { needle: String, case_sensitive: bool },
    Nothing,
}

impl Matcher {
    #[inline]
    pub(crate) fn code(&self, code: u32) -> bool {
        match self {
            Matcher::Codes { accept, null } => {
                if code == NULL_CODE {
                    *null
                } else {
                    accept.contains(code as usize)
                }
            }
            _ => false,
        }
    }

    #[inline]
    pub(crate) fn number(&self, v: f64) -> bool {
        match self {
            Matcher::Range(r) => !v.is_nan() && r.contains(v),
            Matcher::NumberSet(set) => set.iter().any(|&x| x == v),
            Matcher::NullNumber => v.is_nan(),
            _ => false,
        }
    }

    pub(crate) fn text(&self, t: &str) -> bool {
        match self {
            Matcher::TextEquals(values) => values.iter().any(|v| v == t),
            Matcher::TextContains {
                needle,
                case_sensitive: true,
            } => t.contains(needle.as_str()),
            Matcher::TextContains { needle, .. } => fold(t).contains(needle.as_str()),
            _ => false,
        }
    }

    /// Whether row `row` of a value column matches.
    #[inline]
    pub(crate) fn row(&self, column: &ValueColumn, row: usize) -> bool {
        match column {
            ValueColumn::Categorical { codes, .. } | ValueColumn::Temporal { codes, .. } => {
                self.code(codes[row])
            }
            ValueColumn::Quantitative { values } => self.number(values[row]),
        }
    }
}

fn invalid(attribute: &str, reason: &str) -> QueryError {
    QueryError::InvalidPredicate {
        attribute: attribute.into(),
        reason: reason.into(),
    }
}

fn number_of(attribute: &str, value: &Scalar) -> Result<f64, QueryError> {
    value
        .as_number()
        .ok_or_else(|| invalid(attribute, "expected a number"))
}

fn epoch_of(attribute: &str, value: &Scalar) -> Result<f64, QueryError> {
    temporal::parse_scalar(value)
        .map(|t| t.epoch as f64)
        .ok_or_else(|| invalid(attribute, "expected a date, year or epoch seconds"))
}

fn resolve_range(
    attribute: &str,
    test: &Test,
    convert: fn(&str, &Scalar) -> Result<f64, QueryError>,
) -> Result<NumberRange, QueryError> {
    let Test::Range {
        lo,
        hi,
        lo_inclusive,
        hi_inclusive,
    } = test
    else {
        unreachable!("caller matched a range")
    };
    let range = NumberRange {
        lo: convert(attribute, lo)?,
        hi: convert(attribute, hi)?,
        lo_inclusive: *lo_inclusive,
        hi_inclusive: *hi_inclusive,
    };
    if range.lo > range.hi {
        return Err(invalid(attribute, "range bounds are reversed"));
    }
    Ok(range)
}

/// Binds a predicate to the value column it targets.
pub(crate) fn compile_value_matcher(
    attribute: &str,
    column: &ValueColumn,
    test: &Test,
) -> Result<Matcher, QueryError> {
    match column {
        ValueColumn::Categorical { dict, .. } => {
            let mut accept = FixedBitSet::with_capacity(dict.len());
            let mut null = false;
            match test {
                Test::ValueSet { values } => {
                    for (code, entry) in dict.values().iter().enumerate() {
                        if values.iter().any(|v| entry.loosely_eq(v)) {
                            accept.insert(code);
                        }
                    }
                }
                Test::Substring {
                    query,
                    case_sensitive,
                } => {
                    for (code, entry) in dict.values().iter().enumerate() {
                        if text::contains(&entry.to_text(), query, *case_sensitive) {
                            accept.insert(code);
                        }
                    }
                }
                Test::Null => null = true,
                Test::Range { .. } => {
                    return Err(invalid(attribute, "range filters need a quantitative or temporal attribute"))
                }
            }
            Ok(Matcher::Codes { accept, null })
        }
        ValueColumn::Temporal { dict, epochs, .. } => {
            let mut accept = FixedBitSet::with_capacity(dict.len());
            let mut null = false;
            match test {
                Test::ValueSet { values } => {
                    let wanted = values
                        .iter()
                        .map(|v| epoch_of(attribute, v).map(|e| e as i64))
                        .collect::<Result<Vec<_>, _>>()?;
                    for (code, e) in epochs.iter().enumerate() {
                        if wanted.contains(e) {
                            accept.insert(code);
                        }
                    }
                }
                Test::Range { .. } => {
                    let range = resolve_range(attribute, test, epoch_of)?;
                    for (code, &e) in epochs.iter().enumerate() {
                        if range.contains(e as f64) {
                            accept.insert(code);
                        }
                    }
                }
                Test::Null => null = true,
                Test::Substring { .. } => {
                    return Err(invalid(attribute, "substring search needs a text or categorical attribute"))
                }
            }
            Ok(Matcher::Codes { accept, null })
        }
        ValueColumn::Quantitative { .. } => match test {
            Test::ValueSet { values } => Ok(Matcher::NumberSet(
                values
                    .iter()
                    .map(|v| number_of(attribute, v))
                    .collect::<Result<_, _>>()?,
            )),
            Test::Range { .. } => Ok(Matcher::Range(resolve_range(attribute, test, number_of)?)),
            Test::Null => Ok(Matcher::NullNumber),
            Test::Substring { .. } => {
                Err(invalid(attribute, "substring search needs a text or categorical attribute"))
            }
        },
    }
}

fn compile_text_matcher(attribute: &str, test: &Test) -> Result<Matcher, QueryError> {
    match test {
        Test::Substring {
            query,
            case_sensitive,
        } => Ok(Matcher::TextContains {
            needle: if *case_sensitive {
                query.clone()
            } else {
                fold(query)
            },
            case_sensitive: *case_sensitive,
        }),
        Test::ValueSet { values } => Ok(Matcher::TextEquals(
            values.iter().map(Scalar::to_text).collect(),
        )),
        // Text is required at ingest, so never null.
        Test::Null => Ok(Matcher::Nothing),
        Test::Range { .. } => Err(invalid(attribute, "range filters need a quantitative or temporal attribute")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Existence {
    /// At least one child row matches.
    Any,
    /// The document has no child rows.
    None,
}

#[derive(Clone, Debug)]
pub struct MainClause {
    pub(crate) attribute: String,
    pub(crate) column: usize,
    pub(crate) matcher: Matcher,
}

#[derive(Clone, Debug)]
pub struct SemiJoinClause {
    pub(crate) attribute: String,
    pub(crate) column: usize,
    pub(crate) matcher: Matcher,
    pub(crate) existence: Existence,
}

impl SemiJoinClause {
    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn existence(&self) -> Existence {
        self.existence
    }
}

#[derive(Clone, Debug)]
pub struct DerivedClause {
    pub(crate) handle: String,
    pub(crate) range: NumberRange,
}

/// A selection lowered onto the normalized tables.
#[derive(Clone, Debug, Default)]
pub struct DocumentFilterPlan {
    pub(crate) main: Vec<MainClause>,
    pub(crate) semi_joins: Vec<SemiJoinClause>,
    pub(crate) derived: Vec<DerivedClause>,
}

impl DocumentFilterPlan {
    pub fn main_attributes(&self) -> impl Iterator<Item = &str> {
        self.main.iter().map(|c| c.attribute.as_str())
    }

    pub fn semi_joins(&self) -> &[SemiJoinClause] {
        &self.semi_joins
    }

    pub fn derived_handles(&self) -> impl Iterator<Item = &str> {
        self.derived.iter().map(|c| c.handle.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty() && self.semi_joins.is_empty() && self.derived.is_empty()
    }
}

/// A set of document ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocSet {
    bits: FixedBitSet,
}

impl DocSet {
    pub fn all(n_docs: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(n_docs);
        bits.insert_range(..);
        Self { bits }
    }

    pub fn none(n_docs: usize) -> Self {
        Self {
            bits: FixedBitSet::with_capacity(n_docs),
        }
    }

    #[inline]
    pub fn contains(&self, doc: u32) -> bool {
        self.bits.contains(doc as usize)
    }

    pub fn insert(&mut self, doc: u32) {
        self.bits.insert(doc as usize);
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.bits.ones().map(|d| d as u32)
    }

    pub fn to_vec(&self) -> Vec<u32> {
        self.iter().collect()
    }

    pub fn intersect_with(&mut self, other: &DocSet) {
        self.bits.intersect_with(&other.bits);
    }

    pub(crate) fn bits(&self) -> &FixedBitSet {
        &self.bits
    }
}

pub(crate) fn lookup<'s>(
    store: &'s NormalizedStore,
    attribute: &str,
) -> Result<(usize, &'s AttributeDescriptor, &'s AttributeData), QueryError> {
    let pos = store
        .schema()
        .position(attribute)
        .ok_or_else(|| QueryError::UnknownAttribute(attribute.to_string()))?;
    Ok((pos, &store.schema().attributes()[pos], &store.columns()[pos]))
}

pub(crate) enum Clause {
    Main(MainClause),
    SemiJoin(SemiJoinClause),
}

pub(crate) fn compile_predicate(
    store: &NormalizedStore,
    predicate: &Predicate,
) -> Result<Clause, QueryError> {
    predicate.check_shape()?;
    let name = predicate.attribute.as_str();
    let (column, desc, data) = lookup(store, name)?;
    Ok(match data {
        AttributeData::Text(_) => Clause::Main(MainClause {
            attribute: name.into(),
            column,
            matcher: compile_text_matcher(name, &predicate.test)?,
        }),
        AttributeData::Single(col) => Clause::Main(MainClause {
            attribute: name.into(),
            column,
            matcher: compile_value_matcher(name, col, &predicate.test)?,
        }),
        AttributeData::Child(table) => {
            let (matcher, existence) = match predicate.test {
                Test::Null => (Matcher::Nothing, Existence::None),
                _ => (
                    compile_value_matcher(name, table.values(), &predicate.test)?,
                    Existence::Any,
                ),
            };
            debug_assert!(desc.kind.is_child());
            Clause::SemiJoin(SemiJoinClause {
                attribute: name.into(),
                column,
                matcher,
                existence,
            })
        }
        AttributeData::Embedding => {
            debug_assert_eq!(desc.kind, AttributeKind::Embedding);
            return Err(invalid(name, "embeddings are filtered through similarity columns"));
        }
    })
}

impl<'a> Engine<'a> {
    /// Lowers a selection to main-table clauses and semi-joins, leaving out
    /// the predicate on `exclude_attribute` (a chart's own filter).
    pub fn compile_filter(
        &self,
        selection: &SelectionState,
        exclude_attribute: Option<&str>,
    ) -> Result<DocumentFilterPlan, QueryError> {
        let mut plan = DocumentFilterPlan::default();
        for predicate in selection.predicates() {
            if Some(predicate.attribute.as_str()) == exclude_attribute {
                continue;
            }
            match compile_predicate(self.store, predicate)? {
                Clause::Main(c) => plan.main.push(c),
                Clause::SemiJoin(c) => plan.semi_joins.push(c),
            }
        }
        for d in selection.derived() {
            if Some(d.handle.as_str()) == exclude_attribute {
                continue;
            }
            if self.derived.get(&d.handle).is_none() {
                return Err(QueryError::UnknownDerivedColumn(d.handle.clone()));
            }
            plan.derived.push(DerivedClause {
                handle: d.handle.clone(),
                range: NumberRange {
                    lo: d.lo,
                    hi: d.hi,
                    lo_inclusive: d.lo_inclusive,
                    hi_inclusive: d.hi_inclusive,
                },
            });
        }
        Ok(plan)
    }

    pub(crate) fn main_clause_docs(&self, clause: &MainClause) -> DocSet {
        let n = self.store.n_docs();
        let mut out = DocSet::none(n);
        match &self.store.columns()[clause.column] {
            AttributeData::Text(texts) => {
                for (doc, t) in texts.iter().enumerate() {
                    if clause.matcher.text(t) {
                        out.insert(doc as u32);
                    }
                }
            }
            AttributeData::Single(col) => {
                for doc in 0..n {
                    if clause.matcher.row(col, doc) {
                        out.insert(doc as u32);
                    }
                }
            }
            _ => unreachable!("main clauses target main-table columns"),
        }
        out
    }

    pub(crate) fn semi_join_docs(&self, clause: &SemiJoinClause) -> DocSet {
        let n = self.store.n_docs();
        let AttributeData::Child(table) = &self.store.columns()[clause.column] else {
            unreachable!("semi-joins target child tables")
        };
        match clause.existence {
            Existence::None => {
                let mut out = DocSet::none(n);
                for doc in 0..n as u32 {
                    if table.rows_of(doc).is_empty() {
                        out.insert(doc);
                    }
                }
                out
            }
            Existence::Any => {
                let mut out = DocSet::none(n);
                let docs = table.doc_ids();
                match (table.values(), &clause.matcher) {
                    (
                        ValueColumn::Categorical { codes, .. } | ValueColumn::Temporal { codes, .. },
                        Matcher::Codes { accept, null },
                    ) => {
                        for (&doc, &code) in docs.iter().zip(codes) {
                            let hit = if code == NULL_CODE {
                                *null
                            } else {
                                accept.contains(code as usize)
                            };
                            if hit {
                                out.insert(doc);
                            }
                        }
                    }
                    (col, matcher) => {
                        for (row, &doc) in docs.iter().enumerate() {
                            if matcher.row(col, row) {
                                out.insert(doc);
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub(crate) fn derived_docs(&self, clause: &DerivedClause) -> DocSet {
        let column = self
            .derived
            .get(&clause.handle)
            .expect("compile_filter checked the handle");
        let mut out = DocSet::none(self.store.n_docs());
        for (doc, &v) in column.values.iter().enumerate() {
            if !v.is_nan() && clause.range.contains(v) {
                out.insert(doc as u32);
            }
        }
        out
    }

    /// Documents passing every main clause and every semi-join.
    pub fn matching_documents(&self, plan: &DocumentFilterPlan) -> DocSet {
        let mut docs = DocSet::all(self.store.n_docs());
        for c in &plan.main {
            docs.intersect_with(&self.main_clause_docs(c));
        }
        for c in &plan.semi_joins {
            docs.intersect_with(&self.semi_join_docs(c));
        }
        for c in &plan.derived {
            docs.intersect_with(&self.derived_docs(c));
        }
        docs
    }

    /// Convenience: all documents matching the full selection.
    pub fn select(&self, selection: &SelectionState) -> Result<DocSet, QueryError> {
        Ok(self.matching_documents(&self.compile_filter(selection, None)?))
    }
}

/// Per-clause document sets for one selection, so each chart can drop its own
/// clause without re-scanning the others.
pub struct CrossFilter {
    n_docs: usize,
    clauses: Vec<(String, DocSet)>,
}

impl CrossFilter {
    pub fn new(engine: &Engine<'_>, selection: &SelectionState) -> Result<Self, QueryError> {
        let plan = engine.compile_filter(selection, None)?;
        let mut clauses = Vec::new();
        for c in &plan.main {
            clauses.push((c.attribute.clone(), engine.main_clause_docs(c)));
        }
        for c in &plan.semi_joins {
            clauses.push((c.attribute.clone(), engine.semi_join_docs(c)));
        }
        for c in &plan.derived {
            clauses.push((c.handle.clone(), engine.derived_docs(c)));
        }
        Ok(Self {
            n_docs: engine.store.n_docs(),
            clauses,
        })
    }

    pub fn all(&self) -> DocSet {
        self.excluding(None)
    }

    /// Documents passing every clause except the one on `attribute`.
    pub fn excluding(&self, attribute: Option<&str>) -> DocSet {
        let mut docs = DocSet::all(self.n_docs);
        for (name, set) in &self.clauses {
            if Some(name.as_str()) != attribute {
                docs.intersect_with(set);
            }
        }
        docs
    }
}
