//! Straightforward full scans over raw records. Nothing here touches the
//! normalized tables, so engine results can be checked against it.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use texture_core::query::{Predicate, Test};
use texture_core::schema::{AttributeKind, DataType};
use texture_core::{DatasetSchema, RawRecord, RawValue, Scalar};

pub struct Oracle<'a> {
    schema: &'a DatasetSchema,
    records: &'a [RawRecord],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    Day,
    Month,
    Year,
}

/// Epoch seconds of a temporal cell: bare years, ISO dates, or epoch seconds.
pub fn epoch_of(v: &Scalar) -> Option<i64> {
    Some(match v {
        Scalar::Number(n) if n.fract() == 0.0 && (1500.0..=2100.0).contains(n) => {
            midnight(NaiveDate::from_ymd_opt(*n as i32, 1, 1)?)
        }
        Scalar::Number(n) if n.fract() == 0.0 => *n as i64,
        Scalar::Str(s) => match s.len() {
            4 => midnight(NaiveDate::from_ymd_opt(s.parse().ok()?, 1, 1)?),
            7 => midnight(NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok()?),
            10 => midnight(NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?),
            _ => return None,
        },
        _ => return None,
    })
}

fn midnight(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()
}

fn date(epoch: i64) -> NaiveDate {
    chrono::DateTime::from_timestamp(epoch, 0).unwrap().date_naive()
}

fn precision_of(v: &Scalar) -> Step {
    match v {
        Scalar::Str(s) if s.len() == 10 => Step::Day,
        Scalar::Str(s) if s.len() == 7 => Step::Month,
        _ => Step::Year,
    }
}

fn days_in_month(y: i32, m: u32) -> u32 {
    let next = if m == 12 {
        NaiveDate::from_ymd_opt(y + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(y, m + 1, 1)
    };
    next.unwrap().pred_opt().unwrap().day()
}

/// `d` moved forward by whole months, clamping the day to the target month.
fn plus_months(d: NaiveDate, months: u32) -> NaiveDate {
    let total = d.year() * 12 + d.month0() as i32 + months as i32;
    let (y, m) = (total.div_euclid(12), total.rem_euclid(12) as u32 + 1);
    NaiveDate::from_ymd_opt(y, m, d.day().min(days_in_month(y, m))).unwrap()
}

fn label(d: NaiveDate, step: Step) -> String {
    match step {
        Step::Year => format!("{:04}", d.year()),
        Step::Month => format!("{:04}-{:02}", d.year(), d.month()),
        Step::Day => format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day()),
    }
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

fn contains(hay: &str, needle: &str, case_sensitive: bool) -> bool {
    if case_sensitive {
        hay.contains(needle)
    } else {
        fold(hay).contains(&fold(needle))
    }
}

fn text_of(v: &Scalar) -> String {
    match v {
        Scalar::Number(n) if n.fract() == 0.0 && n.abs() < 1e15 => format!("{}", *n as i64),
        Scalar::Number(n) => format!("{n}"),
        Scalar::Str(s) => s.clone(),
        Scalar::Bool(b) => b.to_string(),
    }
}

fn number_of(v: &Scalar) -> Option<f64> {
    match v {
        Scalar::Number(n) => Some(*n),
        Scalar::Str(s) => s.trim().parse().ok(),
        Scalar::Bool(_) => None,
    }
}

fn in_range(x: f64, lo: f64, hi: f64, lo_inc: bool, hi_inc: bool) -> bool {
    (if lo_inc { x >= lo } else { x > lo }) && (if hi_inc { x <= hi } else { x < hi })
}

fn scalar(v: &RawValue) -> Option<Scalar> {
    match v {
        RawValue::Bool(b) => Some(Scalar::Bool(*b)),
        RawValue::Number(n) => Some(Scalar::Number(*n)),
        RawValue::String(s) => Some(Scalar::Str(s.clone())),
        _ => None,
    }
}

impl<'a> Oracle<'a> {
    pub fn new(schema: &'a DatasetSchema, records: &'a [RawRecord]) -> Self {
        Self { schema, records }
    }

    pub fn n_docs(&self) -> usize {
        self.records.len()
    }

    fn kind(&self, attr: &str) -> (AttributeKind, Option<DataType>) {
        let d = self
            .schema
            .attributes
            .iter()
            .find(|a| a.name == attr)
            .unwrap_or_else(|| panic!("oracle: unknown attribute {attr}"));
        (d.kind, d.data_type)
    }

    pub fn text(&self, doc: usize, attr: &str) -> &str {
        match self.records[doc].get(attr) {
            Some(RawValue::String(s)) => s,
            _ => "",
        }
    }

    pub fn value(&self, doc: usize, attr: &str) -> Option<Scalar> {
        self.records[doc].get(attr).and_then(scalar)
    }

    /// List elements, or span values for span lists; `None` for null elements.
    pub fn items(&self, doc: usize, attr: &str) -> Vec<Option<Scalar>> {
        match self.records[doc].get(attr) {
            Some(RawValue::Array(items)) => items
                .iter()
                .map(|item| match item {
                    RawValue::Object(o) => o.get("value").and_then(scalar),
                    other => scalar(other),
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn spans(&self, doc: usize, attr: &str) -> Vec<(Option<Scalar>, u32, u32)> {
        let Some(RawValue::Array(items)) = self.records[doc].get(attr) else {
            return Vec::new();
        };
        items
            .iter()
            .map(|item| {
                let RawValue::Object(o) = item else {
                    panic!("oracle expects span objects")
                };
                let n = |k: &str| match o.get(k) {
                    Some(RawValue::Number(x)) => *x as u32,
                    _ => panic!("span without {k}"),
                };
                (o.get("value").and_then(scalar), n("start"), n("end"))
            })
            .collect()
    }

    fn scalar_matches(data_type: DataType, test: &Test, v: &Scalar) -> bool {
        match (data_type, test) {
            (_, Test::Null) => false,
            (DataType::Categorical, Test::ValueSet { values }) => values.iter().any(|w| {
                w == v
                    || match (number_of(w), number_of(v)) {
                        (Some(a), Some(b)) => {
                            a == b && (matches!(v, Scalar::Number(_)) || matches!(w, Scalar::Number(_)))
                        }
                        _ => false,
                    }
            }),
            (DataType::Categorical, Test::Substring { query, case_sensitive }) => {
                contains(&text_of(v), query, *case_sensitive)
            }
            (DataType::Quantitative, Test::ValueSet { values }) => {
                let x = number_of(v);
                values.iter().any(|w| number_of(w) == x && x.is_some())
            }
            (DataType::Quantitative, Test::Range { lo, hi, lo_inclusive, hi_inclusive }) => {
                match (number_of(v), number_of(lo), number_of(hi)) {
                    (Some(x), Some(lo), Some(hi)) => in_range(x, lo, hi, *lo_inclusive, *hi_inclusive),
                    _ => false,
                }
            }
            (DataType::Temporal, Test::ValueSet { values }) => {
                let e = epoch_of(v);
                values.iter().any(|w| epoch_of(w) == e && e.is_some())
            }
            (DataType::Temporal, Test::Range { lo, hi, lo_inclusive, hi_inclusive }) => {
                match (epoch_of(v), epoch_of(lo), epoch_of(hi)) {
                    (Some(x), Some(lo), Some(hi)) => {
                        in_range(x as f64, lo as f64, hi as f64, *lo_inclusive, *hi_inclusive)
                    }
                    _ => false,
                }
            }
            (dt, t) => panic!("oracle: {t:?} is not defined for {dt:?}"),
        }
    }

    pub fn predicate_matches(&self, doc: usize, p: &Predicate) -> bool {
        let (kind, data_type) = self.kind(&p.attribute);
        match kind {
            AttributeKind::Text => {
                let t = self.text(doc, &p.attribute);
                match &p.test {
                    Test::Substring { query, case_sensitive } => contains(t, query, *case_sensitive),
                    Test::ValueSet { values } => values.iter().any(|v| text_of(v) == t),
                    Test::Null => false,
                    Test::Range { .. } => panic!("oracle: range on text"),
                }
            }
            AttributeKind::SingleValue => match (self.value(doc, &p.attribute), &p.test) {
                (None, Test::Null) => true,
                (None, _) => false,
                (Some(v), t) => Self::scalar_matches(data_type.unwrap(), t, &v),
            },
            AttributeKind::List | AttributeKind::SpanList => {
                let items = self.items(doc, &p.attribute);
                match &p.test {
                    Test::Null => items.is_empty(),
                    t => items
                        .iter()
                        .flatten()
                        .any(|v| Self::scalar_matches(data_type.unwrap(), t, v)),
                }
            }
            AttributeKind::Embedding => panic!("oracle: predicate on embedding"),
        }
    }

    /// Documents passing every predicate except the one on `exclude`.
    pub fn matching(&self, predicates: &[Predicate], exclude: Option<&str>) -> Vec<u32> {
        (0..self.records.len())
            .filter(|&d| {
                predicates
                    .iter()
                    .filter(|p| Some(p.attribute.as_str()) != exclude)
                    .all(|p| self.predicate_matches(d, p))
            })
            .map(|d| d as u32)
            .collect()
    }

    /// Non-null values of `attr` per document: one for single values, one per element for lists.
    fn values_of(&self, doc: usize, attr: &str) -> Vec<Scalar> {
        match self.kind(attr).0 {
            AttributeKind::SingleValue => self.value(doc, attr).into_iter().collect(),
            _ => self.items(doc, attr).into_iter().flatten().collect(),
        }
    }

    /// Count desc, value asc, paged.
    pub fn bars(
        &self,
        attr: &str,
        predicates: &[Predicate],
        offset: usize,
        k: usize,
    ) -> (Vec<(Scalar, u64)>, usize) {
        let mut counts: BTreeMap<Scalar, u64> = BTreeMap::new();
        for d in self.matching(predicates, Some(attr)) {
            for v in self.values_of(d as usize, attr) {
                *counts.entry(v).or_default() += 1;
            }
        }
        let mut rows: Vec<(Scalar, u64)> = counts.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let distinct = rows.len();
        (rows.into_iter().skip(offset).take(k).collect(), distinct)
    }

    /// Equal-width histogram over the unfiltered extent; `None` when all values are null.
    pub fn bins(
        &self,
        attr: &str,
        predicates: &[Predicate],
        bin_count: usize,
    ) -> Option<(Vec<f64>, Vec<u64>)> {
        let all: Vec<f64> = (0..self.records.len())
            .flat_map(|d| self.values_of(d, attr))
            .filter_map(|v| number_of(&v))
            .collect();
        let min = all.iter().cloned().reduce(f64::min)?;
        let max = all.iter().cloned().reduce(f64::max)?;
        let edges: Vec<f64> = if min == max {
            vec![min, max]
        } else {
            let w = (max - min) / bin_count as f64;
            (0..bin_count)
                .map(|i| min + i as f64 * w)
                .chain([max])
                .collect()
        };
        let nb = edges.len() - 1;
        let mut counts = vec![0u64; nb];
        for d in self.matching(predicates, Some(attr)) {
            for x in self.values_of(d as usize, attr).iter().filter_map(number_of) {
                let i = (0..nb)
                    .find(|&i| edges[i] <= x && (x < edges[i + 1] || i == nb - 1))
                    .expect("value inside extent");
                counts[i] += 1;
            }
        }
        Some((edges, counts))
    }

    /// Calendar buckets as `(label, count)`, zero-filled across the unfiltered extent.
    pub fn series(&self, attr: &str, predicates: &[Predicate]) -> Vec<(String, u64)> {
        let all: Vec<Scalar> = (0..self.records.len())
            .flat_map(|d| self.values_of(d, attr))
            .collect();
        let epochs: Vec<i64> = all.iter().filter_map(epoch_of).collect();
        let (Some(&min), Some(&max)) = (epochs.iter().min(), epochs.iter().max()) else {
            return Vec::new();
        };
        let finest = all.iter().map(precision_of).min().unwrap();
        let (start, end) = (date(min), date(max));
        let by_range = if end > plus_months(start, 36) {
            Step::Year
        } else if end > plus_months(start, 3) {
            Step::Month
        } else {
            Step::Day
        };
        let step = by_range.max(finest);
        let mut buckets: Vec<(String, u64)> = Vec::new();
        let mut d = start;
        loop {
            let l = label(d, step);
            if buckets.last().map(|b| &b.0) != Some(&l) {
                buckets.push((l, 0));
            }
            if d >= end {
                break;
            }
            d = d.succ_opt().unwrap();
        }
        for doc in self.matching(predicates, Some(attr)) {
            for v in self.values_of(doc as usize, attr) {
                if let Some(e) = epoch_of(&v) {
                    let l = label(date(e), step);
                    buckets.iter_mut().find(|b| b.0 == l).unwrap().1 += 1;
                }
            }
        }
        buckets
    }

    /// Matching documents ordered by `sort` (nulls last, ties by doc id).
    pub fn page_order(&self, predicates: &[Predicate], sort: Option<(&str, bool)>) -> Vec<u32> {
        let mut docs = self.matching(predicates, None);
        let Some((attr, desc)) = sort else {
            return docs;
        };
        let data_type = self.kind(attr).1.unwrap();
        let key = |d: u32| -> Option<f64> {
            let v = self.value(d as usize, attr)?;
            match data_type {
                DataType::Quantitative => number_of(&v),
                DataType::Temporal => epoch_of(&v).map(|e| e as f64),
                DataType::Categorical => None,
            }
        };
        docs.sort_by(|&a, &b| {
            let ord = if data_type == DataType::Categorical {
                match (self.value(a as usize, attr), self.value(b as usize, attr)) {
                    (Some(x), Some(y)) => if desc { y.cmp(&x) } else { x.cmp(&y) },
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                }
            } else {
                match (key(a), key(b)) {
                    (Some(x), Some(y)) => {
                        if desc { y.partial_cmp(&x).unwrap() } else { x.partial_cmp(&y).unwrap() }
                    }
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                }
            };
            ord.then(a.cmp(&b))
        });
        docs
    }

    /// `(start, end, attribute)` for matching span rows and text substring hits, sorted.
    pub fn highlights(&self, doc: usize, predicates: &[Predicate]) -> Vec<(u32, u32, String)> {
        let mut out = Vec::new();
        for p in predicates {
            let (kind, data_type) = self.kind(&p.attribute);
            match (kind, &p.test) {
                (AttributeKind::SpanList, Test::Null) => {}
                (AttributeKind::SpanList, t) => {
                    for (v, s, e) in self.spans(doc, &p.attribute) {
                        if v.is_some_and(|v| Self::scalar_matches(data_type.unwrap(), t, &v)) {
                            out.push((s, e, p.attribute.clone()));
                        }
                    }
                }
                (AttributeKind::Text, Test::Substring { query, case_sensitive }) => {
                    let lower = |c: char| -> char {
                        if *case_sensitive {
                            c
                        } else {
                            let mut l = c.to_lowercase();
                            let first = l.next().unwrap();
                            assert!(l.next().is_none(), "oracle supports 1:1 case mapping only");
                            first
                        }
                    };
                    let hay: Vec<char> = self.text(doc, &p.attribute).chars().map(lower).collect();
                    let needle: Vec<char> = query.chars().map(lower).collect();
                    let mut i = 0;
                    while !needle.is_empty() && i + needle.len() <= hay.len() {
                        if hay[i..i + needle.len()] == needle[..] {
                            out.push((i as u32, (i + needle.len()) as u32, p.attribute.clone()));
                            i += needle.len();
                        } else {
                            i += 1;
                        }
                    }
                }
                _ => {}
            }
        }
        out.sort();
        out
    }
}

/// `1 - cos(a, b)` written out directly.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Embedding rows of `records` as written at ingest (array or `{vector, ...}`).
pub fn vectors(records: &[RawRecord], attr: &str) -> Vec<Vec<f64>> {
    let nums = |v: &RawValue| -> Vec<f64> {
        match v {
            RawValue::Array(xs) => xs
                .iter()
                .map(|x| match x {
                    RawValue::Number(n) => *n,
                    _ => panic!("non-numeric embedding entry"),
                })
                .collect(),
            _ => panic!("embedding is not an array"),
        }
    };
    records
        .iter()
        .map(|r| match r.get(attr) {
            Some(RawValue::Object(o)) => nums(&o["vector"]),
            Some(v) => nums(v),
            None => panic!("record without embedding"),
        })
        .collect()
}

/// The record as the store reports it: every attribute present, nulls explicit,
/// and a missing list read as an empty one.
pub fn canonical_record(schema: &DatasetSchema, record: &RawRecord) -> RawRecord {
    let mut out = RawRecord::new();
    for a in &schema.attributes {
        let v = record.get(&a.name).cloned().unwrap_or(RawValue::Null);
        let v = match (a.kind, v) {
            (AttributeKind::List | AttributeKind::SpanList, RawValue::Null) => RawValue::Array(vec![]),
            (_, v) => v,
        };
        out.insert(a.name.clone(), v);
    }
    out
}
