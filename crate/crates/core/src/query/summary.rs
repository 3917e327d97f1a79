//! Chart summaries: top-k bars, fixed-extent histograms and calendar series.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use super::plan::{lookup, CrossFilter, DocSet};
use super::predicate::SelectionState;
use super::{Engine, QueryError};
use crate::schema::DataType;
use crate::store::{AttributeData, ValueColumn, NULL_CODE};
use crate::temporal::{self, Granularity};
use crate::value::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarRow {
    pub value: Scalar,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    /// Count descending, then value ascending.
    Bars {
        rows: Vec<BarRow>,
        /// Number of values with a non-zero count, for paging past `rows`.
        total_distinct: usize,
        offset: usize,
    },
    /// `counts.len() == edges.len() - 1`; bins are `[lo, hi)` except the last, which is closed.
    Bins { edges: Vec<f64>, counts: Vec<u64> },
    Series {
        granularity: Granularity,
        /// Bucket starts in epoch seconds.
        timestamps: Vec<i64>,
        labels: Vec<String>,
        counts: Vec<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryResult {
    pub attribute: String,
    #[serde(flatten)]
    pub summary: Summary,
}

impl SummaryResult {
    pub fn bars(&self) -> Option<Vec<(Scalar, u64)>> {
        match &self.summary {
            Summary::Bars { rows, .. } => {
                Some(rows.iter().map(|r| (r.value.clone(), r.count)).collect())
            }
            _ => None,
        }
    }

    pub fn counts(&self) -> &[u64] {
        match &self.summary {
            Summary::Bars { .. } => &[],
            Summary::Bins { counts, .. } | Summary::Series { counts, .. } => counts,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SummaryOptions {
    /// Bars returned per categorical chart.
    pub k: usize,
    /// First bar returned, for paging.
    pub offset: usize,
    pub bin_count: usize,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            k: 10,
            offset: 0,
            bin_count: 20,
        }
    }
}

/// Where a summarized value column lives.
enum Source<'s> {
    Main(&'s ValueColumn),
    Child(&'s ValueColumn, &'s [u32]),
    Derived(&'s [f64]),
}

impl<'a> Engine<'a> {
    fn source(&self, attribute: &str) -> Result<Source<'a>, QueryError> {
        if let Some(d) = self.derived.get(attribute) {
            return Ok(Source::Derived(&d.values));
        }
        let (_, _, data) = lookup(self.store, attribute)?;
        match data {
            AttributeData::Single(col) => Ok(Source::Main(col)),
            AttributeData::Child(t) => Ok(Source::Child(t.values(), t.doc_ids())),
            _ => Err(QueryError::WrongDataType {
                attribute: attribute.into(),
                expected: "a single-value, list or span-list attribute",
            }),
        }
    }

    fn own_exclusion_docs(
        &self,
        attribute: &str,
        selection: &SelectionState,
    ) -> Result<DocSet, QueryError> {
        let plan = self.compile_filter(selection, Some(attribute))?;
        Ok(self.matching_documents(&plan))
    }

    /// Top-k value counts. Single values count documents; list values count
    /// occurrences. The chart's own predicate is ignored.
    pub fn summarize_categorical(
        &self,
        attribute: &str,
        selection: &SelectionState,
        k: usize,
    ) -> Result<SummaryResult, QueryError> {
        self.summarize_categorical_page(attribute, selection, 0, k)
    }

    pub fn summarize_categorical_page(
        &self,
        attribute: &str,
        selection: &SelectionState,
        offset: usize,
        k: usize,
    ) -> Result<SummaryResult, QueryError> {
        let source = self.source(attribute)?;
        let docs = self.own_exclusion_docs(attribute, selection)?;
        bars(attribute, &source, &docs, offset, k)
    }

    /// Equal-width histogram over the unfiltered extent.
    pub fn summarize_quantitative(
        &self,
        attribute: &str,
        selection: &SelectionState,
        bin_count: usize,
    ) -> Result<SummaryResult, QueryError> {
        let source = self.source(attribute)?;
        let docs = self.own_exclusion_docs(attribute, selection)?;
        bins(attribute, &source, &docs, bin_count)
    }

    /// Counts per calendar bucket across the unfiltered extent, zero-filled.
    pub fn summarize_temporal(
        &self,
        attribute: &str,
        selection: &SelectionState,
    ) -> Result<SummaryResult, QueryError> {
        let source = self.source(attribute)?;
        let docs = self.own_exclusion_docs(attribute, selection)?;
        series(attribute, &source, &docs)
    }

    /// Summary chosen by the attribute's data type; derived columns are histograms.
    pub fn summarize(
        &self,
        attribute: &str,
        selection: &SelectionState,
        options: &SummaryOptions,
    ) -> Result<SummaryResult, QueryError> {
        let source = self.source(attribute)?;
        let docs = self.own_exclusion_docs(attribute, selection)?;
        summarize_source(attribute, &source, &docs, options)
    }

    /// Several summaries against one selection, sharing clause evaluation.
    ///
    /// An all-null quantitative attribute yields empty bins rather than failing the batch.
    pub fn summarize_many(
        &self,
        attributes: &[String],
        selection: &SelectionState,
        options: &SummaryOptions,
    ) -> Result<BTreeMap<String, SummaryResult>, QueryError> {
        let sources = attributes
            .iter()
            .map(|a| self.source(a))
            .collect::<Result<Vec<_>, _>>()?;
        let filter = CrossFilter::new(self, selection)?;
        let mut out = BTreeMap::new();
        for (attribute, source) in attributes.iter().zip(&sources) {
            let docs = filter.excluding(Some(attribute));
            let summary = match summarize_source(attribute, source, &docs, options) {
                Err(QueryError::AllNull(_)) => SummaryResult {
                    attribute: attribute.clone(),
                    summary: Summary::Bins {
                        edges: Vec::new(),
                        counts: Vec::new(),
                    },
                },
                other => other?,
            };
            out.insert(attribute.clone(), summary);
        }
        Ok(out)
    }
}

fn summarize_source(
    attribute: &str,
    source: &Source<'_>,
    docs: &DocSet,
    options: &SummaryOptions,
) -> Result<SummaryResult, QueryError> {
    let data_type = match source {
        Source::Main(c) | Source::Child(c, _) => c.data_type(),
        Source::Derived(_) => DataType::Quantitative,
    };
    match data_type {
        DataType::Categorical => bars(attribute, source, docs, options.offset, options.k),
        DataType::Quantitative => bins(attribute, source, docs, options.bin_count),
        DataType::Temporal => series(attribute, source, docs),
    }
}

/// Adds one to `counts[code]` for every non-null row whose document is in `docs`.
fn count_codes(codes: &[u32], row_docs: Option<&[u32]>, docs: &DocSet, counts: &mut [u64]) {
    let bits = docs.bits();
    match row_docs {
        None => {
            for doc in bits.ones() {
                let code = codes[doc];
                if code != NULL_CODE {
                    counts[code as usize] += 1;
                }
            }
        }
        Some(row_docs) => {
            for (&doc, &code) in row_docs.iter().zip(codes) {
                if code != NULL_CODE && bits.contains(doc as usize) {
                    counts[code as usize] += 1;
                }
            }
        }
    }
}

fn wrong(attribute: &str, expected: &'static str) -> QueryError {
    QueryError::WrongDataType {
        attribute: attribute.into(),
        expected,
    }
}

fn bars(
    attribute: &str,
    source: &Source<'_>,
    docs: &DocSet,
    offset: usize,
    k: usize,
) -> Result<SummaryResult, QueryError> {
    let (dict, codes, row_docs) = match source {
        Source::Main(ValueColumn::Categorical { dict, codes }) => (dict, codes, None),
        Source::Child(ValueColumn::Categorical { dict, codes }, row_docs) => {
            (dict, codes, Some(*row_docs))
        }
        _ => return Err(wrong(attribute, "categorical")),
    };
    let mut counts = vec![0u64; dict.len()];
    count_codes(codes, row_docs, docs, &mut counts);
    let mut ranked: Vec<(u32, u64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(code, &c)| (code as u32, c))
        .collect();
    // Dictionary codes are in value order, so code breaks count ties.
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total_distinct = ranked.len();
    let rows = ranked
        .into_iter()
        .skip(offset)
        .take(k)
        .map(|(code, count)| BarRow {
            value: dict.get(code).expect("code in dictionary").clone(),
            count,
        })
        .collect();
    Ok(SummaryResult {
        attribute: attribute.into(),
        summary: Summary::Bars {
            rows,
            total_distinct,
            offset,
        },
    })
}

/// Equal-width edges over `[min, max]`; the last edge is exactly `max`.
pub(crate) fn bin_edges(min: f64, max: f64, bin_count: usize) -> Vec<f64> {
    if min == max {
        return vec![min, max];
    }
    let width = (max - min) / bin_count as f64;
    let mut edges: Vec<f64> = (0..bin_count).map(|i| min + i as f64 * width).collect();
    edges.push(max);
    edges
}

pub(crate) fn bin_index(edges: &[f64], v: f64) -> usize {
    let last = edges.len() - 2;
    let width = edges[1] - edges[0];
    let mut i = if width > 0.0 {
        (((v - edges[0]) / width) as usize).min(last)
    } else {
        0
    };
    while i > 0 && v < edges[i] {
        i -= 1;
    }
    while i < last && v >= edges[i + 1] {
        i += 1;
    }
    i
}

fn bins(
    attribute: &str,
    source: &Source<'_>,
    docs: &DocSet,
    bin_count: usize,
) -> Result<SummaryResult, QueryError> {
    let (values, row_docs): (&[f64], Option<&[u32]>) = match source {
        Source::Main(ValueColumn::Quantitative { values }) => (values, None),
        Source::Child(ValueColumn::Quantitative { values }, row_docs) => (values, Some(row_docs)),
        Source::Derived(values) => (values, None),
        _ => return Err(wrong(attribute, "quantitative")),
    };
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values.iter().filter(|v| !v.is_nan()) {
        min = min.min(v);
        max = max.max(v);
    }
    if min > max {
        return Err(QueryError::AllNull(attribute.into()));
    }
    let edges = bin_edges(min, max, bin_count.max(1));
    let mut counts = vec![0u64; edges.len() - 1];
    let bits = docs.bits();
    let mut add = |v: f64| {
        if !v.is_nan() {
            counts[bin_index(&edges, v)] += 1;
        }
    };
    match row_docs {
        None => bits.ones().for_each(|doc| add(values[doc])),
        Some(row_docs) => {
            for (&doc, &v) in row_docs.iter().zip(values) {
                if bits.contains(doc as usize) {
                    add(v);
                }
            }
        }
    }
    Ok(SummaryResult {
        attribute: attribute.into(),
        summary: Summary::Bins { edges, counts },
    })
}

fn series(
    attribute: &str,
    source: &Source<'_>,
    docs: &DocSet,
) -> Result<SummaryResult, QueryError> {
    let (epochs, precision, codes, row_docs) = match source {
        Source::Main(ValueColumn::Temporal {
            epochs,
            precision,
            codes,
            ..
        }) => (epochs, *precision, codes, None),
        Source::Child(
            ValueColumn::Temporal {
                epochs,
                precision,
                codes,
                ..
            },
            row_docs,
        ) => (epochs, *precision, codes, Some(*row_docs)),
        _ => return Err(wrong(attribute, "temporal")),
    };
    let (Some(&min), Some(&max)) = (epochs.iter().min(), epochs.iter().max()) else {
        return Ok(SummaryResult {
            attribute: attribute.into(),
            summary: Summary::Series {
                granularity: Granularity::Year,
                timestamps: Vec::new(),
                labels: Vec::new(),
                counts: Vec::new(),
            },
        });
    };
    let granularity = temporal::choose_granularity(min, max, precision);
    let mut timestamps = Vec::new();
    let mut t = temporal::bucket_start(min, granularity);
    while t <= max {
        timestamps.push(t);
        t = temporal::next_bucket(t, granularity);
    }
    let mut per_code = vec![0u64; epochs.len()];
    count_codes(codes, row_docs, docs, &mut per_code);
    let mut counts = vec![0u64; timestamps.len()];
    for (code, &n) in per_code.iter().enumerate() {
        if n > 0 {
            let bucket = timestamps.partition_point(|&s| s <= epochs[code]) - 1;
            counts[bucket] += n;
        }
    }
    let labels = timestamps
        .iter()
        .map(|&s| temporal::bucket_label(s, granularity))
        .collect();
    Ok(SummaryResult {
        attribute: attribute.into(),
        summary: Summary::Series {
            granularity,
            timestamps,
            labels,
            counts,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_end_exactly_at_max() {
        assert_eq!(bin_edges(0.1, 0.9, 2), vec![0.1, 0.5, 0.9]);
        let e = bin_edges(0.0, 1.0, 3);
        assert_eq!(e.len(), 4);
        assert_eq!(e[3], 1.0);
    }

    #[test]
    fn degenerate_extent_is_one_bin() {
        assert_eq!(bin_edges(4.0, 4.0, 20), vec![4.0, 4.0]);
        assert_eq!(bin_index(&[4.0, 4.0], 4.0), 0);
    }

    #[test]
    fn bins_are_half_open_except_the_last() {
        let e = bin_edges(0.1, 0.9, 2);
        assert_eq!(bin_index(&e, 0.1), 0);
        assert_eq!(bin_index(&e, 0.3), 0);
        assert_eq!(bin_index(&e, 0.5), 1);
        assert_eq!(bin_index(&e, 0.9), 1);
        let e = bin_edges(0.0, 0.3, 3);
        for (v, want) in [(0.0, 0), (0.1, 1), (0.2, 2), (0.3, 2)] {
            let i = bin_index(&e, v);
            assert_eq!(i, want, "{v}");
            assert!(e[i] <= v && (v < e[i + 1] || i == 2));
        }
    }
}
