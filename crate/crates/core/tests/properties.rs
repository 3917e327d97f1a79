use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use texture_core::embeddings::{cosine_distance, similar_to_document, similar_to_query};
use texture_core::ingest::tokenize_words;
use texture_core::query::{PageRequest, Predicate, SelectionState, SortSpec, Summary, SummaryOptions};
use texture_core::schema::{infer_data_type, AttributeKind, DataType};
use texture_core::text::fold;
use texture_core::{
    compute_highlights, merge_ranges, normalize_dataset, reassemble_document, validate_schema,
    DerivedSet, Engine, HashedEmbedder, HighlightRange, NormalizedStore, QueryError, RawRecord, RawValue,
    Scalar,
};
use texture_testkit::corpus::{random_corpus, random_selection, Corpus, CorpusConfig};
use texture_testkit::oracle::{self, Oracle};
use texture_testkit::rng;

fn build(corpus: &Corpus) -> NormalizedStore {
    let schema = validate_schema(corpus.schema.clone()).unwrap();
    normalize_dataset(&corpus.records, &schema).unwrap()
}

fn selection(predicates: &[Predicate]) -> SelectionState {
    SelectionState::from_parts(predicates.to_vec(), vec![]).unwrap()
}

fn small() -> CorpusConfig {
    CorpusConfig {
        max_docs: 80,
        ..CorpusConfig::default()
    }
}

fn series_pairs(summary: &Summary) -> Vec<(String, u64)> {
    match summary {
        Summary::Series { labels, counts, .. } => {
            labels.iter().cloned().zip(counts.iter().copied()).collect()
        }
        other => panic!("expected series, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_matches_full_scan(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, &small());
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let oracle = Oracle::new(&corpus.schema, &corpus.records);
        for _ in 0..3 {
            let preds = random_selection(&mut r, &corpus);
            let s = selection(&preds);
            prop_assert_eq!(engine.select(&s).unwrap().to_vec(), oracle.matching(&preds, None));
            for attr in ["topic", "tags", "word"] {
                let offset = r.random_range(0..3);
                let k = r.random_range(1..12);
                let got = engine.summarize_categorical_page(attr, &s, offset, k).unwrap();
                let (want, distinct) = oracle.bars(attr, &preds, offset, k);
                prop_assert_eq!(got.bars().unwrap(), want);
                let Summary::Bars { total_distinct, .. } = got.summary else { unreachable!() };
                prop_assert_eq!(total_distinct, distinct);
            }
            let bin_count = r.random_range(1..25);
            match oracle.bins("score", &preds, bin_count) {
                None => prop_assert!(engine.summarize_quantitative("score", &s, bin_count).is_err()),
                Some((edges, counts)) => {
                    let got = engine.summarize_quantitative("score", &s, bin_count).unwrap();
                    prop_assert_eq!(got.summary, Summary::Bins { edges, counts });
                }
            }
            let got = engine.summarize_temporal("year", &s).unwrap();
            prop_assert_eq!(series_pairs(&got.summary), oracle.series("year", &preds));

            let sort = match r.random_range(0..7) {
                0 => Some(("topic", false)),
                1 => Some(("topic", true)),
                2 => Some(("year", false)),
                3 => Some(("year", true)),
                4 => Some(("score", false)),
                5 => Some(("score", true)),
                _ => None,
            };
            let request = PageRequest {
                sort: sort.map(|(a, desc)| if desc { SortSpec::desc(a) } else { SortSpec::asc(a) }),
                offset: r.random_range(0..5),
                limit: r.random_range(0..60),
            };
            let page = engine.document_page(&s, &request).unwrap();
            let order = oracle.page_order(&preds, sort);
            prop_assert_eq!(page.total_matching, order.len());
            let want: Vec<u32> = order.into_iter().skip(request.offset).take(request.limit).collect();
            prop_assert_eq!(page.doc_ids(), want);
        }
    }

    #[test]
    fn adding_a_predicate_never_grows_the_match(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, &small());
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let preds = random_selection(&mut r, &corpus);
        let mut previous = store.n_docs();
        for i in 0..=preds.len() {
            let total = engine
                .document_page(&selection(&preds[..i]), &PageRequest::default())
                .unwrap()
                .total_matching;
            prop_assert!(total <= previous);
            previous = total;
        }
    }

    #[test]
    fn document_counts_never_exceed_corpus_size(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, &small());
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let n = store.n_docs() as u64;
        let s = selection(&random_selection(&mut r, &corpus));
        prop_assert!(engine.select(&s).unwrap().len() as u64 <= n);
        let topic = engine.summarize_categorical("topic", &s, usize::MAX).unwrap();
        prop_assert!(topic.bars().unwrap().iter().map(|b| b.1).sum::<u64>() <= n);
        let year = engine.summarize_temporal("year", &s).unwrap();
        prop_assert!(year.counts().iter().sum::<u64>() <= n);
        if let Ok(score) = engine.summarize_quantitative("score", &s, 7) {
            prop_assert!(score.counts().iter().sum::<u64>() <= n);
        }
        // Fan-out: a document with many matching words still counts once.
        let words = selection(&[Predicate::values("word", ["data", "a", "won"])]);
        let page = engine.document_page(&words, &PageRequest::default()).unwrap();
        prop_assert!(page.total_matching as u64 <= n);
        let distinct: BTreeSet<u32> = engine.select(&words).unwrap().iter().collect();
        prop_assert_eq!(distinct.len(), page.total_matching);
    }

    #[test]
    fn own_predicate_is_excluded_from_its_chart(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, &small());
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let options = SummaryOptions { k: 50, offset: 0, bin_count: 9 };
        for p in random_selection(&mut r, &corpus) {
            if p.attribute == "text" {
                continue;
            }
            let alone = selection(std::slice::from_ref(&p));
            let empty = SelectionState::new();
            let a = engine.summarize(&p.attribute, &alone, &options);
            let b = engine.summarize(&p.attribute, &empty, &options);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn summaries_are_deterministic_and_edges_selection_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, &small());
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let s = selection(&random_selection(&mut r, &corpus));
        let attrs: Vec<String> = ["topic", "year", "score", "tags", "word"].map(String::from).to_vec();
        let options = SummaryOptions::default();
        let once = engine.summarize_many(&attrs, &s, &options);
        let twice = engine.summarize_many(&attrs, &s, &options);
        let json = |x: &Result<_, _>| x.as_ref().ok().map(|m| serde_json::to_string(m).unwrap());
        prop_assert_eq!(json(&once), json(&twice));
        prop_assert_eq!(once.as_ref().err(), twice.as_ref().err());
        if let Ok(many) = once {
            let empty_bins = Summary::Bins { edges: vec![], counts: vec![] };
            for a in &attrs {
                match engine.summarize(a, &s, &options) {
                    Ok(single) => prop_assert_eq!(&many[a], &single),
                    Err(QueryError::AllNull(_)) => prop_assert_eq!(&many[a].summary, &empty_bins),
                    Err(e) => prop_assert!(false, "single summary failed: {e}"),
                }
            }
            match engine.summarize("score", &SelectionState::new(), &options) {
                Ok(unfiltered) => match (&many["score"].summary, &unfiltered.summary) {
                    (Summary::Bins { edges: a, .. }, Summary::Bins { edges: b, .. }) => prop_assert_eq!(a, b),
                    _ => prop_assert!(false, "score is quantitative"),
                },
                Err(e) => {
                    prop_assert_eq!(e, QueryError::AllNull("score".into()));
                    prop_assert_eq!(&many["score"].summary, &empty_bins);
                }
            }
        }
        if let Ok(Summary::Bars { rows, .. }) = engine.summarize("word", &s, &options).map(|x| x.summary) {
            for w in rows.windows(2) {
                prop_assert!(w[0].count > w[1].count || (w[0].count == w[1].count && w[0].value < w[1].value));
            }
        }
    }

    #[test]
    fn projection_flags_equal_matching_documents(seed in any::<u64>()) {
        let mut r = rng(seed);
        let config = CorpusConfig {
            max_docs: 60,
            embedding_dim: Some(r.random_range(2..8)),
            with_projection: r.random_bool(0.5),
            ..CorpusConfig::default()
        };
        let corpus = random_corpus(&mut r, &config);
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let s = selection(&random_selection(&mut r, &corpus));
        let matching: BTreeSet<u32> = engine.select(&s).unwrap().iter().collect();
        match engine.projection_points(&s, Some("topic")) {
            Ok(points) => {
                prop_assert_eq!(points.len(), store.n_docs());
                for p in points {
                    prop_assert_eq!(p.selected, matching.contains(&p.doc_id));
                }
            }
            // PCA needs two documents.
            Err(e) => prop_assert!(store.n_docs() < 2, "{e}"),
        }
    }

    #[test]
    fn highlights_are_matching_stored_spans(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = random_corpus(&mut r, &small());
        let store = build(&corpus);
        let oracle = Oracle::new(&corpus.schema, &corpus.records);
        let preds = random_selection(&mut r, &corpus);
        let s = selection(&preds);
        let table = store.child_table("word").unwrap();
        for doc in 0..store.n_docs() as u32 {
            let got = compute_highlights(&store, doc, &s).unwrap();
            let want: Vec<HighlightRange> = oracle
                .highlights(doc as usize, &preds)
                .into_iter()
                .map(|(a, b, attr)| HighlightRange::new(a, b, &attr))
                .collect();
            prop_assert_eq!(&got, &want);
            let text = store.text("text", doc).unwrap();
            let stored: BTreeSet<(u32, u32)> =
                table.rows_of(doc).filter_map(|row| table.span(row)).collect();
            for h in got.iter().filter(|h| h.attribute == "word") {
                prop_assert!(stored.contains(&(h.start, h.end)));
                let slice: String = text.chars().skip(h.start as usize).take((h.end - h.start) as usize).collect();
                let row = table.rows_of(doc).find(|&row| table.span(row) == Some((h.start, h.end))).unwrap();
                let value = table.values().value(row).unwrap().to_text();
                prop_assert_eq!(fold(&slice), fold(&value));
            }
        }
    }

    #[test]
    fn merge_ranges_is_idempotent_and_order_insensitive(
        raw in prop::collection::vec((0u32..40, 1u32..8, 0usize..2), 0..12),
        shuffle in any::<u64>(),
    ) {
        let ranges: Vec<HighlightRange> = raw
            .iter()
            .map(|&(s, len, a)| HighlightRange::new(s, s + len, ["word", "text"][a]))
            .collect();
        let merged = merge_ranges(&ranges);
        prop_assert_eq!(merge_ranges(&merged), merged.clone());
        let mut shuffled = ranges.clone();
        let mut r = rng(shuffle);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        prop_assert_eq!(merge_ranges(&shuffled), merged.clone());
        for a in ["word", "text"] {
            let mine: Vec<_> = merged.iter().filter(|m| m.attribute == a).collect();
            for w in mine.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for orig in ranges.iter().filter(|x| x.attribute == a) {
                prop_assert!(mine.iter().any(|m| m.start <= orig.start && orig.end <= m.end));
            }
        }
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 1..16),
        b_seed in any::<u64>(),
        k in 0.001f64..1000.0,
    ) {
        prop_assume!(a.iter().any(|x| *x != 0.0));
        let mut r = rng(b_seed);
        let b: Vec<f64> = a.iter().map(|_| r.random_range(-10.0..10.0)).collect();
        prop_assume!(b.iter().any(|x| *x != 0.0));
        let ab = cosine_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, cosine_distance(&b, &a).unwrap());
        let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
        prop_assert!((cosine_distance(&ka, &b).unwrap() - ab).abs() <= 1e-12);
        prop_assert!((0.0..=2.0).contains(&ab));
        prop_assert!((ab - oracle::cosine_distance(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn normalize_then_reassemble_is_lossless(seed in any::<u64>()) {
        let mut r = rng(seed);
        let config = CorpusConfig {
            max_docs: 40,
            embedding_dim: r.random_bool(0.5).then_some(4),
            with_projection: r.random_bool(0.5),
            ..CorpusConfig::default()
        };
        let corpus = random_corpus(&mut r, &config);
        let store = build(&corpus);
        prop_assert_eq!(store.n_docs(), corpus.records.len());
        for (i, original) in corpus.records.iter().enumerate() {
            let back = reassemble_document(&store, i as u32).unwrap();
            prop_assert_eq!(back, oracle::canonical_record(&corpus.schema, original));
        }
        let child_rows: usize = corpus
            .records
            .iter()
            .map(|rec| oracle_len(rec, "tags") + oracle_len(rec, "word"))
            .sum();
        prop_assert_eq!(
            store.child_table("tags").unwrap().len() + store.child_table("word").unwrap().len(),
            child_rows
        );
    }

    #[test]
    fn similarity_matches_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let config = CorpusConfig {
            max_docs: 40,
            embedding_dim: Some(r.random_range(1..16)),
            ..CorpusConfig::default()
        };
        let corpus = random_corpus(&mut r, &config);
        prop_assume!(!corpus.records.is_empty());
        let store = build(&corpus);
        let vectors = oracle::vectors(&corpus.records, "embedding");
        let anchor = r.random_range(0..vectors.len());
        let column = similar_to_document(&store, anchor as u32).unwrap();
        prop_assert_eq!(column.values[anchor], 0.0);
        for (i, v) in vectors.iter().enumerate() {
            prop_assert!((column.values[i] - oracle::cosine_distance(&vectors[anchor], v)).abs() <= 1e-9);
            prop_assert!(column.values[i] >= 0.0);
        }
        let dim = vectors[0].len();
        let embedder = HashedEmbedder::new(dim);
        let q = similar_to_query(&store, "data analysis won", &embedder).unwrap();
        let again = similar_to_query(&store, "data analysis won", &embedder).unwrap();
        prop_assert_eq!(&q, &again);
        let qv = texture_core::Embedder::embed(&embedder, "data analysis won").unwrap();
        for (i, v) in vectors.iter().enumerate() {
            prop_assert!((q.values[i] - oracle::cosine_distance(&qv, v)).abs() <= 1e-9);
        }
        // Sorting by the column puts the anchor first unless it has an exact duplicate.
        let handle = column.handle.clone();
        let derived: DerivedSet = [Arc::new(column)].into_iter().collect();
        let e = Engine::with_derived(&store, &derived);
        let page = e
            .document_page(&SelectionState::new(), &PageRequest { sort: Some(SortSpec::asc(&handle)), ..PageRequest::default() })
            .unwrap();
        let first = page.doc_ids()[0] as usize;
        prop_assert!(first == anchor || oracle::cosine_distance(&vectors[anchor], &vectors[first]).abs() < 1e-12);
    }

    #[test]
    fn tokens_are_ordered_and_fold_to_their_slices(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (text, _) = texture_testkit::corpus::random_text(&mut r, 40);
        let tokens = tokenize_words(&text);
        let chars: Vec<char> = text.chars().collect();
        for w in tokens.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for t in &tokens {
            prop_assert!(t.start < t.end && t.end as usize <= chars.len());
            let slice: String = chars[t.start as usize..t.end as usize].iter().collect();
            prop_assert_eq!(slice.to_lowercase(), t.value.clone());
        }
    }

    #[test]
    fn inference_respects_failed_parses(values in prop::collection::vec("[a-z0-9.\\-]{1,6}", 1..8)) {
        let sample: Vec<Scalar> = values.iter().map(|v| Scalar::from(v.as_str())).collect();
        let dt = infer_data_type(&sample).unwrap();
        if values.iter().any(|v| v.trim().parse::<f64>().is_err()) {
            prop_assert_ne!(dt, DataType::Quantitative);
        }
        if dt == DataType::Temporal {
            prop_assert!(sample.iter().all(|s| texture_core::temporal::parse_scalar(s).is_some()));
        }
    }
}

fn oracle_len(record: &RawRecord, attr: &str) -> usize {
    match record.get(attr) {
        Some(RawValue::Array(items)) => items.len(),
        _ => 0,
    }
}

#[test]
fn validation_is_idempotent() {
    let mut r = rng(7);
    for _ in 0..20 {
        let corpus = random_corpus(&mut r, &small());
        let once = validate_schema(corpus.schema.clone()).unwrap();
        let twice = validate_schema(once.as_schema().clone()).unwrap();
        assert_eq!(once.as_schema(), twice.as_schema());
        for a in once.attributes().iter().filter(|a| a.kind == AttributeKind::SpanList) {
            let source = once.get(a.span_source.as_deref().unwrap()).unwrap();
            assert_eq!(source.kind, AttributeKind::Text);
        }
    }
}
