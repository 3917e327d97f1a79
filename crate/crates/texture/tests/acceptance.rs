//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use texture::store_dir::{load_store, save_store};
use texture_core::embeddings::{cosine_distance, similar_to_document, similar_to_query};
use texture_core::query::{
    PageRequest, Predicate, SelectionState, SortSpec, Summary, SummaryOptions, Test,
};
use texture_core::text::fold;
use texture_core::{
    compute_highlights, normalize_dataset, reassemble_document, validate_schema, DerivedSet,
    Embedder, Engine, HashedEmbedder, HighlightRange, NormalizedStore, RawValue, Scalar,
};
use texture_testkit::corpus::{
    random_corpus, random_selection, scale_corpus, scale_word, Corpus, CorpusConfig, ScaleConfig,
};
use texture_testkit::oracle::{self, canonical_record, Oracle};
use texture_testkit::{fixture6, rng};

const ORACLE_CASES: u64 = 500;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const HIGHLIGHT_DOCS: usize = 1000;
const ROUND_TRIP_DATASETS: u64 = 100;
const SIMILARITY_TOLERANCE: f64 = 1e-9;
const SCALE_TOLERANCE: f64 = 1e-12;
const INVARIANT_CASES: u64 = 300;
const REFRESH_P95_BUDGET: Duration = Duration::from_millis(250);
const COLD_LOAD_BUDGET: Duration = Duration::from_secs(10);
const REFRESH_SAMPLES: usize = 40;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn build(corpus: &Corpus) -> NormalizedStore {
    normalize_dataset(&corpus.records, &validate_schema(corpus.schema.clone()).unwrap()).unwrap()
}

fn selection(predicates: &[Predicate]) -> SelectionState {
    SelectionState::from_parts(predicates.to_vec(), vec![]).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let config = CorpusConfig::default();
    let mut checks = 0usize;
    for case in 0..ORACLE_CASES {
        let mut r = rng(10_000 + case);
        let corpus = random_corpus(&mut r, &config);
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let oracle = Oracle::new(&corpus.schema, &corpus.records);
        let preds = random_selection(&mut r, &corpus);
        let s = selection(&preds);
        let ctx = |what: &str| format!("case {case} ({} docs, {preds:?}): {what}", store.n_docs());

        ensure!(engine.select(&s).unwrap().to_vec() == oracle.matching(&preds, None), "{}", ctx("matching documents"));
        for attr in ["topic", "tags", "word"] {
            let (offset, k) = (r.random_range(0..3), r.random_range(1..15));
            let got = engine.summarize_categorical_page(attr, &s, offset, k).unwrap();
            let (want, distinct) = oracle.bars(attr, &preds, offset, k);
            ensure!(got.bars().unwrap() == want, "{}", ctx(&format!("{attr} bars")));
            let Summary::Bars { total_distinct, .. } = got.summary else { unreachable!() };
            ensure!(total_distinct == distinct, "{}", ctx(&format!("{attr} distinct count")));
        }
        let bin_count = r.random_range(1..=30);
        match oracle.bins("score", &preds, bin_count) {
            None => ensure!(engine.summarize_quantitative("score", &s, bin_count).is_err(), "{}", ctx("all-null score")),
            Some((edges, counts)) => {
                let got = engine.summarize_quantitative("score", &s, bin_count).unwrap();
                ensure!(got.summary == Summary::Bins { edges, counts }, "{}", ctx("score bins"));
            }
        }
        let got = engine.summarize_temporal("year", &s).unwrap();
        let Summary::Series { labels, counts, .. } = got.summary else { unreachable!() };
        let pairs: Vec<(String, u64)> = labels.into_iter().zip(counts).collect();
        ensure!(pairs == oracle.series("year", &preds), "{}", ctx("year series"));

        let sort = [None, Some(("topic", false)), Some(("year", true)), Some(("score", false)), Some(("score", true))]
            [r.random_range(0..5)];
        let request = PageRequest {
            sort: sort.map(|(a, desc)| if desc { SortSpec::desc(a) } else { SortSpec::asc(a) }),
            offset: r.random_range(0..10),
            limit: r.random_range(1..80),
        };
        let page = engine.document_page(&s, &request).unwrap();
        let order = oracle.page_order(&preds, sort);
        ensure!(page.total_matching == order.len(), "{}", ctx("page total"));
        let want: Vec<u32> = order.into_iter().skip(request.offset).take(request.limit).collect();
        ensure!(page.doc_ids() == want, "{}", ctx("page order"));
        checks += 7;
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < ORACLE_BUDGET, "took {elapsed:?}, budget {ORACLE_BUDGET:?}");
    Ok(format!("{ORACLE_CASES} cases, {checks} comparisons, {:.1}s", elapsed.as_secs_f64()))
}

fn bars_of(store: &NormalizedStore, attr: &str, s: &SelectionState, k: usize) -> Vec<(Scalar, u64)> {
    Engine::new(store).summarize_categorical(attr, s, k).unwrap().bars().unwrap()
}

fn fixture_goldens() -> Outcome {
    let store = fixture6();
    let e = Engine::new(&store);
    let none = SelectionState::new();
    let mut n = 0;
    let mut golden = |ok: bool, what: &str| -> Result<(), String> {
        n += 1;
        if ok { Ok(()) } else { Err(format!("{what} differs")) }
    };
    let b = |pairs: &[(&str, u64)]| pairs.iter().map(|(v, c)| (Scalar::from(*v), *c)).collect::<Vec<_>>();

    golden(bars_of(&store, "word", &none, 3) == b(&[("data", 5), ("analysis", 2), ("drawing", 1)]), "word bars")?;
    let words = selection(&[Predicate::values("word", ["data", "analysis"])]);
    let both = words.clone().with(Predicate::range("year", 2015, 2016)).unwrap();
    golden(e.select(&both).unwrap().to_vec() == vec![0, 1, 5], "word and year filter")?;
    golden(e.select(&words).unwrap().to_vec() == vec![0, 1, 4, 5], "word filter")?;
    let series = e.summarize_temporal("year", &words).unwrap();
    golden(series.counts() == [1, 2, 1], "year series under word filter")?;
    golden(e.summarize_temporal("year", &none).unwrap().counts() == [2, 2, 2], "unfiltered year series")?;
    let bins = e.summarize_quantitative("score", &none, 2).unwrap();
    golden(bins.summary == Summary::Bins { edges: vec![0.1, 0.5, 0.9], counts: vec![2, 4] }, "score bins")?;
    let vis = selection(&[Predicate::equals("topic", "vis")]);
    golden(e.summarize_quantitative("score", &vis, 2).unwrap().counts() == [1, 2], "score bins under topic")?;
    golden(bars_of(&store, "word", &vis, 1) == b(&[("data", 4)]), "word bars under topic")?;
    golden(bars_of(&store, "topic", &words, 10) == b(&[("ml", 2), ("vis", 2)]), "topic bars under word filter")?;
    let page = e
        .document_page(&none, &PageRequest { sort: Some(SortSpec::desc("score")), offset: 0, limit: 2 })
        .unwrap();
    golden(page.doc_ids() == vec![2, 4] && page.total_matching == 6, "score-sorted page")?;
    let Summary::Bars { total_distinct, .. } = e.summarize_categorical("word", &none, 3).unwrap().summary else {
        unreachable!()
    };
    golden(total_distinct == 13, "distinct word count")?;
    for (q, want) in [("graph", vec![2, 4]), ("GRAPH", vec![2, 4]), ("zzz", vec![])] {
        let s = selection(&[Predicate::substring("text", q, false)]);
        golden(e.select(&s).unwrap().to_vec() == want, &format!("search {q}"))?;
    }
    golden(reassemble_document(&store, 3).unwrap() == texture_testkit::fixture6_records()[3], "reassembled doc 3")?;
    Ok(format!("{n} golden values"))
}

fn highlights() -> Outcome {
    let store = fixture6();
    let won = selection(&[Predicate::equals("word", "won")]);
    let got = compute_highlights(&store, 3, &won).unwrap();
    ensure!(got == vec![HighlightRange::new(3, 6, "word")], "doc 3 with word=won gave {got:?}");

    let mut checked_docs = 0usize;
    let mut checked_ranges = 0usize;
    let mut seed = 0u64;
    while checked_docs < HIGHLIGHT_DOCS {
        let mut r = rng(20_000 + seed);
        seed += 1;
        let corpus = random_corpus(&mut r, &CorpusConfig { max_docs: 60, ..CorpusConfig::default() });
        let store = build(&corpus);
        let oracle = Oracle::new(&corpus.schema, &corpus.records);
        let table = store.child_table("word").unwrap();
        for doc in 0..store.n_docs() as u32 {
            if checked_docs == HIGHLIGHT_DOCS {
                break;
            }
            // A word predicate on every doc, plus whatever else the generator picks.
            let mut preds: Vec<Predicate> = random_selection(&mut r, &corpus)
                .into_iter()
                .filter(|p| p.attribute != "word")
                .collect();
            let word_test = match r.random_range(0..3) {
                0 => Test::Substring {
                    query: ["won", "DAT", "graph", "é", "über", "a"][r.random_range(0..6)].into(),
                    case_sensitive: false,
                },
                _ => Test::ValueSet {
                    values: table.rows_of(doc).filter_map(|row| table.values().value(row)).take(2).collect::<Vec<_>>()
                        .into_iter()
                        .chain([Scalar::from("won")])
                        .collect(),
                },
            };
            preds.push(Predicate { attribute: "word".into(), test: word_test });
            let s = selection(&preds);
            let got = compute_highlights(&store, doc, &s).unwrap();
            let want: Vec<HighlightRange> = oracle
                .highlights(doc as usize, &preds)
                .into_iter()
                .map(|(a, b, attr)| HighlightRange::new(a, b, &attr))
                .collect();
            ensure!(got == want, "seed {seed} doc {doc}: {got:?} vs {want:?}");
            let text = store.text("text", doc).unwrap();
            for h in got.iter().filter(|h| h.attribute == "word") {
                let slice: String = text.chars().skip(h.start as usize).take((h.end - h.start) as usize).collect();
                let row = table.rows_of(doc).find(|&row| table.span(row) == Some((h.start, h.end)));
                let value = row.and_then(|row| table.values().value(row)).map(|v| v.to_text());
                ensure!(value.as_deref().map(fold) == Some(fold(&slice)), "seed {seed} doc {doc}: slice {slice:?} vs {value:?}");
                checked_ranges += 1;
            }
            checked_docs += 1;
        }
    }
    Ok(format!("won on doc 3 is [3,6); {checked_docs} random docs, {checked_ranges} word ranges"))
}

fn round_trip() -> Outcome {
    let (mut empty_lists, mut nulls, mut unicode) = (0, 0, 0);
    for i in 0..ROUND_TRIP_DATASETS {
        let mut r = rng(30_000 + i);
        let config = CorpusConfig {
            max_docs: 80,
            embedding_dim: (i % 3 == 0).then_some(1 + (i as usize % 7)),
            with_projection: i % 2 == 0,
            ..CorpusConfig::default()
        };
        let corpus = random_corpus(&mut r, &config);
        let store = build(&corpus);
        ensure!(store.n_docs() == corpus.records.len(), "dataset {i}: document count");
        for (doc, original) in corpus.records.iter().enumerate() {
            let back = reassemble_document(&store, doc as u32).unwrap();
            ensure!(back == canonical_record(&corpus.schema, original), "dataset {i} doc {doc} differs");
            for (attr, v) in original {
                match v {
                    RawValue::Null => nulls += 1,
                    RawValue::Array(a) if a.is_empty() => empty_lists += 1,
                    RawValue::Array(a) if a.contains(&RawValue::Null) => nulls += 1,
                    RawValue::String(s) if attr == "text" && !s.is_ascii() => unicode += 1,
                    _ => {}
                }
            }
        }
    }
    ensure!(empty_lists > 0 && nulls > 0 && unicode > 0, "coverage: {empty_lists} empty lists, {nulls} nulls, {unicode} unicode texts");
    Ok(format!("{ROUND_TRIP_DATASETS} datasets; {empty_lists} empty lists, {nulls} nulls, {unicode} non-ASCII texts"))
}

fn similarity() -> Outcome {
    let mut worst = 0f64;
    let mut largest = (0, 0);
    let mut checked = 0usize;
    let shapes = [(1000, 64), (1000, 1), (500, 32), (200, 64), (50, 3), (2, 2)];
    for (i, &(n, dim)) in shapes.iter().enumerate() {
        let mut r = rng(40_000 + i as u64);
        // Records are independent, so truncating an oversized corpus gives exactly `n` docs.
        let mut corpus = loop {
            let c = random_corpus(&mut r, &CorpusConfig { max_docs: 2 * n, max_tokens: 5, embedding_dim: Some(dim), ..CorpusConfig::default() });
            if c.records.len() >= n {
                break c;
            }
        };
        corpus.records.truncate(n);
        let store = build(&corpus);
        largest = largest.max((store.n_docs(), dim));
        let vectors = oracle::vectors(&corpus.records, "embedding");
        for _ in 0..5 {
            let anchor = r.random_range(0..vectors.len());
            let column = similar_to_document(&store, anchor as u32).unwrap();
            ensure!(column.values[anchor] == 0.0, "anchor {anchor} distance {}", column.values[anchor]);
            for (j, v) in vectors.iter().enumerate() {
                let err = (column.values[j] - oracle::cosine_distance(&vectors[anchor], v)).abs();
                worst = worst.max(err);
                ensure!(err <= SIMILARITY_TOLERANCE, "{n}x{dim}: doc {j} off by {err:e}");
                checked += 1;
            }
        }
        let embedder = HashedEmbedder::new(dim);
        for q in ["data analysis", "won the match", "日本語 café"] {
            let column = similar_to_query(&store, q, &embedder).unwrap();
            let qv = embedder.embed(q).unwrap();
            for (j, v) in vectors.iter().enumerate() {
                let err = (column.values[j] - oracle::cosine_distance(&qv, v)).abs();
                worst = worst.max(err);
                ensure!(err <= SIMILARITY_TOLERANCE, "{n}x{dim} query {q:?}: doc {j} off by {err:e}");
                checked += 1;
            }
        }
        for _ in 0..200 {
            let a = &vectors[r.random_range(0..vectors.len())];
            let b = &vectors[r.random_range(0..vectors.len())];
            let k = 10f64.powf(r.random_range(-3.0..3.0));
            let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
            let d = (cosine_distance(&ka, b).unwrap() - cosine_distance(a, b).unwrap()).abs();
            ensure!(d <= SCALE_TOLERANCE, "scaling by {k} moved distance by {d:e}");
        }
    }
    ensure!(largest == (1000, 64), "largest corpus was {largest:?}");
    Ok(format!("{checked} distances up to {}x{}, worst error {worst:.1e}", largest.0, largest.1))
}

fn invariants() -> Outcome {
    let options = SummaryOptions { k: 100, offset: 0, bin_count: 11 };
    for case in 0..INVARIANT_CASES {
        let mut r = rng(50_000 + case);
        let corpus = random_corpus(&mut r, &CorpusConfig::default());
        let store = build(&corpus);
        let engine = Engine::new(&store);
        let n = store.n_docs();
        let preds = random_selection(&mut r, &corpus);
        let mut previous = n;
        for i in 0..=preds.len() {
            let s = selection(&preds[..i]);
            let total = engine.document_page(&s, &PageRequest::default()).unwrap().total_matching;
            ensure!(total <= previous, "case {case}: {i} predicates matched {total} > {previous}");
            previous = total;
            for attr in ["topic", "year", "score"] {
                if let Ok(summary) = engine.summarize(attr, &s, &options) {
                    let sum: u64 = match &summary.summary {
                        Summary::Bars { rows, .. } => rows.iter().map(|b| b.count).sum(),
                        other => summary_counts(other).iter().sum(),
                    };
                    ensure!(sum as usize <= n, "case {case}: {attr} counts {sum} documents of {n}");
                }
            }
        }
        // Fan-out: many matching child rows per document still count the document once.
        let wide = selection(&[Predicate::values("word", ["data", "a", "won", "the"])]);
        let docs: BTreeSet<u32> = engine.select(&wide).unwrap().iter().collect();
        let page = engine.document_page(&wide, &PageRequest::default()).unwrap();
        ensure!(page.total_matching == docs.len() && docs.len() <= n, "case {case}: fan-out counted rows");
        for p in &preds {
            if p.attribute == "text" {
                continue;
            }
            let alone = engine.summarize(&p.attribute, &selection(std::slice::from_ref(p)), &options);
            let empty = engine.summarize(&p.attribute, &SelectionState::new(), &options);
            ensure!(alone == empty, "case {case}: {} chart changed under its own predicate", p.attribute);
        }
    }
    Ok(format!("{INVARIANT_CASES} cases"))
}

fn summary_counts(s: &Summary) -> Vec<u64> {
    match s {
        Summary::Bars { rows, .. } => rows.iter().map(|b| b.count).collect(),
        Summary::Bins { counts, .. } | Summary::Series { counts, .. } => counts.clone(),
    }
}

fn percentile(samples: &mut [Duration], p: f64) -> Duration {
    samples.sort();
    let rank = ((p * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    samples[rank - 1]
}

fn performance() -> Outcome {
    let config = ScaleConfig::default();
    let started = Instant::now();
    let corpus = scale_corpus(&mut rng(60_000), &config);
    let generated = started.elapsed();
    let store = build(&corpus).with_tokenized("text", "word").unwrap();
    drop(corpus);
    let ingested = started.elapsed() - generated;
    let spans = store.child_table("word").unwrap().len();
    ensure!(spans == config.n_docs * config.tokens_per_doc, "expected {} span rows, got {spans}", config.n_docs * config.tokens_per_doc);

    let dir = tempfile::tempdir().unwrap();
    save_store(&store, dir.path()).unwrap();
    drop(store);
    let load_started = Instant::now();
    let store = load_store(dir.path()).unwrap();
    let cold_load = load_started.elapsed();

    let mut r = rng(60_001);
    let attrs: Vec<String> = store
        .schema()
        .attributes()
        .iter()
        .filter(|a| a.kind.carries_data_type())
        .map(|a| a.name.clone())
        .collect();
    let similar = similar_to_document(&store, 0).unwrap();
    let handle = similar.handle.clone();
    let derived: DerivedSet = [Arc::new(similar)].into_iter().collect();
    let engine = Engine::with_derived(&store, &derived);
    let mut samples = Vec::with_capacity(REFRESH_SAMPLES);
    let mut matched = 0usize;
    for i in 0..REFRESH_SAMPLES {
        let mut preds = vec![Predicate::values(
            "word",
            (0..r.random_range(1..4)).map(|_| scale_word(r.random_range(0..300))),
        )];
        if i % 2 == 0 {
            preds.push(Predicate::values("topic", ["topic-01", "topic-07", "topic-13"]));
        }
        if i % 3 == 0 {
            preds.push(Predicate::range("year", "2002-01-01", "2006-06-30"));
        }
        if i % 4 == 0 {
            preds.push(Predicate::substring("tags", "tag1", false));
        }
        if i % 5 == 0 {
            preds.push(Predicate::range("score", 10.0, 80.0));
        }
        let s = selection(&preds);
        let page = PageRequest { sort: Some(if i % 2 == 0 { SortSpec::desc("score") } else { SortSpec::asc(&handle) }), ..PageRequest::default() };
        let t = Instant::now();
        let summaries = engine.summarize_many(&attrs, &s, &SummaryOptions::default()).unwrap();
        let docs = engine.document_page(&s, &page).unwrap();
        let points = engine.projection_points(&s, Some("topic")).unwrap();
        samples.push(t.elapsed());
        ensure!(summaries.len() == attrs.len() && points.len() == store.n_docs(), "refresh {i} incomplete");
        matched += docs.total_matching;
    }
    let p50 = percentile(&mut samples, 0.5);
    let p95 = percentile(&mut samples, 0.95);
    let detail = format!(
        "{} docs, {spans} span rows; refresh p50 {p50:.1?} p95 {p95:.1?} (budget {REFRESH_P95_BUDGET:?}); cold load {cold_load:.2?} (budget {COLD_LOAD_BUDGET:?}); build {ingested:.1?}; mean match {}",
        store.n_docs(),
        matched / REFRESH_SAMPLES
    );
    ensure!(p95 < REFRESH_P95_BUDGET && cold_load < COLD_LOAD_BUDGET, "{detail}");
    Ok(detail)
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_texture");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/fixture6");
    let manifest = fixtures.join("manifest.json");
    let records = fixtures.join("records.jsonl");
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&Path]| {
        Command::new(bin)
            .args(args.iter().map(|p| p.as_os_str()))
            .output()
            .unwrap()
    };
    let ingest = |out: &Path, records: &Path| {
        run(&[Path::new("ingest"), Path::new("--manifest"), &manifest, Path::new("--records"), records, Path::new("--out"), out])
    };
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let i = ingest(&out, &records);
        ensure!(i.status.code() == Some(0), "ingest exited {:?}", i.status.code());
        let p = run(&[Path::new("profile"), Path::new("--store"), &out]);
        ensure!(p.status.code() == Some(0), "profile exited {:?}", p.status.code());
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push((i.stdout, p.stdout, files));
    }
    ensure!(outputs[0] == outputs[1], "ingest or profile output differs between runs");

    let bad_line = tmp.path().join("bad.jsonl");
    fs::write(&bad_line, "{\"text\": \"x\"}\nnot json\n").unwrap();
    let code = ingest(&tmp.path().join("c"), &bad_line).status.code();
    ensure!(code == Some(2), "malformed records exited {code:?}, expected 2");
    let code = ingest(&tmp.path().join("d"), &tmp.path().join("missing.jsonl")).status.code();
    ensure!(code == Some(1), "missing records file exited {code:?}, expected 1");
    let code = run(&[Path::new("profile"), Path::new("--store"), &tmp.path().join("none")]).status.code();
    ensure!(code == Some(1), "missing store exited {code:?}, expected 1");
    Ok(format!("{} profile bytes identical across runs; exit codes 0/1/2", outputs[0].1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle-equivalence", oracle_equivalence),
        ("fixture6-goldens", fixture_goldens),
        ("highlight-disambiguation", highlights),
        ("round-trip", round_trip),
        ("similarity-correctness", similarity),
        ("semantic-invariants", invariants),
        ("performance-16k", performance),
        ("cli-determinism", cli_determinism),
    ];
    // Keep panics from individual criteria on their own line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1}s] {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s] {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
