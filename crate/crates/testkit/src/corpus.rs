//! Seeded random corpora with every attribute kind, plus random selections over them.

use rand::seq::IndexedRandom;
use rand::Rng;
use texture_core::query::{Predicate, Test};
use texture_core::schema::{AttributeDescriptor, DataType};
use texture_core::{DatasetSchema, RawRecord, RawValue, Scalar};

/// Words chosen so that prefixes collide ("won" / "wonderful", "graph" / "graphs"),
/// case varies, and some characters are outside ASCII.
pub const VOCAB: &[&str] = &[
    "data", "Data", "DATA", "analysis", "won", "wonderful", "we", "the", "match", "graph",
    "graphs", "café", "naïve", "straße", "日本語", "Über", "über", "Ökonomie", "x", "ab", "abc",
    "a", "don't", "l’été",
];

pub const TOPICS: &[&str] = &["vis", "ml", "nlp", "hci", "db", "théorie", "数据"];
pub const TAGS: &[&str] = &["a", "b", "c", "long tag", "ünï"];
const SEPARATORS: &[&str] = &[" ", " ", " ", ", ", ".\n", " - ", "\n", "  "];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalMode {
    /// Bare integer years.
    Years,
    /// `YYYY-MM-DD` strings spread over roughly this many days.
    Dates(u32),
}

#[derive(Clone, Copy, Debug)]
pub struct CorpusConfig {
    pub max_docs: usize,
    pub max_tokens: usize,
    pub embedding_dim: Option<usize>,
    pub with_projection: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            max_docs: 200,
            max_tokens: 30,
            embedding_dim: None,
            with_projection: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub schema: DatasetSchema,
    pub records: Vec<RawRecord>,
    pub temporal: TemporalMode,
}

fn maybe_null<R: Rng>(rng: &mut R, p: f64, value: RawValue) -> Option<RawValue> {
    match rng.random_range(0.0..1.0) {
        x if x < p / 2.0 => None,
        x if x < p => Some(RawValue::Null),
        _ => Some(value),
    }
}

fn days_to_date(days: i64) -> String {
    let d = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Duration::days(days);
    d.format("%Y-%m-%d").to_string()
}

/// Text built from [`VOCAB`] plus the span objects of its tokens.
pub fn random_text<R: Rng>(rng: &mut R, max_tokens: usize) -> (String, Vec<RawValue>) {
    let n = rng.random_range(0..=max_tokens);
    let mut text = String::new();
    let mut spans = Vec::with_capacity(n);
    let mut pos = 0usize;
    for i in 0..n {
        if i > 0 {
            let sep = SEPARATORS.choose(rng).unwrap();
            text.push_str(sep);
            pos += sep.chars().count();
        }
        let word = *VOCAB.choose(rng).unwrap();
        let len = word.chars().count();
        text.push_str(word);
        spans.push(RawValue::object([
            ("value", RawValue::String(word.to_lowercase())),
            ("start", RawValue::Number(pos as f64)),
            ("end", RawValue::Number((pos + len) as f64)),
        ]));
        pos += len;
    }
    (text, spans)
}

fn random_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn numbers(v: &[f64]) -> RawValue {
    RawValue::Array(v.iter().map(|&x| x.into()).collect())
}

pub fn random_corpus<R: Rng>(rng: &mut R, config: &CorpusConfig) -> Corpus {
    let n_docs = rng.random_range(0..=config.max_docs);
    let temporal = if rng.random_bool(0.5) {
        TemporalMode::Years
    } else {
        TemporalMode::Dates(*[20u32, 200, 2000].choose(rng).unwrap())
    };
    let mut attributes = vec![
        AttributeDescriptor::text("text"),
        AttributeDescriptor::single("topic", DataType::Categorical),
        AttributeDescriptor::single("year", DataType::Temporal),
        AttributeDescriptor::single("score", DataType::Quantitative),
        AttributeDescriptor::list("tags", DataType::Categorical),
        AttributeDescriptor::span_list("word", DataType::Categorical, "text"),
    ];
    if let Some(dim) = config.embedding_dim {
        attributes.push(AttributeDescriptor::embedding("embedding", dim, config.with_projection));
    }
    let schema = DatasetSchema {
        dataset_name: "random".into(),
        id_field: None,
        attributes,
    };
    // A constant score column exercises the zero-extent histogram.
    let constant_score = rng.random_bool(0.1);
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut records = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let mut r = RawRecord::new();
        let (text, spans) = random_text(rng, config.max_tokens);
        r.insert("text".into(), RawValue::String(text));
        let topic = RawValue::String(TOPICS.choose(rng).unwrap().to_string());
        if let Some(v) = maybe_null(rng, 0.15, topic) {
            r.insert("topic".into(), v);
        }
        let year = match temporal {
            TemporalMode::Years => RawValue::Number(rng.random_range(1995..=2025) as f64),
            TemporalMode::Dates(span) => {
                RawValue::String(days_to_date(rng.random_range(0..=span as i64)))
            }
        };
        if let Some(v) = maybe_null(rng, 0.1, year) {
            r.insert("year".into(), v);
        }
        let score = if constant_score {
            0.25
        } else {
            (rng.random_range(-100..=100) as f64) / 100.0
        };
        if let Some(v) = maybe_null(rng, 0.1, RawValue::Number(score)) {
            r.insert("score".into(), v);
        }
        let n_tags = rng.random_range(0..=4);
        let tags: Vec<RawValue> = (0..n_tags)
            .map(|_| {
                if rng.random_bool(0.05) {
                    RawValue::Null
                } else {
                    RawValue::String(TAGS.choose(rng).unwrap().to_string())
                }
            })
            .collect();
        if !tags.is_empty() || rng.random_bool(0.5) {
            r.insert("tags".into(), RawValue::Array(tags));
        }
        r.insert("word".into(), RawValue::Array(spans));
        if let Some(dim) = config.embedding_dim {
            let v = match vectors.choose(rng) {
                Some(prev) if rng.random_bool(0.05) => prev.clone(),
                _ => random_vector(rng, dim),
            };
            let value = if config.with_projection {
                let p = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
                RawValue::object([("vector", numbers(&v)), ("projection", numbers(&p))])
            } else {
                numbers(&v)
            };
            r.insert("embedding".into(), value);
            vectors.push(v);
        }
        records.push(r);
    }
    Corpus {
        schema,
        records,
        temporal,
    }
}

fn temporal_scalar<R: Rng>(rng: &mut R, mode: TemporalMode) -> Scalar {
    match mode {
        TemporalMode::Years => Scalar::Number(rng.random_range(1993..=2027) as f64),
        TemporalMode::Dates(span) => {
            Scalar::Str(days_to_date(rng.random_range(-5..=span as i64 + 5)))
        }
    }
}

fn range_test(lo: Scalar, hi: Scalar, rng: &mut impl Rng) -> Test {
    Test::Range {
        lo,
        hi,
        lo_inclusive: rng.random_bool(0.7),
        hi_inclusive: rng.random_bool(0.7),
    }
}

/// One to `max` lowercased entries of `pool`.
fn pick_words<R: Rng>(rng: &mut R, pool: &[&str], max: usize) -> Vec<Scalar> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|_| Scalar::Str(pool.choose(rng).unwrap().to_lowercase()))
        .collect()
}

/// Zero to four predicates on distinct attributes of a [`random_corpus`].
pub fn random_selection<R: Rng>(rng: &mut R, corpus: &Corpus) -> Vec<Predicate> {
    let mut names = vec!["topic", "year", "score", "tags", "word", "text"];
    let count = rng.random_range(0..=4);
    let mut out = Vec::new();
    for _ in 0..count {
        let i = rng.random_range(0..names.len());
        let name = names.swap_remove(i);
        let test = match name {
            "topic" => match rng.random_range(0..4) {
                0 => Test::Null,
                1 => Test::Substring {
                    query: ["v", "L", "é", "数"].choose(rng).unwrap().to_string(),
                    case_sensitive: rng.random_bool(0.3),
                },
                _ => {
                    let mut values = pick_words(rng, TOPICS, 3);
                    if rng.random_bool(0.2) {
                        values.push("none-such".into());
                    }
                    Test::ValueSet { values }
                }
            },
            "year" => match rng.random_range(0..5) {
                0 => Test::Null,
                1 if corpus.temporal == TemporalMode::Years => Test::ValueSet {
                    values: (0..rng.random_range(1..=3))
                        .map(|_| temporal_scalar(rng, corpus.temporal))
                        .collect(),
                },
                _ => {
                    let a = temporal_scalar(rng, corpus.temporal);
                    let b = temporal_scalar(rng, corpus.temporal);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    range_test(lo, hi, rng)
                }
            },
            "score" => match rng.random_range(0..5) {
                0 => Test::Null,
                1 => Test::ValueSet {
                    values: vec![Scalar::Number(rng.random_range(-10..=10) as f64 / 10.0)],
                },
                _ => {
                    let a = rng.random_range(-120..=120) as f64 / 100.0;
                    let b = rng.random_range(-120..=120) as f64 / 100.0;
                    range_test(a.min(b).into(), a.max(b).into(), rng)
                }
            },
            "tags" => match rng.random_range(0..4) {
                0 => Test::Null,
                1 => Test::Substring {
                    query: ["a", "Ü", "tag"].choose(rng).unwrap().to_string(),
                    case_sensitive: false,
                },
                _ => Test::ValueSet {
                    values: pick_words(rng, TAGS, 2),
                },
            },
            "word" => match rng.random_range(0..4) {
                0 => Test::Substring {
                    query: ["won", "DAT", "graph", "é", "ß", "日本"].choose(rng).unwrap().to_string(),
                    case_sensitive: false,
                },
                1 => Test::Null,
                _ => Test::ValueSet {
                    values: pick_words(rng, VOCAB, 3),
                },
            },
            _ => Test::Substring {
                query: ["won", "Data", "a", "ü", "ÜBER", " the", "s\nd"].choose(rng).unwrap().to_string(),
                case_sensitive: rng.random_bool(0.3),
            },
        };
        out.push(Predicate {
            attribute: name.into(),
            test,
        });
    }
    out
}

/// Shape of [`scale_corpus`].
#[derive(Clone, Copy, Debug)]
pub struct ScaleConfig {
    pub n_docs: usize,
    pub tokens_per_doc: usize,
    pub vocabulary: usize,
    pub embedding_dim: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            n_docs: 16_000,
            tokens_per_doc: 400,
            vocabulary: 5_000,
            embedding_dim: 64,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "bra", "ch", "dor", "el", "fin", "gu",
    "ha", "is", "jo", "ku", "lan",
];

fn synthetic_word(mut i: usize) -> String {
    let mut w = String::new();
    loop {
        w.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
        if i == 0 {
            return w;
        }
    }
}

/// A large corpus with Zipf-distributed words. Word spans are left to
/// tokenization, so the records hold text, topic, year, score, tags and an
/// embedding without a projection.
pub fn scale_corpus<R: Rng>(rng: &mut R, config: &ScaleConfig) -> Corpus {
    let words: Vec<String> = (0..config.vocabulary).map(synthetic_word).collect();
    let mut cumulative = Vec::with_capacity(words.len());
    let mut total = 0.0;
    for rank in 1..=words.len() {
        total += 1.0 / rank as f64;
        cumulative.push(total);
    }
    let topics: Vec<String> = (0..20).map(|i| format!("topic-{i:02}")).collect();
    let tags: Vec<String> = (0..30).map(|i| format!("tag{i}")).collect();
    let schema = DatasetSchema {
        dataset_name: "scale".into(),
        id_field: None,
        attributes: vec![
            AttributeDescriptor::text("text"),
            AttributeDescriptor::single("topic", DataType::Categorical),
            AttributeDescriptor::single("year", DataType::Temporal),
            AttributeDescriptor::single("score", DataType::Quantitative),
            AttributeDescriptor::list("tags", DataType::Categorical),
            AttributeDescriptor::embedding("embedding", config.embedding_dim, false),
        ],
    };
    let mut records = Vec::with_capacity(config.n_docs);
    for _ in 0..config.n_docs {
        let mut text = String::with_capacity(config.tokens_per_doc * 6);
        for t in 0..config.tokens_per_doc {
            if t > 0 {
                text.push_str(if rng.random_bool(0.05) { ". " } else { " " });
            }
            let x = rng.random_range(0.0..total);
            let i = cumulative.partition_point(|&c| c < x).min(words.len() - 1);
            text.push_str(&words[i]);
        }
        let mut r = RawRecord::new();
        r.insert("text".into(), RawValue::String(text));
        r.insert("topic".into(), RawValue::String(topics.choose(rng).unwrap().clone()));
        r.insert(
            "year".into(),
            RawValue::String(days_to_date(rng.random_range(0..3650))),
        );
        r.insert("score".into(), RawValue::Number(rng.random_range(0.0..100.0)));
        let n_tags = rng.random_range(0..=3);
        r.insert(
            "tags".into(),
            RawValue::Array(
                (0..n_tags)
                    .map(|_| RawValue::String(tags.choose(rng).unwrap().clone()))
                    .collect(),
            ),
        );
        r.insert(
            "embedding".into(),
            numbers(&random_vector(rng, config.embedding_dim)),
        );
        records.push(r);
    }
    Corpus {
        schema,
        records,
        temporal: TemporalMode::Dates(3650),
    }
}

/// The `i`th most frequent word of [`scale_corpus`].
pub fn scale_word(i: usize) -> String {
    synthetic_word(i)
}
