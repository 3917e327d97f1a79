//! Document embeddings, cosine-distance similarity, derived similarity
//! columns, and the PCA projection used when none was ingested.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;

use serde::Serialize;

use crate::store::NormalizedStore;
use crate::text::tokenize_words;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("data has no variance to project")]
    DegenerateData,
    #[error("dataset has no embedding")]
    NoEmbedding,
    #[error("unknown document {0}")]
    UnknownDocument(u32),
    #[error("embedder failed: {0}")]
    EmbedderFailure(String),
}

/// Row-major `n × dimension` matrix plus an optional 2D projection.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dimension: usize,
    values: Vec<f64>,
    projection: Option<Vec<[f64; 2]>>,
    projection_ingested: bool,
}

impl EmbeddingMatrix {
    /// Rejects non-finite entries and all-zero rows.
    pub fn new(
        dimension: usize,
        values: Vec<f64>,
        projection: Option<Vec<[f64; 2]>>,
    ) -> Result<Self, EmbeddingError> {
        if dimension == 0 || values.len() % dimension != 0 {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dimension,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        if values.chunks(dimension).any(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(EmbeddingError::ZeroVector);
        }
        let rows = values.len() / dimension;
        if let Some(p) = &projection {
            if p.len() != rows {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: rows,
                    actual: p.len(),
                });
            }
            if p.iter().flatten().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite);
            }
        }
        let projection_ingested = projection.is_some();
        Ok(Self {
            dimension,
            values,
            projection,
            projection_ingested,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.dimension
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn projection(&self) -> Option<&[[f64; 2]]> {
        self.projection.as_deref()
    }

    /// True when the projection came with the data rather than from PCA.
    pub fn projection_ingested(&self) -> bool {
        self.projection_ingested
    }

    /// Fills in a PCA projection when none was supplied. Degenerate data is left unprojected.
    pub fn ensure_projection(&mut self) {
        if self.projection.is_none() && self.rows() >= 2 {
            self.projection = pca_projection(self).ok();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 - a·b / (‖a‖‖b‖)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    // sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb): identical inputs give exactly 0.
    let cos = dot(a, b) / libm::sqrt(aa * bb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// A transient per-document numeric attribute produced by a similarity request.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedColumn {
    pub handle: String,
    pub label: String,
    pub values: Vec<f64>,
    /// Registration time in milliseconds since the Unix epoch; 0 until registered.
    pub created_at: u64,
}

/// The derived columns visible to one query.
#[derive(Clone, Debug, Default)]
pub struct DerivedSet {
    columns: BTreeMap<String, Arc<DerivedColumn>>,
}

impl DerivedSet {
    pub const fn new() -> Self {
        Self {
            columns: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, column: Arc<DerivedColumn>) {
        self.columns.insert(column.handle.clone(), column);
    }

    pub fn get(&self, handle: &str) -> Option<&DerivedColumn> {
        self.columns.get(handle).map(|c| &**c)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DerivedColumn> {
        self.columns.values().map(|c| &**c)
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

impl FromIterator<Arc<DerivedColumn>> for DerivedSet {
    fn from_iter<T: IntoIterator<Item = Arc<DerivedColumn>>>(iter: T) -> Self {
        let mut set = DerivedSet::new();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

/// Turns text into a vector in the store's embedding space.
pub trait Embedder {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        (**self).embed(text)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        (**self).embed(text)
    }
}

/// Deterministic offline embedder: signed hashed bag of words.
#[derive(Clone, Debug)]
pub struct HashedEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashedEmbedder {
    pub const DEFAULT_SEED: u64 = 0x7e47_0e5e_ed00_0001;

    pub fn new(dimension: usize) -> Self {
        Self::with_seed(dimension, Self::DEFAULT_SEED)
    }

    pub fn with_seed(dimension: usize, seed: u64) -> Self {
        Self {
            dimension: dimension.max(1),
            seed,
        }
    }
}

impl Embedder for HashedEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize_words(text) {
            let mut h = fnv::FnvHasher::with_key(self.seed);
            h.write(token.value.as_bytes());
            let h = h.finish();
            let slot = (h % self.dimension as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        Ok(v)
    }
}

fn distances_from(matrix: &EmbeddingMatrix, anchor: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    (0..matrix.rows())
        .map(|i| cosine_distance(anchor, matrix.row(i)))
        .collect()
}

/// Cosine distance from one document to every document; the anchor itself is exactly 0.
pub fn similar_to_document(
    store: &NormalizedStore,
    doc_id: u32,
) -> Result<DerivedColumn, EmbeddingError> {
    let matrix = store.embeddings().ok_or(EmbeddingError::NoEmbedding)?;
    if doc_id as usize >= matrix.rows() {
        return Err(EmbeddingError::UnknownDocument(doc_id));
    }
    let mut values = distances_from(matrix, matrix.row(doc_id as usize))?;
    values[doc_id as usize] = 0.0;
    Ok(DerivedColumn {
        handle: format!("similar_doc_{doc_id}"),
        label: format!("distance to document {doc_id}"),
        values,
        created_at: 0,
    })
}

/// Embeds `query` once and measures cosine distance to every document.
pub fn similar_to_query<E: Embedder + ?Sized>(
    store: &NormalizedStore,
    query: &str,
    embedder: &E,
) -> Result<DerivedColumn, EmbeddingError> {
    let matrix = store.embeddings().ok_or(EmbeddingError::NoEmbedding)?;
    if embedder.dimension() != matrix.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: matrix.dimension(),
            actual: embedder.dimension(),
        });
    }
    let vector = embedder.embed(query)?;
    if vector.len() != matrix.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: matrix.dimension(),
            actual: vector.len(),
        });
    }
    let values = distances_from(matrix, &vector)?;
    let mut h = fnv::FnvHasher::default();
    h.write(query.as_bytes());
    Ok(DerivedColumn {
        handle: format!("similar_query_{:016x}", h.finish()),
        label: format!("distance to \"{query}\""),
        values,
        created_at: 0,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let p = dot(v, against);
    v.iter_mut().zip(against).for_each(|(x, a)| *x -= p * a);
}

/// Mean-centered projection onto the top two principal directions.
///
/// Uses orthogonal iteration on the covariance operator, never forming the
/// `d × d` matrix. Each axis is oriented so its largest-magnitude loading is positive.
pub fn pca_projection(matrix: &EmbeddingMatrix) -> Result<Vec<[f64; 2]>, EmbeddingError> {
    let n = matrix.rows();
    let d = matrix.dimension();
    if n < 2 {
        return Err(EmbeddingError::DegenerateData);
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(matrix.row(i)).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = |i: usize, buf: &mut [f64]| {
        buf.iter_mut()
            .zip(matrix.row(i).iter().zip(&mean))
            .for_each(|(b, (x, m))| *b = x - m);
    };
    let mut row = vec![0.0; d];
    let mut scale = 0.0;
    let mut trace = 0.0;
    for i in 0..n {
        scale += dot(matrix.row(i), matrix.row(i));
        centered(i, &mut row);
        trace += dot(&row, &row);
    }
    if trace <= 1e-20 * scale.max(f64::MIN_POSITIVE) {
        return Err(EmbeddingError::DegenerateData);
    }

    // Applies the (unnormalized) covariance operator to two vectors at once.
    let apply = |q1: &[f64], q2: &[f64], z1: &mut [f64], z2: &mut [f64], row: &mut [f64]| {
        z1.iter_mut().for_each(|x| *x = 0.0);
        z2.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            centered(i, row);
            let s1 = dot(row, q1);
            let s2 = dot(row, q2);
            for j in 0..d {
                z1[j] += s1 * row[j];
                z2[j] += s2 * row[j];
            }
        }
    };

    let mut q1: Vec<f64> = (0..d).map(|j| 1.0 + (j as f64 * 0.618_033_988_75) % 1.0).collect();
    let mut q2: Vec<f64> = (0..d)
        .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + j as f64 / d as f64))
        .collect();
    normalize(&mut q1);
    orthogonalize(&mut q2, &q1);
    if normalize(&mut q2) < 1e-12 {
        fallback_orthogonal(&mut q2, &q1);
    }

    let mut z1 = vec![0.0; d];
    let mut z2 = vec![0.0; d];
    for _ in 0..1000 {
        apply(&q1, &q2, &mut z1, &mut z2, &mut row);
        let norm_z = libm::sqrt(dot(&z1, &z1) + dot(&z2, &z2));
        // Residual of the current subspace: the part of C·Q outside span(Q).
        let mut residual = 0.0;
        for z in [&z1, &z2] {
            let a = dot(z, &q1);
            let b = dot(z, &q2);
            residual += z
                .iter()
                .zip(q1.iter().zip(&q2))
                .map(|(x, (u, v))| {
                    let r = x - a * u - b * v;
                    r * r
                })
                .sum::<f64>();
        }
        q1.copy_from_slice(&z1);
        q2.copy_from_slice(&z2);
        normalize(&mut q1);
        orthogonalize(&mut q2, &q1);
        if normalize(&mut q2) < 1e-12 * norm_z.max(f64::MIN_POSITIVE) {
            fallback_orthogonal(&mut q2, &q1);
        }
        if libm::sqrt(residual) <= 1e-13 * norm_z {
            break;
        }
    }

    // Rayleigh-Ritz on span(q1, q2) to order the axes by variance.
    apply(&q1, &q2, &mut z1, &mut z2, &mut row);
    let a = dot(&q1, &z1);
    let b = dot(&q1, &z2);
    let c = dot(&q2, &z2);
    let half_gap = (a - c) / 2.0;
    let lambda = (a + c) / 2.0 + libm::sqrt(half_gap * half_gap + b * b);
    let (u, v) = if b.abs() > 1e-300 {
        (lambda - c, b)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = libm::sqrt(u * u + v * v);
    let (u, v) = (u / norm, v / norm);
    let mut axis1: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| u * x + v * y).collect();
    let mut axis2: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| -v * x + u * y).collect();
    orient(&mut axis1);
    orient(&mut axis2);

    Ok((0..n)
        .map(|i| {
            centered(i, &mut row);
            [dot(&row, &axis1), dot(&row, &axis2)]
        })
        .collect())
}

fn fallback_orthogonal(q: &mut [f64], against: &[f64]) {
    let j = against
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .map(|(j, _)| j)
        .unwrap_or(0);
    q.iter_mut().for_each(|x| *x = 0.0);
    q[j] = 1.0;
    orthogonalize(q, against);
    normalize(q);
}

fn orient(axis: &mut [f64]) {
    let mut best = 0;
    for (j, x) in axis.iter().enumerate() {
        if x.abs() > axis[best].abs() {
            best = j;
        }
    }
    if axis.get(best).is_some_and(|&x| x < 0.0) {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
}
