//! A normalized store on disk: a directory of `.tcol` tables plus the resolved manifest.
//!
//! ```text
//! manifest             resolved schema JSON (every data type filled in)
//! main.tcol            one row per document, one column per text or single-value attribute
//! child_<attr>.tcol    doc_id, array_index, value [, span_start, span_end]
//! embeddings.tcol      vector [, projection] when the schema has an embedding
//! ```
//!
//! A PCA projection is recomputed on load rather than stored.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use texture_core::schema::{AttributeKind, DataType};
use texture_core::store::{
    AttributeData, ChildTable, Dictionary, SpanColumns, ValueColumn,
};
use texture_core::embeddings::EmbeddingMatrix;
use texture_core::{validate_schema, DatasetSchema, NormalizedStore};

use crate::columnar::{read_table, write_table, Column, FormatError, Table};

pub const MANIFEST_FILE: &str = "manifest";
pub const MAIN_FILE: &str = "main.tcol";
pub const EMBEDDINGS_FILE: &str = "embeddings.tcol";

#[derive(Debug, thiserror::Error)]
pub enum StoreFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        source: FormatError,
    },
    #[error("{path}: invalid manifest: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: {reason}")]
    Inconsistent { path: PathBuf, reason: String },
}

pub fn child_file(attribute: &str) -> String {
    format!("child_{attribute}.tcol")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreFileError + '_ {
    move |source| StoreFileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn inconsistent(path: &Path, reason: impl ToString) -> StoreFileError {
    StoreFileError::Inconsistent {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Writes to a sibling temporary file, then renames it into place.
fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), StoreFileError> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .and_then(|_| w.get_ref().sync_all())
        .map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn value_column(values: &ValueColumn) -> Column {
    match values {
        ValueColumn::Quantitative { values } => Column::F64(values.clone()),
        other => Column::Dict {
            values: other.dictionary().expect("dictionary encoded").values().to_vec(),
            codes: other.codes().expect("dictionary encoded").to_vec(),
        },
    }
}

fn main_table(store: &NormalizedStore) -> Table {
    let mut t = Table::new(store.n_docs());
    for (attr, data) in store.schema().attributes().iter().zip(store.columns()) {
        match data {
            AttributeData::Text(texts) => t.push(&attr.name, Column::Str(texts.clone())),
            AttributeData::Single(col) => t.push(&attr.name, value_column(col)),
            _ => {}
        }
    }
    t
}

fn child_table(table: &ChildTable) -> Table {
    let mut t = Table::new(table.len());
    t.push("doc_id", Column::U32(table.doc_ids().to_vec()));
    t.push(
        "array_index",
        Column::U32((0..table.len()).map(|r| table.array_index(r)).collect()),
    );
    t.push("value", value_column(table.values()));
    if let Some(spans) = table.spans() {
        t.push("span_start", Column::U32(spans.starts.clone()));
        t.push("span_end", Column::U32(spans.ends.clone()));
    }
    t
}

fn embedding_table(m: &EmbeddingMatrix) -> Table {
    let mut t = Table::new(m.rows());
    t.push(
        "vector",
        Column::Matrix {
            width: m.dimension(),
            values: m.values().to_vec(),
        },
    );
    if let (true, Some(p)) = (m.projection_ingested(), m.projection()) {
        t.push(
            "projection",
            Column::Matrix {
                width: 2,
                values: p.iter().flatten().copied().collect(),
            },
        );
    }
    t
}

/// Row count of every table the store would write, main table first.
pub fn table_row_counts(store: &NormalizedStore) -> Vec<(String, usize)> {
    let mut out = vec![("main".to_string(), store.n_docs())];
    for (attr, data) in store.schema().attributes().iter().zip(store.columns()) {
        if let AttributeData::Child(t) = data {
            out.push((format!("child_{}", attr.name), t.len()));
        }
    }
    if let Some(m) = store.embeddings() {
        out.push(("embeddings".to_string(), m.rows()));
    }
    out
}

/// Writes `store` into `dir`, creating it if needed. The manifest is written last.
pub fn save_store(store: &NormalizedStore, dir: &Path) -> Result<(), StoreFileError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |name: &str, table: &Table| {
        write_atomic(&dir.join(name), |w| write_table(w, table))
    };
    put(MAIN_FILE, &main_table(store))?;
    for (attr, data) in store.schema().attributes().iter().zip(store.columns()) {
        if let AttributeData::Child(t) = data {
            put(&child_file(&attr.name), &child_table(t))?;
        }
    }
    if let Some(m) = store.embeddings() {
        put(EMBEDDINGS_FILE, &embedding_table(m))?;
    }
    let manifest = serde_json::to_vec_pretty(store.schema().as_schema()).expect("schema serializes");
    write_atomic(&dir.join(MANIFEST_FILE), |w| {
        w.write_all(&manifest)?;
        w.write_all(b"\n")
    })
}

fn open_table(path: &Path) -> Result<Table, StoreFileError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_table(&mut BufReader::with_capacity(1 << 20, file)).map_err(|source| {
        StoreFileError::Format {
            path: path.to_path_buf(),
            source,
        }
    })
}

fn take(table: &mut Table, name: &str, path: &Path) -> Result<Column, StoreFileError> {
    table.take(name).map_err(|source| StoreFileError::Format {
        path: path.to_path_buf(),
        source,
    })
}

fn take_u32(table: &mut Table, name: &str, path: &Path) -> Result<Vec<u32>, StoreFileError> {
    match take(table, name, path)? {
        Column::U32(v) => Ok(v),
        _ => Err(inconsistent(path, format!("column `{name}` is not u32"))),
    }
}

fn decode_values(column: Column, data_type: DataType, name: &str, path: &Path) -> Result<ValueColumn, StoreFileError> {
    match (data_type, column) {
        (DataType::Quantitative, Column::F64(values)) => Ok(ValueColumn::Quantitative { values }),
        (DataType::Categorical | DataType::Temporal, Column::Dict { values, codes }) => {
            let dict = Dictionary::from_sorted(values)
                .ok_or_else(|| inconsistent(path, format!("column `{name}`: dictionary is not sorted")))?;
            if data_type == DataType::Categorical {
                Ok(ValueColumn::categorical(dict, codes))
            } else {
                ValueColumn::temporal(dict, codes).map_err(|v| {
                    inconsistent(path, format!("column `{name}`: {v} is not a temporal value"))
                })
            }
        }
        _ => Err(inconsistent(path, format!("column `{name}` does not match its data type {data_type}"))),
    }
}

/// Reads the manifest of a store directory.
pub fn load_manifest(dir: &Path) -> Result<DatasetSchema, StoreFileError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreFileError::Manifest {
        path,
        reason: e.to_string(),
    })
}

pub fn load_store(dir: &Path) -> Result<NormalizedStore, StoreFileError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let schema = validate_schema(load_manifest(dir)?).map_err(|e| StoreFileError::Manifest {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    let main_path = dir.join(MAIN_FILE);
    let mut main = open_table(&main_path)?;
    let n_docs = main.rows;
    let mut columns = Vec::with_capacity(schema.attributes().len());
    for attr in schema.attributes() {
        let data_type = || {
            attr.data_type.ok_or_else(|| StoreFileError::Manifest {
                path: manifest_path.clone(),
                reason: format!("attribute `{}` has no resolved data type", attr.name),
            })
        };
        let data = match attr.kind {
            AttributeKind::Text => match take(&mut main, &attr.name, &main_path)? {
                Column::Str(v) => AttributeData::Text(v),
                _ => return Err(inconsistent(&main_path, format!("column `{}` is not text", attr.name))),
            },
            AttributeKind::SingleValue => {
                let col = take(&mut main, &attr.name, &main_path)?;
                AttributeData::Single(decode_values(col, data_type()?, &attr.name, &main_path)?)
            }
            AttributeKind::List | AttributeKind::SpanList => {
                let path = dir.join(child_file(&attr.name));
                let mut t = open_table(&path)?;
                let doc_ids = take_u32(&mut t, "doc_id", &path)?;
                let array_index = take_u32(&mut t, "array_index", &path)?;
                let values = decode_values(take(&mut t, "value", &path)?, data_type()?, &attr.name, &path)?;
                let spans = if attr.kind == AttributeKind::SpanList {
                    Some(SpanColumns {
                        starts: take_u32(&mut t, "span_start", &path)?,
                        ends: take_u32(&mut t, "span_end", &path)?,
                    })
                } else {
                    None
                };
                let table = ChildTable::from_rows(n_docs, doc_ids, &array_index, values, spans)
                    .map_err(|e| inconsistent(&path, e))?;
                AttributeData::Child(table)
            }
            AttributeKind::Embedding => AttributeData::Embedding,
        };
        columns.push(data);
    }
    let embeddings = match schema.embedding() {
        None => None,
        Some(desc) => {
            let path = dir.join(EMBEDDINGS_FILE);
            let mut t = open_table(&path)?;
            let Column::Matrix { width, values } = take(&mut t, "vector", &path)? else {
                return Err(inconsistent(&path, "column `vector` is not a matrix"));
            };
            if Some(width) != desc.dimension {
                return Err(inconsistent(&path, format!("vector width {width} does not match the manifest")));
            }
            let projection = if t.has("projection") {
                match take(&mut t, "projection", &path)? {
                    Column::Matrix { width: 2, values } => {
                        Some(values.chunks_exact(2).map(|p| [p[0], p[1]]).collect())
                    }
                    _ => return Err(inconsistent(&path, "column `projection` is not a 2-wide matrix")),
                }
            } else {
                None
            };
            Some(EmbeddingMatrix::new(width, values, projection).map_err(|e| inconsistent(&path, e))?)
        }
    };
    NormalizedStore::from_parts(schema, n_docs, columns, embeddings)
        .map_err(|e| inconsistent(dir, e))
}
