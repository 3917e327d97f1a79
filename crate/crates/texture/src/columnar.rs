//! The `.tcol` file format: one table of named, typed, equal-length columns.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TXCOL" version:u8 rows:u64 n_columns:u32
//! per column: name_len:u16 name:utf8 tag:u8 payload
//! "TXEND"
//! ```
//!
//! Payloads by tag:
//! - `1` u32: `rows` values.
//! - `2` f64: `rows` values.
//! - `3` str: `rows` byte lengths (u32), then the concatenated UTF-8 bytes.
//! - `4` dict: `len:u32`, `len` scalars, then `rows` codes (u32, `u32::MAX` is null).
//!   A scalar is a tag byte: `0` false, `1` true, `2` f64 number, `3` u32 length plus UTF-8.
//! - `5` matrix: `width:u32`, then `rows * width` f64 values in row-major order.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use texture_core::Scalar;

pub const MAGIC: &[u8; 5] = b"TXCOL";
pub const FOOTER: &[u8; 5] = b"TXEND";
pub const VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a texture column file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("column `{column}`: unknown type tag {tag}")]
    UnknownTag { column: String, tag: u8 },
    #[error("column `{0}`: invalid UTF-8")]
    Utf8(String),
    #[error("column `{column}`: {reason}")]
    Corrupt { column: String, reason: String },
    #[error("file is truncated or has trailing data")]
    BadFooter,
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    U32(Vec<u32>),
    F64(Vec<f64>),
    Str(Vec<String>),
    Dict { values: Vec<Scalar>, codes: Vec<u32> },
    Matrix { width: usize, values: Vec<f64> },
}

impl Column {
    fn tag(&self) -> u8 {
        match self {
            Column::U32(_) => 1,
            Column::F64(_) => 2,
            Column::Str(_) => 3,
            Column::Dict { .. } => 4,
            Column::Matrix { .. } => 5,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Column::U32(v) => v.len(),
            Column::F64(v) => v.len(),
            Column::Str(v) => v.len(),
            Column::Dict { codes, .. } => codes.len(),
            Column::Matrix { width, values } => values.len().checked_div(*width).unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub rows: usize,
    pub columns: Vec<(String, Column)>,
}

impl Table {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, column: Column) {
        debug_assert_eq!(column.rows(), self.rows);
        self.columns.push((name.into(), column));
    }

    pub fn take(&mut self, name: &str) -> Result<Column, FormatError> {
        let i = self
            .columns
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| FormatError::MissingColumn(name.into()))?;
        Ok(self.columns.remove(i).1)
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for &v in values {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn write_u32s<W: Write>(w: &mut W, values: &[u32]) -> io::Result<()> {
    for &v in values {
        w.write_u32::<LE>(v)?;
    }
    Ok(())
}

fn write_scalar<W: Write>(w: &mut W, s: &Scalar) -> io::Result<()> {
    match s {
        Scalar::Bool(b) => w.write_u8(*b as u8),
        Scalar::Number(n) => {
            w.write_u8(2)?;
            w.write_f64::<LE>(*n)
        }
        Scalar::Str(s) => {
            w.write_u8(3)?;
            w.write_u32::<LE>(s.len() as u32)?;
            w.write_all(s.as_bytes())
        }
    }
}

pub fn write_table<W: Write>(w: &mut W, table: &Table) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(VERSION)?;
    w.write_u64::<LE>(table.rows as u64)?;
    w.write_u32::<LE>(table.columns.len() as u32)?;
    for (name, column) in &table.columns {
        if column.rows() != table.rows {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("column `{name}` has {} rows, table has {}", column.rows(), table.rows),
            ));
        }
        w.write_u16::<LE>(name.len() as u16)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(column.tag())?;
        match column {
            Column::U32(v) => write_u32s(w, v)?,
            Column::F64(v) => write_f64s(w, v)?,
            Column::Str(v) => {
                for s in v {
                    w.write_u32::<LE>(s.len() as u32)?;
                }
                for s in v {
                    w.write_all(s.as_bytes())?;
                }
            }
            Column::Dict { values, codes } => {
                w.write_u32::<LE>(values.len() as u32)?;
                for s in values {
                    write_scalar(w, s)?;
                }
                write_u32s(w, codes)?;
            }
            Column::Matrix { width, values } => {
                w.write_u32::<LE>(*width as u32)?;
                write_f64s(w, values)?;
            }
        }
    }
    w.write_all(FOOTER)
}

// Counts come from the file, so allocations grow with the data actually read
// instead of trusting a possibly corrupt header.
fn read_u32s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<u32>> {
    let mut out = Vec::new();
    let mut chunk = vec![0u32; n.min(1 << 16)];
    while out.len() < n {
        let k = chunk.len().min(n - out.len());
        r.read_u32_into::<LE>(&mut chunk[..k])?;
        out.extend_from_slice(&chunk[..k]);
    }
    Ok(out)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut chunk = vec![0f64; n.min(1 << 16)];
    while out.len() < n {
        let k = chunk.len().min(n - out.len());
        r.read_f64_into::<LE>(&mut chunk[..k])?;
        out.extend_from_slice(&chunk[..k]);
    }
    Ok(out)
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    Ok(buf)
}

fn read_string<R: Read>(r: &mut R, n: usize, column: &str) -> Result<String, FormatError> {
    String::from_utf8(read_bytes(r, n)?).map_err(|_| FormatError::Utf8(column.into()))
}

fn read_scalar<R: Read>(r: &mut R, column: &str) -> Result<Scalar, FormatError> {
    Ok(match r.read_u8()? {
        0 => Scalar::Bool(false),
        1 => Scalar::Bool(true),
        2 => Scalar::Number(r.read_f64::<LE>()?),
        3 => {
            let n = r.read_u32::<LE>()? as usize;
            Scalar::Str(read_string(r, n, column)?)
        }
        tag => {
            return Err(FormatError::Corrupt {
                column: column.into(),
                reason: format!("unknown scalar tag {tag}"),
            })
        }
    })
}

pub fn read_table<R: Read>(r: &mut R) -> Result<Table, FormatError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| FormatError::BadMagic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.read_u8()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let rows = usize::try_from(r.read_u64::<LE>()?).map_err(|_| FormatError::BadFooter)?;
    let n_columns = r.read_u32::<LE>()?;
    let mut table = Table::new(rows);
    for _ in 0..n_columns {
        let name_len = r.read_u16::<LE>()? as usize;
        let name = read_string(r, name_len, "?")?;
        let tag = r.read_u8()?;
        let column = match tag {
            1 => Column::U32(read_u32s(r, rows)?),
            2 => Column::F64(read_f64s(r, rows)?),
            3 => {
                let lengths = read_u32s(r, rows)?;
                let total: usize = lengths.iter().map(|&l| l as usize).sum();
                let bytes = read_bytes(r, total)?;
                let mut out = Vec::with_capacity(rows);
                let mut at = 0;
                for l in lengths {
                    let s = std::str::from_utf8(&bytes[at..at + l as usize])
                        .map_err(|_| FormatError::Utf8(name.clone()))?;
                    out.push(s.to_owned());
                    at += l as usize;
                }
                Column::Str(out)
            }
            4 => {
                let len = r.read_u32::<LE>()? as usize;
                let mut values = Vec::new();
                for _ in 0..len {
                    values.push(read_scalar(r, &name)?);
                }
                Column::Dict {
                    values,
                    codes: read_u32s(r, rows)?,
                }
            }
            5 => {
                let width = r.read_u32::<LE>()? as usize;
                let n = rows.checked_mul(width).ok_or_else(|| FormatError::Corrupt {
                    column: name.clone(),
                    reason: "matrix size overflows".into(),
                })?;
                Column::Matrix {
                    width,
                    values: read_f64s(r, n)?,
                }
            }
            tag => return Err(FormatError::UnknownTag { column: name, tag }),
        };
        table.columns.push((name, column));
    }
    let mut footer = [0u8; 5];
    r.read_exact(&mut footer).map_err(|_| FormatError::BadFooter)?;
    if &footer != FOOTER || r.read(&mut [0u8; 1])? != 0 {
        return Err(FormatError::BadFooter);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(3);
        t.push("ids", Column::U32(vec![0, 7, u32::MAX]));
        t.push("x", Column::F64(vec![0.5, f64::NAN, -1e300]));
        t.push("s", Column::Str(vec!["".into(), "café".into(), "日本".into()]));
        t.push(
            "d",
            Column::Dict {
                values: vec![false.into(), 2.5.into(), "b".into()],
                codes: vec![2, u32::MAX, 0],
            },
        );
        t.push(
            "m",
            Column::Matrix {
                width: 2,
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            },
        );
        t
    }

    fn bytes(t: &Table) -> Vec<u8> {
        let mut out = Vec::new();
        write_table(&mut out, t).unwrap();
        out
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = sample();
        let b = bytes(&t);
        let back = read_table(&mut b.as_slice()).unwrap();
        assert_eq!(bytes(&back), b);
        assert_eq!(back.columns.len(), 5);
        assert_eq!(back.columns[2], t.columns[2]);
    }

    #[test]
    fn every_truncation_is_an_error() {
        let b = bytes(&sample());
        for cut in 0..b.len() {
            assert!(read_table(&mut &b[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn trailing_bytes_and_bad_headers_are_rejected() {
        let mut b = bytes(&sample());
        b.push(0);
        assert!(matches!(read_table(&mut b.as_slice()), Err(FormatError::BadFooter)));
        let mut b = bytes(&sample());
        b[5] = 9;
        assert!(matches!(
            read_table(&mut b.as_slice()),
            Err(FormatError::UnsupportedVersion(9))
        ));
        assert!(matches!(read_table(&mut &b"TXCOX"[..]), Err(FormatError::BadMagic)));
    }

    #[test]
    fn mismatched_column_length_is_refused_on_write() {
        let mut t = Table::new(2);
        t.columns.push(("a".into(), Column::U32(vec![1])));
        assert!(write_table(&mut Vec::new(), &t).is_err());
    }
}
