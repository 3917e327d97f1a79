//! Scalar cell values and the loosely typed raw record shape accepted at ingest.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize, Serializer};

/// A non-null cell value.
///
/// Scalars are totally ordered: booleans sort before numbers, numbers before
/// strings. Numbers compare numerically and strings lexicographically by
/// Unicode scalar value.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Str(String),
}

impl Scalar {
    fn rank(&self) -> u8 {
        match self {
            Scalar::Bool(_) => 0,
            Scalar::Number(_) => 1,
            Scalar::Str(_) => 2,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Numeric view; numeric strings are parsed.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Scalar::Number(n) => Some(*n),
            Scalar::Str(s) => parse_number(s),
            Scalar::Bool(_) => None,
        }
    }

    /// Canonical textual form. Integral numbers print without a fraction.
    pub fn to_text(&self) -> String {
        match self {
            Scalar::Bool(b) => b.to_string(),
            Scalar::Number(n) => format_number(*n),
            Scalar::Str(s) => s.clone(),
        }
    }

    /// Equality that also matches a number against its numeric-string form.
    pub fn loosely_eq(&self, other: &Scalar) -> bool {
        if self == other {
            return true;
        }
        match (self, other) {
            (Scalar::Number(a), Scalar::Str(s)) | (Scalar::Str(s), Scalar::Number(a)) => {
                parse_number(s) == Some(*a)
            }
            _ => false,
        }
    }
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Whole number small enough to round-trip through `i64` exactly.
pub(crate) fn is_integral(n: f64) -> bool {
    libm::trunc(n) == n && n.abs() < 9.007_199_254_740_992e15
}

pub(crate) fn format_number(n: f64) -> String {
    if is_integral(n) {
        format!("{}", n as i64)
    } else {
        format!("{}", n)
    }
}

fn serialize_number<S: Serializer>(n: f64, serializer: S) -> Result<S::Ok, S::Error> {
    if is_integral(n) {
        serializer.serialize_i64(n as i64)
    } else {
        serializer.serialize_f64(n)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Bool(b) => serializer.serialize_bool(*b),
            Scalar::Number(n) => serialize_number(*n, serializer),
            Scalar::Str(s) => serializer.serialize_str(s),
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scalar {}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Scalar::Bool(a), Scalar::Bool(b)) => a.cmp(b),
            (Scalar::Number(a), Scalar::Number(b)) => canonical(*a).total_cmp(&canonical(*b)),
            (Scalar::Str(a), Scalar::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

// -0.0 and 0.0 are the same cell value.
fn canonical(n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n
    }
}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Scalar::Bool(b) => b.hash(state),
            Scalar::Number(n) => canonical(*n).to_bits().hash(state),
            Scalar::Str(s) => s.hash(state),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.into())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Str(s)
    }
}

impl From<f64> for Scalar {
    fn from(n: f64) -> Self {
        Scalar::Number(n)
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::Number(n as f64)
    }
}

impl From<i32> for Scalar {
    fn from(n: i32) -> Self {
        Scalar::Number(n as f64)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

/// Loosely typed value as read from a record file, before the schema gives it meaning.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Null,
    Bool(bool),
    Number(f64),
    String(String),
    Array(Vec<RawValue>),
    Object(BTreeMap<String, RawValue>),
}

impl Serialize for RawValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            RawValue::Null => serializer.serialize_unit(),
            RawValue::Bool(b) => serializer.serialize_bool(*b),
            RawValue::Number(n) => serialize_number(*n, serializer),
            RawValue::String(s) => serializer.serialize_str(s),
            RawValue::Array(items) => items.serialize(serializer),
            RawValue::Object(map) => map.serialize(serializer),
        }
    }
}

impl RawValue {
    pub fn as_scalar(&self) -> Option<Scalar> {
        match self {
            RawValue::Bool(b) => Some(Scalar::Bool(*b)),
            RawValue::Number(n) => Some(Scalar::Number(*n)),
            RawValue::String(s) => Some(Scalar::Str(s.clone())),
            _ => None,
        }
    }

    pub fn object<I, K>(entries: I) -> RawValue
    where
        I: IntoIterator<Item = (K, RawValue)>,
        K: Into<String>,
    {
        RawValue::Object(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl From<Scalar> for RawValue {
    fn from(s: Scalar) -> Self {
        match s {
            Scalar::Bool(b) => RawValue::Bool(b),
            Scalar::Number(n) => RawValue::Number(n),
            Scalar::Str(s) => RawValue::String(s),
        }
    }
}

impl From<Option<Scalar>> for RawValue {
    fn from(s: Option<Scalar>) -> Self {
        s.map_or(RawValue::Null, RawValue::from)
    }
}

impl From<&str> for RawValue {
    fn from(s: &str) -> Self {
        RawValue::String(s.into())
    }
}

impl From<f64> for RawValue {
    fn from(n: f64) -> Self {
        RawValue::Number(n)
    }
}

/// One input record: attribute name to raw value.
pub type RawRecord = BTreeMap<String, RawValue>;

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn scalar_order_is_total() {
        let mut values = vec![
            Scalar::from("b"),
            Scalar::from(2.0),
            Scalar::from("a"),
            Scalar::from(true),
            Scalar::from(-1.0),
        ];
        values.sort();
        assert_eq!(
            values,
            vec![
                Scalar::from(true),
                Scalar::from(-1.0),
                Scalar::from(2.0),
                Scalar::from("a"),
                Scalar::from("b"),
            ]
        );
    }

    #[test]
    fn negative_zero_is_zero() {
        assert_eq!(Scalar::from(-0.0), Scalar::from(0.0));
    }

    #[test]
    fn loose_equality_crosses_number_and_string() {
        assert!(Scalar::from(2015.0).loosely_eq(&Scalar::from("2015")));
        assert!(!Scalar::from(2015.0).loosely_eq(&Scalar::from("x")));
    }

    #[test]
    fn integral_numbers_print_without_fraction() {
        assert_eq!(Scalar::from(7.0).to_text(), "7");
        assert_eq!(Scalar::from(0.25).to_text(), "0.25");
    }
}
