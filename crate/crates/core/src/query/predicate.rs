use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::QueryError;
use crate::value::Scalar;

/// What a predicate tests on its attribute's values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Test {
    /// Any of the listed values.
    ValueSet { values: Vec<Scalar> },
    /// Numbers, or dates for temporal attributes (ISO strings, years, or epoch seconds).
    Range {
        lo: Scalar,
        hi: Scalar,
        lo_inclusive: bool,
        hi_inclusive: bool,
    },
    Substring { query: String, case_sensitive: bool },
    /// Null cell; for list attributes, an empty list.
    Null,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    #[serde(flatten)]
    pub test: Test,
}

impl Predicate {
    pub fn values<I, V>(attribute: &str, values: I) -> Self
    where
        I: IntoIterator<Item = V>,
        V: Into<Scalar>,
    {
        Self {
            attribute: attribute.into(),
            test: Test::ValueSet {
                values: values.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn equals(attribute: &str, value: impl Into<Scalar>) -> Self {
        Self::values(attribute, [value])
    }

    /// Closed range `[lo, hi]`.
    pub fn range(attribute: &str, lo: impl Into<Scalar>, hi: impl Into<Scalar>) -> Self {
        Self {
            attribute: attribute.into(),
            test: Test::Range {
                lo: lo.into(),
                hi: hi.into(),
                lo_inclusive: true,
                hi_inclusive: true,
            },
        }
    }

    pub fn substring(attribute: &str, query: &str, case_sensitive: bool) -> Self {
        Self {
            attribute: attribute.into(),
            test: Test::Substring {
                query: query.into(),
                case_sensitive,
            },
        }
    }

    pub fn null(attribute: &str) -> Self {
        Self {
            attribute: attribute.into(),
            test: Test::Null,
        }
    }

    pub(crate) fn check_shape(&self) -> Result<(), QueryError> {
        let invalid = |reason: &str| QueryError::InvalidPredicate {
            attribute: self.attribute.clone(),
            reason: reason.into(),
        };
        match &self.test {
            Test::ValueSet { values } if values.is_empty() => Err(invalid("empty value set")),
            Test::Substring { query, .. } if query.is_empty() => Err(invalid("empty substring")),
            _ => Ok(()),
        }
    }
}

/// Case-insensitive substring predicate for the search bar.
pub fn search_predicate(query: &str, attribute: &str) -> Result<Predicate, QueryError> {
    if query.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    Ok(Predicate::substring(attribute, query, false))
}

/// Range filter over a registered derived column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedPredicate {
    pub handle: String,
    pub lo: f64,
    pub hi: f64,
    pub lo_inclusive: bool,
    pub hi_inclusive: bool,
}

impl DerivedPredicate {
    pub fn range(handle: &str, lo: f64, hi: f64) -> Self {
        Self {
            handle: handle.into(),
            lo,
            hi,
            lo_inclusive: true,
            hi_inclusive: true,
        }
    }
}

/// All active filters: AND across attributes, OR within a value set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SelectionState {
    predicates: Vec<Predicate>,
    derived: Vec<DerivedPredicate>,
}

impl SelectionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        predicates: Vec<Predicate>,
        derived: Vec<DerivedPredicate>,
    ) -> Result<Self, QueryError> {
        let mut s = Self::new();
        for p in predicates {
            s.push(p)?;
        }
        for d in derived {
            s.push_derived(d)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, predicate: Predicate) -> Result<(), QueryError> {
        predicate.check_shape()?;
        if self.predicate_for(&predicate.attribute).is_some() {
            return Err(QueryError::DuplicatePredicate(predicate.attribute));
        }
        self.predicates.push(predicate);
        Ok(())
    }

    pub fn push_derived(&mut self, predicate: DerivedPredicate) -> Result<(), QueryError> {
        if self.derived.iter().any(|d| d.handle == predicate.handle) {
            return Err(QueryError::DuplicatePredicate(predicate.handle));
        }
        if !(predicate.lo <= predicate.hi) {
            return Err(QueryError::InvalidPredicate {
                attribute: predicate.handle,
                reason: "range bounds are reversed".into(),
            });
        }
        self.derived.push(predicate);
        Ok(())
    }

    /// Builder form of [`push`](Self::push).
    pub fn with(mut self, predicate: Predicate) -> Result<Self, QueryError> {
        self.push(predicate)?;
        Ok(self)
    }

    pub fn with_derived(mut self, predicate: DerivedPredicate) -> Result<Self, QueryError> {
        self.push_derived(predicate)?;
        Ok(self)
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn derived(&self) -> &[DerivedPredicate] {
        &self.derived
    }

    pub fn predicate_for(&self, attribute: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.attribute == attribute)
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty() && self.derived.is_empty()
    }
}
