//! ISO-8601 parsing and calendar bucketing for temporal attributes.

use alloc::format;
use alloc::string::String;

use chrono::{DateTime, Datelike, Months, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::value::Scalar;

/// The finest calendar unit a value was written with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Second,
    Day,
    Month,
    Year,
}

/// Bucket size for temporal series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Day,
    Month,
    Year,
}

impl Granularity {
    fn at_least(precision: Precision) -> Granularity {
        match precision {
            Precision::Second | Precision::Day => Granularity::Day,
            Precision::Month => Granularity::Month,
            Precision::Year => Granularity::Year,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timestamp {
    /// Seconds since 1970-01-01T00:00:00Z.
    pub epoch: i64,
    pub precision: Precision,
}

fn digits(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn date_epoch(date: NaiveDate) -> i64 {
    date.and_time(NaiveTime::MIN).and_utc().timestamp()
}

/// Parses `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, and date-times with or without an offset.
pub fn parse_iso(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    let bytes = s.as_bytes();
    match bytes.len() {
        4 => {
            let year = digits(s)?;
            let date = NaiveDate::from_ymd_opt(year as i32, 1, 1)?;
            return Some(Timestamp {
                epoch: date_epoch(date),
                precision: Precision::Year,
            });
        }
        7 if bytes[4] == b'-' => {
            let year = digits(&s[..4])?;
            let month = digits(&s[5..])?;
            let date = NaiveDate::from_ymd_opt(year as i32, month, 1)?;
            return Some(Timestamp {
                epoch: date_epoch(date),
                precision: Precision::Month,
            });
        }
        10 if bytes[4] == b'-' && bytes[7] == b'-' => {
            let date = NaiveDate::from_ymd_opt(
                digits(&s[..4])? as i32,
                digits(&s[5..7])?,
                digits(&s[8..])?,
            )?;
            return Some(Timestamp {
                epoch: date_epoch(date),
                precision: Precision::Day,
            });
        }
        _ => {}
    }
    if bytes.len() < 19 {
        return None;
    }
    let epoch = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp()
    } else {
        let normalized = s.replacen(' ', "T", 1);
        NaiveDateTime::parse_from_str(&normalized, "%Y-%m-%dT%H:%M:%S%.f")
            .ok()?
            .and_utc()
            .timestamp()
    };
    Some(Timestamp {
        epoch,
        precision: Precision::Second,
    })
}

/// Temporal reading of a cell: ISO strings, bare years, or epoch seconds.
pub fn parse_scalar(value: &Scalar) -> Option<Timestamp> {
    match value {
        Scalar::Str(s) => parse_iso(s),
        Scalar::Number(n) if n.is_finite() && crate::value::is_integral(*n) => {
            if (1500.0..=2100.0).contains(n) {
                let date = NaiveDate::from_ymd_opt(*n as i32, 1, 1)?;
                Some(Timestamp {
                    epoch: date_epoch(date),
                    precision: Precision::Year,
                })
            } else {
                Some(Timestamp {
                    epoch: *n as i64,
                    precision: Precision::Second,
                })
            }
        }
        _ => None,
    }
}

fn date_of(epoch: i64) -> NaiveDate {
    DateTime::from_timestamp(epoch, 0)
        .map(|d| d.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// Chooses series granularity from the extent and the data's own precision:
/// more than three years gives years, more than three months gives months,
/// otherwise days; never finer than the values were written.
pub fn choose_granularity(min: i64, max: i64, precision: Precision) -> Granularity {
    let start = date_of(min);
    let end = date_of(max);
    let by_range = if start
        .checked_add_months(Months::new(36))
        .is_some_and(|d| end > d)
    {
        Granularity::Year
    } else if start
        .checked_add_months(Months::new(3))
        .is_some_and(|d| end > d)
    {
        Granularity::Month
    } else {
        Granularity::Day
    };
    by_range.max(Granularity::at_least(precision))
}

/// Start of the bucket holding `epoch`.
pub fn bucket_start(epoch: i64, granularity: Granularity) -> i64 {
    let d = date_of(epoch);
    let start = match granularity {
        Granularity::Year => NaiveDate::from_ymd_opt(d.year(), 1, 1),
        Granularity::Month => NaiveDate::from_ymd_opt(d.year(), d.month(), 1),
        Granularity::Day => Some(d),
    };
    date_epoch(start.unwrap_or(d))
}

pub fn next_bucket(start: i64, granularity: Granularity) -> i64 {
    let d = date_of(start);
    let next = match granularity {
        Granularity::Year => d.checked_add_months(Months::new(12)),
        Granularity::Month => d.checked_add_months(Months::new(1)),
        Granularity::Day => d.succ_opt(),
    };
    next.map(date_epoch).unwrap_or(i64::MAX)
}

pub fn bucket_label(start: i64, granularity: Granularity) -> String {
    let d = date_of(start);
    match granularity {
        Granularity::Year => format!("{:04}", d.year()),
        Granularity::Month => format!("{:04}-{:02}", d.year(), d.month()),
        Granularity::Day => format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_precision() {
        assert_eq!(parse_iso("1970").unwrap(), Timestamp { epoch: 0, precision: Precision::Year });
        assert_eq!(parse_iso("1970-02").unwrap().epoch, 31 * 86_400);
        assert_eq!(parse_iso("1970-01-02").unwrap().precision, Precision::Day);
        assert_eq!(parse_iso("1970-01-01T00:01:00Z").unwrap().epoch, 60);
        assert_eq!(parse_iso("1970-01-01T01:00:00+01:00").unwrap().epoch, 0);
        assert_eq!(parse_iso("1970-01-01 00:00:05").unwrap().epoch, 5);
    }

    #[test]
    fn rejects_non_dates() {
        for s in ["vis", "2015-13", "2015-02-30", "20150", "", "12:00"] {
            assert!(parse_iso(s).is_none(), "{s}");
        }
    }

    #[test]
    fn years_as_numbers() {
        let t = parse_scalar(&Scalar::from(2015.0)).unwrap();
        assert_eq!(t, parse_iso("2015").unwrap());
        assert_eq!(parse_scalar(&Scalar::from(86_400.0)).unwrap().epoch, 86_400);
    }

    #[test]
    fn granularity_follows_range_and_precision() {
        let y = |s| parse_iso(s).unwrap().epoch;
        assert_eq!(
            choose_granularity(y("2015"), y("2017"), Precision::Year),
            Granularity::Year
        );
        assert_eq!(
            choose_granularity(y("2015-01-01"), y("2017-01-01"), Precision::Day),
            Granularity::Month
        );
        assert_eq!(
            choose_granularity(y("2010-01-01"), y("2017-01-01"), Precision::Day),
            Granularity::Year
        );
        assert_eq!(
            choose_granularity(y("2015-01-01"), y("2015-02-01"), Precision::Second),
            Granularity::Day
        );
    }

    #[test]
    fn buckets_walk_the_calendar() {
        let t = parse_iso("2016-02-15T12:00:00Z").unwrap().epoch;
        let m = bucket_start(t, Granularity::Month);
        assert_eq!(bucket_label(m, Granularity::Month), "2016-02");
        assert_eq!(bucket_label(next_bucket(m, Granularity::Month), Granularity::Month), "2016-03");
        assert_eq!(bucket_label(bucket_start(t, Granularity::Year), Granularity::Year), "2016");
        assert_eq!(bucket_label(bucket_start(t, Granularity::Day), Granularity::Day), "2016-02-15");
    }
}
