//! Instants are `i64` microseconds since the Unix epoch, UTC.

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Utc};

pub const MICROS_PER_SECOND: i64 = 1_000_000;
pub const MICROS_PER_HOUR: i64 = 3_600 * MICROS_PER_SECOND;
pub const MICROS_PER_DAY: i64 = 24 * MICROS_PER_HOUR;

const NAIVE_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO-8601 timestamp. Values without an offset are read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc).timestamp_micros());
    }
    if let Ok(dt) = DateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f%:z") {
        return Some(dt.with_timezone(&Utc).timestamp_micros());
    }
    for fmt in NAIVE_FORMATS {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc().timestamp_micros());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .map(midnight)
}

/// Canonical rendering, always with six fractional digits and a `Z` suffix.
pub fn format_timestamp(micros: i64) -> String {
    Utc.timestamp_micros(micros)
        .single()
        .expect("timestamp in chrono range")
        .format("%Y-%m-%dT%H:%M:%S%.6fZ")
        .to_string()
}

pub fn date_of(micros: i64) -> NaiveDate {
    DateTime::from_timestamp_micros(micros)
        .expect("timestamp in chrono range")
        .date_naive()
}

/// Microseconds since midnight of the instant's own date.
pub fn clock_of(micros: i64) -> i64 {
    micros.rem_euclid(MICROS_PER_DAY)
}

pub fn midnight(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_micros()
}

/// ISO weekday number, Monday = 1 … Sunday = 7.
pub fn weekday_number(date: NaiveDate) -> u8 {
    date.weekday().number_from_monday() as u8
}

pub fn format_clock(clock: i64) -> String {
    let secs = clock / MICROS_PER_SECOND;
    format!("{:02}:{:02}:{:02}", secs / 3600, (secs / 60) % 60, secs % 60)
}
