//! Event-log ingestion, the per-day arrival dataset, and the temporal split.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{date_of, format_timestamp, parse_timestamp, weekday_number};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub case_id: String,
    pub activity: Option<String>,
    pub timestamp: i64,
}

/// Header names of the columns holding case id, timestamp and (optionally) activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub case_id: String,
    pub timestamp: String,
    pub activity: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            case_id: "case_id".to_owned(),
            timestamp: "timestamp".to_owned(),
            activity: None,
        }
    }
}

pub fn parse_event_log(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    parse_event_log_from(file, columns)
}

pub fn parse_event_log_from<R: Read>(reader: R, columns: &ColumnMap) -> Result<Vec<EventRecord>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found in header")))
    };
    let case_idx = find(&columns.case_id)?;
    let ts_idx = find(&columns.timestamp)?;
    let activity_idx = columns.activity.as_deref().map(find).transpose()?;

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let case_id = row.get(case_idx).unwrap_or_default();
        if case_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty case id".to_owned(),
            });
        }
        let raw_ts = row.get(ts_idx).unwrap_or_default();
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp {raw_ts:?}"),
        })?;
        records.push(EventRecord {
            case_id: case_id.to_owned(),
            activity: activity_idx.and_then(|i| row.get(i)).map(str::to_owned),
            timestamp,
        });
    }
    Ok(records)
}

/// Arrivals on one calendar day, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayArrivals {
    pub date: NaiveDate,
    pub timestamps: Vec<i64>,
}

impl DayArrivals {
    pub fn empty(date: NaiveDate) -> Self {
        Self {
            date,
            timestamps: Vec::new(),
        }
    }

    /// Monday = 1 … Sunday = 7.
    pub fn weekday(&self) -> u8 {
        weekday_number(self.date)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// One entry per calendar day from the first to the last covered date, with
/// zero-arrival days kept as empty entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArrivalDataset {
    pub days: Vec<DayArrivals>,
}

impl ArrivalDataset {
    /// Groups arbitrary timestamps into a contiguous day sequence.
    pub fn from_timestamps(timestamps: impl IntoIterator<Item = i64>) -> Self {
        let mut all: Vec<i64> = timestamps.into_iter().collect();
        all.sort_unstable();
        let (Some(&first), Some(&last)) = (all.first(), all.last()) else {
            return Self::default();
        };
        let mut days: Vec<DayArrivals> = date_range(date_of(first), date_of(last))
            .map(DayArrivals::empty)
            .collect();
        let origin = days[0].date;
        for t in all {
            let idx = (date_of(t) - origin).num_days() as usize;
            days[idx].timestamps.push(t);
        }
        Self { days }
    }

    /// Builds a dataset over an explicit date range; timestamps outside it are dropped.
    pub fn over_dates(start: NaiveDate, end: NaiveDate, timestamps: &[i64]) -> Self {
        let mut days: Vec<DayArrivals> = date_range(start, end).map(DayArrivals::empty).collect();
        for &t in timestamps {
            let d = date_of(t);
            if d >= start && d <= end {
                days[(d - start).num_days() as usize].timestamps.push(t);
            }
        }
        for day in &mut days {
            day.timestamps.sort_unstable();
        }
        Self { days }
    }

    pub fn num_days(&self) -> usize {
        self.days.len()
    }

    pub fn total_arrivals(&self) -> usize {
        self.days.iter().map(DayArrivals::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_arrivals() == 0
    }

    pub fn arrivals(&self) -> impl Iterator<Item = i64> + '_ {
        self.days.iter().flat_map(|d| d.timestamps.iter().copied())
    }

    pub fn daily_counts(&self) -> Vec<u64> {
        self.days.iter().map(|d| d.len() as u64).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.days.first().map(|d| d.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.days.last().map(|d| d.date)
    }

    /// Checks the structural invariants: consecutive dates, sorted days,
    /// every timestamp on its own date.
    pub fn validate(&self) -> Result<()> {
        for pair in self.days.windows(2) {
            if pair[1].date != pair[0].date.succ_opt().unwrap() {
                return Err(Error::Model(format!(
                    "days not contiguous at {}",
                    pair[1].date
                )));
            }
        }
        for day in &self.days {
            if day.timestamps.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Model(format!("unsorted arrivals on {}", day.date)));
            }
            if let Some(t) = day.timestamps.iter().find(|&&t| date_of(t) != day.date) {
                return Err(Error::Model(format!(
                    "arrival {} does not fall on {}",
                    format_timestamp(*t),
                    day.date
                )));
            }
        }
        Ok(())
    }

    /// Canonical CSV: `date,timestamp`, ascending. Days without arrivals are
    /// written as a row with an empty timestamp so the day range survives.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["date", "timestamp"])?;
        for day in &self.days {
            let date = day.date.to_string();
            if day.is_empty() {
                csv.write_record([date.as_str(), ""])?;
            }
            for &t in &day.timestamps {
                csv.write_record([date.as_str(), format_timestamp(t).as_str()])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let mut days: Vec<DayArrivals> = Vec::new();
        for row in csv.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse { line, message };
            let date = NaiveDate::parse_from_str(row.get(0).unwrap_or_default(), "%Y-%m-%d")
                .map_err(|e| parse_err(format!("bad date: {e}")))?;
            if days.last().map(|d| d.date) != Some(date) {
                if let Some(prev) = days.last() {
                    if date < prev.date {
                        return Err(parse_err("dates not ascending".to_owned()));
                    }
                    let mut fill = prev.date.succ_opt().unwrap();
                    while fill < date {
                        days.push(DayArrivals::empty(fill));
                        fill = fill.succ_opt().unwrap();
                    }
                }
                days.push(DayArrivals::empty(date));
            }
            let raw = row.get(1).unwrap_or_default();
            if !raw.is_empty() {
                let t = parse_timestamp(raw)
                    .ok_or_else(|| parse_err(format!("unparseable timestamp {raw:?}")))?;
                days.last_mut().unwrap().timestamps.push(t);
            }
        }
        let dataset = Self { days };
        dataset.validate()?;
        Ok(dataset)
    }
}

pub fn date_range(start: NaiveDate, end: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    start.iter_days().take_while(move |d| *d <= end)
}

/// Case arrival = earliest event timestamp of the case.
pub fn derive_arrivals(records: &[EventRecord]) -> Result<ArrivalDataset> {
    if records.is_empty() {
        return Err(Error::EmptyInput("event log has no records"));
    }
    let mut first_seen: HashMap<&str, i64> = HashMap::new();
    for r in records {
        first_seen
            .entry(r.case_id.as_str())
            .and_modify(|t| *t = (*t).min(r.timestamp))
            .or_insert(r.timestamp);
    }
    let mut arrivals: Vec<(i64, &str)> = first_seen.into_iter().map(|(c, t)| (t, c)).collect();
    arrivals.sort_unstable();
    Ok(ArrivalDataset::from_timestamps(arrivals.into_iter().map(|(t, _)| t)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8 }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self { train_fraction })
    }

    /// Number of arrivals that go to the training part, in `1..total`.
    pub fn train_count(&self, total: usize) -> usize {
        let raw = (self.train_fraction * total as f64 - 1e-9).ceil().max(0.0) as usize;
        raw.clamp(1, total - 1)
    }
}

/// Splits by arrival order: the first `ceil(fraction * total)` arrivals train.
///
/// The day holding the boundary is shared, cut at the boundary arrival. Empty
/// days after the last training arrival belong to the test part.
pub fn temporal_split(
    dataset: &ArrivalDataset,
    spec: SplitSpec,
) -> Result<(ArrivalDataset, ArrivalDataset)> {
    SplitSpec::new(spec.train_fraction)?;
    let total = dataset.total_arrivals();
    if total < 2 {
        return Err(Error::Split(format!("need at least 2 arrivals, got {total}")));
    }
    let n_train = spec.train_count(total);

    let mut train_days = Vec::new();
    let mut test_days = Vec::new();
    let mut seen = 0usize;
    for day in &dataset.days {
        if seen >= n_train {
            test_days.push(day.clone());
            continue;
        }
        let take = (n_train - seen).min(day.len());
        seen += take;
        if take == day.len() {
            train_days.push(day.clone());
        } else {
            train_days.push(DayArrivals {
                date: day.date,
                timestamps: day.timestamps[..take].to_vec(),
            });
            test_days.push(DayArrivals {
                date: day.date,
                timestamps: day.timestamps[take..].to_vec(),
            });
        }
    }
    Ok((
        ArrivalDataset { days: train_days },
        ArrivalDataset { days: test_days },
    ))
}
