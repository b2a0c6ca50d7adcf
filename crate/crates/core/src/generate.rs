//! Arrival generation from a fitted ensemble: segment schedule for the
//! simulation horizon, then per-day, per-bin cumulative inter-arrival sampling.

use std::io::Write;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{date_range, ArrivalDataset, DayArrivals};
use crate::partition::{CellKey, WeekdayAssignment};
use crate::pipeline::AtKdeModel;
use crate::time::{date_of, format_timestamp, midnight, MICROS_PER_SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleProvenance {
    /// The observed label sequence repeats and is continued cyclically.
    ReplicatedPattern { period: usize },
    /// No repetition: every day uses the most recent label.
    MostRecent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSchedule {
    pub labels: Vec<u32>,
    pub provenance: ScheduleProvenance,
}

/// Smallest period `p <= len / 2` under which labels repeat and matching block
/// lengths agree within `tolerance` days. The first and last blocks may be
/// partial; they only need to be no longer than their counterpart plus the
/// tolerance.
pub fn detect_period(labels: &[u32], lengths: &[usize], tolerance: usize) -> Option<usize> {
    let m = labels.len();
    let partial = |i: usize| i == 0 || i == m - 1;
    (1..=m / 2).find(|&p| {
        (0..m - p).all(|i| {
            let j = i + p;
            if labels[i] != labels[j] {
                return false;
            }
            let (a, b) = (lengths[i], lengths[j]);
            match (partial(i), partial(j)) {
                (false, false) => a.abs_diff(b) <= tolerance,
                (true, false) => a <= b + tolerance,
                (false, true) => b <= a + tolerance,
                (true, true) => true,
            }
        })
    })
}

/// Cluster label for each of `num_days` simulated days, starting `skip_days`
/// after the end of the training data.
pub fn estimate_segment_schedule(
    num_days: usize,
    labels: &[u32],
    lengths: &[usize],
    tolerance: usize,
    skip_days: usize,
) -> Result<SegmentSchedule> {
    let (Some(&last_label), true) = (labels.last(), labels.len() == lengths.len()) else {
        return Err(Error::Model("segment labels and lengths missing or inconsistent".into()));
    };
    let Some(period) = detect_period(labels, lengths, tolerance) else {
        return Ok(SegmentSchedule {
            labels: vec![last_label; num_days],
            provenance: ScheduleProvenance::MostRecent,
        });
    };
    let m = labels.len();
    let interior = |i: usize| i != 0 && i != m - 1;
    // Template length per cycle position: the most recent complete block there.
    let template: Vec<usize> = (0..period)
        .map(|pos| {
            let blocks = (pos..m).step_by(period);
            blocks
                .clone()
                .rev()
                .find(|&i| interior(i))
                .or_else(|| blocks.clone().next_back())
                .map(|i| lengths[i].max(1))
                .unwrap()
        })
        .collect();

    let mut pos = (m - 1) % period;
    let mut remaining = template[pos].saturating_sub(lengths[m - 1]);
    let total = num_days + skip_days;
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        if remaining == 0 {
            pos = (pos + 1) % period;
            remaining = template[pos];
            continue;
        }
        out.push(labels[pos]);
        remaining -= 1;
    }
    Ok(SegmentSchedule {
        labels: out.split_off(skip_days),
        provenance: ScheduleProvenance::ReplicatedPattern { period },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Days(u32),
    Cases(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// First instant that may receive an arrival; the simulation starts on its date.
    pub start: i64,
    pub horizon: Horizon,
    pub seed: u64,
}

/// Start instant and day count of a simulation period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationWindow {
    pub start: i64,
    pub days: u32,
}

impl SimulationWindow {
    /// The window covered by `test` when it directly follows `train`.
    pub fn following(train: &ArrivalDataset, test: &ArrivalDataset) -> Self {
        let after_train = train.arrivals().last().map_or(i64::MIN, |t| t + 1);
        let test_start = test.first_date().map_or(after_train, midnight);
        Self {
            start: after_train.max(test_start),
            days: test.num_days() as u32,
        }
    }

    pub fn config(&self, seed: u64) -> GenerationConfig {
        GenerationConfig {
            start: self.start,
            horizon: Horizon::Days(self.days),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeneratedArrivals {
    pub days: Vec<DayArrivals>,
}

impl GeneratedArrivals {
    pub fn arrivals(&self) -> impl Iterator<Item = i64> + '_ {
        self.days.iter().flat_map(|d| d.timestamps.iter().copied())
    }

    pub fn total(&self) -> usize {
        self.days.iter().map(DayArrivals::len).sum()
    }

    pub fn into_dataset(self) -> ArrivalDataset {
        ArrivalDataset { days: self.days }
    }

    /// `case_id,timestamp` rows with synthetic ids `sim_1`, `sim_2`, ….
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["case_id", "timestamp"])?;
        for (n, t) in self.arrivals().enumerate() {
            csv.write_record([format!("sim_{}", n + 1), format_timestamp(t)])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Anything that can produce arrivals for a generation config.
pub trait ArrivalSimulator {
    fn simulate(&self, config: &GenerationConfig) -> Result<GeneratedArrivals>;
}

/// Deterministic per-day random source derived from `(seed, day index)`.
pub fn day_rng(seed: u64, day_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day_index);
    rng
}

/// Shared day loop for all simulators. `generate(day_index, date, rng)` returns
/// the sorted arrivals of one day; arrivals before `config.start` are dropped.
pub(crate) fn run_horizon<F>(config: &GenerationConfig, mean_daily: f64, mut generate: F) -> Result<GeneratedArrivals>
where
    F: FnMut(usize, NaiveDate, &mut ChaCha8Rng) -> Result<Vec<i64>>,
{
    let first = date_of(config.start);
    let (max_days, target) = match config.horizon {
        Horizon::Days(n) => (n as usize, None),
        Horizon::Cases(0) => (0, Some(0)),
        Horizon::Cases(n) => (case_day_limit(n, mean_daily), Some(n as usize)),
    };
    let mut days = Vec::new();
    let mut produced = 0usize;
    for (i, date) in date_range(first, NaiveDate::MAX).take(max_days).enumerate() {
        if target.is_some_and(|t| produced >= t) {
            break;
        }
        let mut rng = day_rng(config.seed, i as u64);
        let mut timestamps = generate(i, date, &mut rng)?;
        timestamps.retain(|&t| t >= config.start);
        if let Some(t) = target {
            timestamps.truncate(t - produced);
        }
        produced += timestamps.len();
        days.push(DayArrivals { date, timestamps });
    }
    if let Some(t) = target {
        if produced < t {
            return Err(Error::Generation(format!(
                "only {produced} of {t} cases generated within {max_days} days"
            )));
        }
    }
    Ok(GeneratedArrivals { days })
}

/// Day budget for a case-count horizon: ten times the expected number of days.
pub fn case_day_limit(cases: u64, mean_daily: f64) -> usize {
    let expected = if mean_daily > 0.0 {
        (cases as f64 / mean_daily).ceil() as usize
    } else {
        1
    };
    10 * expected.max(7)
}

/// Arrivals of one simulated day for global cluster `label`.
///
/// In each bin a cursor starts at the bin start and advances by sampled
/// inter-arrival times; every position strictly before the bin end (or at it,
/// for the last bin) is an arrival.
pub fn generate_day(model: &AtKdeModel, date: NaiveDate, label: u32, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let weekday = match model.weekday_clusters.assignment(label, crate::time::weekday_number(date)) {
        WeekdayAssignment::Cluster(k) => k,
        WeekdayAssignment::NoData => return Vec::new(),
    };
    let day_start = midnight(date);
    let bins = model.grid.num_bins();
    let mut out = Vec::new();
    for l in 0..bins {
        let key = CellKey {
            global: label,
            weekday,
            bin: l as u32 + 1,
        };
        let Some(kde) = model.ensemble.get(&key) else {
            continue;
        };
        let (start, end) = model.grid.bin(l);
        let closed = l + 1 == bins;
        let mut cursor = start;
        loop {
            let step = (kde.sample(rng) * MICROS_PER_SECOND as f64).round() as i64;
            cursor = cursor.saturating_add(step.max(1));
            if cursor > end || (cursor == end && !closed) {
                break;
            }
            out.push(day_start + cursor);
        }
    }
    out
}

pub fn generate_arrivals(model: &AtKdeModel, config: &GenerationConfig) -> Result<GeneratedArrivals> {
    let start_date = date_of(config.start);
    let skip = (start_date - model.training_last_date).num_days().max(1) as usize - 1;
    let max_days = match config.horizon {
        Horizon::Days(n) => n as usize,
        Horizon::Cases(n) => case_day_limit(n, model.mean_daily_arrivals),
    };
    let schedule = estimate_segment_schedule(max_days, &model.labels, &model.segment_lengths, model.window, skip)?;
    run_horizon(config, model.mean_daily_arrivals, |i, date, rng| {
        Ok(generate_day(model, date, schedule.labels[i], rng))
    })
}

impl ArrivalSimulator for AtKdeModel {
    fn simulate(&self, config: &GenerationConfig) -> Result<GeneratedArrivals> {
        generate_arrivals(self, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_pattern_continues() {
        let s = estimate_segment_schedule(60, &[1, 2, 1, 2], &[30; 4], 7, 0).unwrap();
        assert_eq!(s.provenance, ScheduleProvenance::ReplicatedPattern { period: 2 });
        assert!(s.labels[..30].iter().all(|&l| l == 1));
        assert!(s.labels[30..].iter().all(|&l| l == 2));
    }

    #[test]
    fn single_cluster() {
        let s = estimate_segment_schedule(10, &[1], &[100], 7, 0).unwrap();
        assert_eq!(s.labels, vec![1; 10]);
        assert_eq!(s.provenance, ScheduleProvenance::MostRecent);
    }

    #[test]
    fn no_repetition_uses_most_recent() {
        let s = estimate_segment_schedule(15, &[1, 2, 3], &[20, 20, 20], 7, 0).unwrap();
        assert_eq!(s.labels, vec![3; 15]);
        assert_eq!(s.provenance, ScheduleProvenance::MostRecent);
        let s = estimate_segment_schedule(5, &[1, 2, 1], &[40, 20, 30], 7, 0).unwrap();
        assert_eq!(s.provenance, ScheduleProvenance::MostRecent);
        assert_eq!(s.labels, vec![1; 5]);
    }

    #[test]
    fn partial_last_block_is_finished_first() {
        // Final block of label 2 has 10 of its 30 days.
        let s = estimate_segment_schedule(50, &[1, 2, 1, 2], &[30, 30, 30, 10], 7, 0).unwrap();
        assert!(s.labels[..20].iter().all(|&l| l == 2));
        assert!(s.labels[20..50].iter().all(|&l| l == 1));
    }

    #[test]
    fn mismatched_lengths_break_the_pattern() {
        assert_eq!(detect_period(&[1, 2, 1, 2, 1], &[30, 30, 30, 60, 5], 7), None);
        assert_eq!(detect_period(&[1, 2, 1, 2, 1], &[30, 30, 32, 27, 5], 7), Some(2));
        assert_eq!(detect_period(&[1, 2, 3, 1, 2, 3], &[10, 20, 30, 10, 20, 30], 7), Some(3));
    }

    #[test]
    fn skipped_days_shift_the_cycle() {
        let full = estimate_segment_schedule(90, &[1, 2, 1, 2], &[30; 4], 7, 0).unwrap();
        let skipped = estimate_segment_schedule(80, &[1, 2, 1, 2], &[30; 4], 7, 10).unwrap();
        assert_eq!(&full.labels[10..], skipped.labels.as_slice());
    }

    fn hourly_model(no_data_weekday: Option<u8>) -> AtKdeModel {
        use crate::kde::{EnsembleCell, KdeModel, ModelEnsemble};
        use crate::partition::{make_bin_grid, WeekdayClusterMap, WeekdayClusters};
        use crate::time::MICROS_PER_HOUR;
        let assignments = std::array::from_fn(|w| {
            if no_data_weekday == Some(w as u8 + 1) {
                WeekdayAssignment::NoData
            } else {
                WeekdayAssignment::Cluster(1)
            }
        });
        let weekdays = WeekdayClusters {
            assignments,
            num_clusters: 1,
            features: [None; 7],
        };
        AtKdeModel {
            window: 7,
            labels: vec![1],
            segment_lengths: vec![14],
            weekday_clusters: WeekdayClusterMap {
                by_global: [(1, weekdays)].into_iter().collect(),
            },
            // [09:00, 12:00) and [12:00, 15:00]; only the first bin has a model.
            grid: make_bin_grid(9 * MICROS_PER_HOUR, 15 * MICROS_PER_HOUR, 2).unwrap(),
            ensemble: ModelEnsemble {
                bandwidth_factor: 1.0,
                cells: vec![EnsembleCell {
                    key: CellKey { global: 1, weekday: 1, bin: 1 },
                    model: KdeModel::new(vec![3600.0], 1e-9).unwrap(),
                }],
            },
            training_last_date: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
            mean_daily_arrivals: 2.0,
            default_window: None,
            bandwidth_search: None,
        }
    }

    fn ts(s: &str) -> i64 {
        crate::time::parse_timestamp(s).unwrap()
    }

    #[test]
    fn hourly_cursor_in_one_bin() {
        let model = hourly_model(None);
        let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let got = generate_day(&model, date, 1, &mut day_rng(0, 0));
        assert_eq!(got, vec![ts("2024-01-01T10:00:00Z"), ts("2024-01-01T11:00:00Z")]);
    }

    #[test]
    fn no_data_weekday_is_empty() {
        // 2024-01-01 is a Monday.
        let model = hourly_model(Some(1));
        let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        assert!(generate_day(&model, date, 1, &mut day_rng(0, 0)).is_empty());
        let next = date.succ_opt().unwrap();
        assert_eq!(generate_day(&model, next, 1, &mut day_rng(0, 1)).len(), 2);
    }

    #[test]
    fn day_and_case_horizons() {
        let model = hourly_model(None);
        let start = ts("2024-01-01T00:00:00Z");
        let days = |n| GenerationConfig { start, horizon: Horizon::Days(n), seed: 1 };
        assert!(generate_arrivals(&model, &days(0)).unwrap().days.is_empty());
        let two = generate_arrivals(&model, &days(2)).unwrap();
        assert_eq!(two.days.iter().map(DayArrivals::len).collect::<Vec<_>>(), vec![2, 2]);
        let cases = GenerationConfig { start, horizon: Horizon::Cases(5), seed: 1 };
        let five = generate_arrivals(&model, &cases).unwrap();
        assert_eq!(five.days.iter().map(DayArrivals::len).collect::<Vec<_>>(), vec![2, 2, 1]);
    }

    #[test]
    fn start_instant_drops_earlier_arrivals() {
        let model = hourly_model(None);
        let config = GenerationConfig {
            start: ts("2024-01-01T10:30:00Z"),
            horizon: Horizon::Days(1),
            seed: 1,
        };
        let out = generate_arrivals(&model, &config).unwrap();
        assert_eq!(out.arrivals().collect::<Vec<_>>(), vec![ts("2024-01-01T11:00:00Z")]);
    }

    #[test]
    fn unreachable_case_count_aborts() {
        let model = hourly_model(None);
        let config = GenerationConfig {
            start: ts("2024-01-01T00:00:00Z"),
            horizon: Horizon::Cases(1_000),
            seed: 1,
        };
        // 2 per day, budget 10 * 500 days: reachable. Remove the only cell to make it hopeless.
        assert_eq!(generate_arrivals(&model, &config).unwrap().total(), 1_000);
        let mut empty = model;
        empty.ensemble.cells.clear();
        assert!(matches!(generate_arrivals(&empty, &config), Err(Error::Generation(_))));
    }

    #[test]
    fn csv_output() {
        let model = hourly_model(None);
        let config = GenerationConfig {
            start: ts("2024-01-01T00:00:00Z"),
            horizon: Horizon::Days(1),
            seed: 1,
        };
        let mut buf = Vec::new();
        generate_arrivals(&model, &config).unwrap().write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "case_id,timestamp\nsim_1,2024-01-01T10:00:00.000000Z\nsim_2,2024-01-01T11:00:00.000000Z\n"
        );
    }

    #[test]
    fn case_day_budget() {
        assert_eq!(case_day_limit(100, 10.0), 100);
        assert_eq!(case_day_limit(5, 10.0), 70);
    }
}
