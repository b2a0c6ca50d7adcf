//! Global segmentation: change points on smoothed daily counts, segments
//! between them, and density-based clustering of segments.

mod dbscan;

use serde::{Deserialize, Serialize};

pub use dbscan::{dbscan, renumber};

use crate::error::{Error, Result};
use crate::eventlog::{ArrivalDataset, DayArrivals};
use crate::stats::{quantile_sorted, quartiles, sample_std, standardize};
use crate::time::MICROS_PER_SECOND;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivideConfig {
    /// Smoothing window and minimum segment length, in days.
    pub window: usize,
    /// Outlier sensitivities; tried from the largest (least sensitive) down.
    pub sensitivities: Vec<f64>,
    /// Solutions with this many segment clusters or more are rejected.
    pub max_clusters: usize,
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
}

impl Default for DivideConfig {
    fn default() -> Self {
        Self {
            window: 7,
            sensitivities: (1..=10).map(|i| i as f64 / 10.0).collect(),
            max_clusters: 6,
            dbscan_eps: 1.0,
            dbscan_min_samples: 1,
        }
    }
}

impl DivideConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("window must be at least 1 day".into()));
        }
        if self.sensitivities.is_empty() {
            return Err(Error::Config("sensitivity range is empty".into()));
        }
        if let Some(z) = self.sensitivities.iter().find(|z| !(**z > 0.0 && **z <= 1.0)) {
            return Err(Error::Config(format!("sensitivity {z} outside (0, 1]")));
        }
        if self.max_clusters < 2 {
            return Err(Error::Config("max clusters must be at least 2".into()));
        }
        if !(self.dbscan_eps > 0.0) || self.dbscan_min_samples < 1 {
            return Err(Error::Config("invalid DBSCAN parameters".into()));
        }
        Ok(())
    }
}

pub fn arrival_count_sequence(dataset: &ArrivalDataset) -> Vec<u64> {
    dataset.daily_counts()
}

/// Trailing-window means: entry `i` averages `counts[i..i + window]`.
pub fn moving_average(counts: &[u64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || counts.len() < window {
        return Err(Error::InsufficientData {
            needed: window.max(1),
            got: counts.len(),
        });
    }
    Ok(counts
        .windows(window)
        .map(|w| w.iter().sum::<u64>() as f64 / window as f64)
        .collect())
}

/// `diffs[i] = averages[i + window] - averages[i]`.
pub fn sliding_window_differences(averages: &[f64], window: usize) -> Result<Vec<f64>> {
    if averages.len() < window + 1 {
        return Err(Error::InsufficientData {
            needed: window + 1,
            got: averages.len(),
        });
    }
    Ok((0..averages.len() - window)
        .map(|i| averages[i + window] - averages[i])
        .collect())
}

/// Acceptance range `[Q1 - CF, Q3 + CF]` with `CF = 1.5 * IQR * z`.
pub fn acceptance_range(diffs: &[f64], sensitivity: f64) -> (f64, f64) {
    let (q1, q3) = quartiles(diffs);
    let cf = 1.5 * (q3 - q1) * sensitivity;
    (q1 - cf, q3 + cf)
}

/// Indices strictly outside `[low, high]`.
pub fn outlier_candidates(diffs: &[f64], low: f64, high: f64) -> Vec<usize> {
    (0..diffs.len())
        .filter(|&i| diffs[i] < low || diffs[i] > high)
        .collect()
}

/// Collapses each run of consecutive candidate indices to the index with the
/// largest absolute difference (first one on ties).
pub fn collapse_runs(diffs: &[f64], candidates: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run_best: Option<usize> = None;
    let mut prev: Option<usize> = None;
    for &i in candidates {
        if let (Some(p), Some(best)) = (prev, run_best) {
            if i != p + 1 {
                out.push(best);
                run_best = None;
            }
        }
        run_best = match run_best {
            Some(best) if diffs[best].abs() >= diffs[i].abs() => Some(best),
            _ => Some(i),
        };
        prev = Some(i);
    }
    out.extend(run_best);
    out
}

/// Change points as 0-based day indices. Difference index `i` compares the
/// windows starting on days `i` and `i + window`, so the change is anchored on
/// day `i + window`.
pub fn detect_change_points(diffs: &[f64], sensitivity: f64, window: usize) -> Vec<usize> {
    if diffs.is_empty() {
        return Vec::new();
    }
    let (low, high) = acceptance_range(diffs, sensitivity);
    let candidates = outlier_candidates(diffs, low, high);
    collapse_runs(diffs, &candidates)
        .into_iter()
        .map(|i| i + window)
        .collect()
}

/// Inclusive range of 0-based day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_day: usize,
    pub end_day: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_day - self.start_day + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn days<'a>(&self, dataset: &'a ArrivalDataset) -> &'a [DayArrivals] {
        &dataset.days[self.start_day..=self.end_day]
    }
}

/// Cuts `0..num_days` so that each change point starts a new segment.
pub fn cut_segments(change_points: &[usize], num_days: usize) -> Vec<Segment> {
    let mut starts: Vec<usize> = change_points
        .iter()
        .copied()
        .filter(|&c| c > 0 && c < num_days)
        .collect();
    starts.sort_unstable();
    starts.dedup();
    let mut segments = Vec::with_capacity(starts.len() + 1);
    let mut start = 0;
    for c in starts {
        segments.push(Segment {
            start_day: start,
            end_day: c - 1,
        });
        start = c;
    }
    if num_days > 0 {
        segments.push(Segment {
            start_day: start,
            end_day: num_days - 1,
        });
    }
    segments
}

/// Six summary statistics of a run of days: daily-count mean and quartiles,
/// and spread of within-day inter-arrival times (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatures {
    pub mean_daily_arrivals: f64,
    pub p25_daily_arrivals: f64,
    pub p75_daily_arrivals: f64,
    pub std_interarrival_seconds: f64,
    pub p25_interarrival_seconds: f64,
    pub p75_interarrival_seconds: f64,
    /// Fewer than two arrivals (or no same-day pair): inter-arrival features are zero.
    pub degenerate: bool,
}

impl SegmentFeatures {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.mean_daily_arrivals,
            self.p25_daily_arrivals,
            self.p75_daily_arrivals,
            self.std_interarrival_seconds,
            self.p25_interarrival_seconds,
            self.p75_interarrival_seconds,
        ]
    }
}

/// Consecutive differences within each day, in seconds.
pub fn within_day_interarrivals<'a>(days: impl IntoIterator<Item = &'a DayArrivals>) -> Vec<f64> {
    days.into_iter()
        .flat_map(|d| {
            d.timestamps
                .windows(2)
                .map(|w| (w[1] - w[0]) as f64 / MICROS_PER_SECOND as f64)
        })
        .collect()
}

pub fn segment_features<'a>(days: impl IntoIterator<Item = &'a DayArrivals> + Clone) -> SegmentFeatures {
    let mut counts: Vec<f64> = days.clone().into_iter().map(|d| d.len() as f64).collect();
    counts.sort_by(f64::total_cmp);
    let (mean, p25, p75) = if counts.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            crate::stats::mean(&counts),
            quantile_sorted(&counts, 0.25),
            quantile_sorted(&counts, 0.75),
        )
    };
    let mut gaps = within_day_interarrivals(days);
    gaps.sort_by(f64::total_cmp);
    let total: f64 = counts.iter().sum();
    let degenerate = total < 2.0 || gaps.is_empty();
    let (std, g25, g75) = if degenerate {
        (0.0, 0.0, 0.0)
    } else {
        (
            sample_std(&gaps),
            quantile_sorted(&gaps, 0.25),
            quantile_sorted(&gaps, 0.75),
        )
    };
    SegmentFeatures {
        mean_daily_arrivals: mean,
        p25_daily_arrivals: p25,
        p75_daily_arrivals: p75,
        std_interarrival_seconds: std,
        p25_interarrival_seconds: g25,
        p75_interarrival_seconds: g75,
        degenerate,
    }
}

/// Standardizes segment features and labels them with DBSCAN.
pub fn cluster_segments(
    dataset: &ArrivalDataset,
    segments: &[Segment],
    eps: f64,
    min_samples: usize,
) -> Vec<u32> {
    let features: Vec<[f64; 6]> = segments
        .iter()
        .map(|s| segment_features(s.days(dataset)).as_array())
        .collect();
    dbscan(&standardize(&features), eps, min_samples)
}

/// Joins neighbouring segments that carry the same label.
fn merge_adjacent(segments: &[Segment], labels: &[u32]) -> (Vec<Segment>, Vec<u32>) {
    let mut merged: Vec<Segment> = Vec::new();
    let mut merged_labels: Vec<u32> = Vec::new();
    for (seg, &label) in segments.iter().zip(labels) {
        if merged_labels.last() == Some(&label) {
            merged.last_mut().unwrap().end_day = seg.end_day;
        } else {
            merged.push(*seg);
            merged_labels.push(label);
        }
    }
    (merged, renumber(merged_labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalClustering {
    pub change_points: Vec<usize>,
    pub segments: Vec<Segment>,
    /// One label per segment, `1..=J`, first-appearance order.
    pub labels: Vec<u32>,
    /// The sensitivity that produced the accepted solution; `None` on fallback.
    pub sensitivity: Option<f64>,
    pub fallback: bool,
}

impl GlobalClustering {
    pub fn single(num_days: usize) -> Self {
        Self {
            change_points: Vec::new(),
            segments: cut_segments(&[], num_days),
            labels: vec![1],
            sensitivity: None,
            fallback: true,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        self.segments.iter().map(Segment::len).collect()
    }

    /// Global cluster label of every day.
    pub fn day_labels(&self) -> Vec<u32> {
        self.segments
            .iter()
            .zip(&self.labels)
            .flat_map(|(s, &l)| std::iter::repeat_n(l, s.len()))
            .collect()
    }

    /// Day indices belonging to one global cluster.
    pub fn cluster_days(&self, label: u32) -> Vec<usize> {
        self.segments
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .flat_map(|(s, _)| s.start_day..=s.end_day)
            .collect()
    }
}

/// Intermediate series kept for the diagnostics dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivideDiagnostics {
    pub daily_counts: Vec<u64>,
    pub moving_average: Vec<f64>,
    pub differences: Vec<f64>,
    pub clustering: GlobalClustering,
}

pub fn cluster_global_segments(dataset: &ArrivalDataset, config: &DivideConfig) -> Result<GlobalClustering> {
    Ok(cluster_global_segments_with_diagnostics(dataset, config)?.clustering)
}

pub fn cluster_global_segments_with_diagnostics(
    dataset: &ArrivalDataset,
    config: &DivideConfig,
) -> Result<DivideDiagnostics> {
    config.validate()?;
    let n = dataset.num_days();
    if n == 0 {
        return Err(Error::EmptyInput("arrival dataset has no days"));
    }
    let counts = arrival_count_sequence(dataset);
    let w = config.window;
    let fallback = |counts: Vec<u64>, ma: Vec<f64>, diffs: Vec<f64>| DivideDiagnostics {
        daily_counts: counts,
        moving_average: ma,
        differences: diffs,
        clustering: GlobalClustering::single(n),
    };
    if n < 2 * w + 1 {
        let ma = moving_average(&counts, w).unwrap_or_default();
        return Ok(fallback(counts, ma, Vec::new()));
    }
    let ma = moving_average(&counts, w)?;
    let diffs = sliding_window_differences(&ma, w)?;

    let mut sensitivities = config.sensitivities.clone();
    sensitivities.sort_by(|a, b| b.total_cmp(a));
    for z in sensitivities {
        let points = detect_change_points(&diffs, z, w);
        let raw = cut_segments(&points, n);
        let raw_labels = cluster_segments(dataset, &raw, config.dbscan_eps, config.dbscan_min_samples);
        let (segments, labels) = merge_adjacent(&raw, &raw_labels);
        let distinct = labels.iter().copied().max().unwrap_or(0) as usize;
        let shortest = segments.iter().map(Segment::len).min().unwrap_or(0);
        if shortest < w || segments.len() < 2 || distinct >= config.max_clusters {
            continue;
        }
        let change_points = segments.iter().skip(1).map(|s| s.start_day).collect();
        return Ok(DivideDiagnostics {
            daily_counts: counts,
            moving_average: ma,
            differences: diffs,
            clustering: GlobalClustering {
                change_points,
                segments,
                labels,
                sensitivity: Some(z),
                fallback: false,
            },
        });
    }
    Ok(fallback(counts, ma, diffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{parse_timestamp, MICROS_PER_DAY, MICROS_PER_HOUR};

    fn dataset_from_counts(counts: &[usize]) -> ArrivalDataset {
        let base = parse_timestamp("2024-01-01T08:00:00Z").unwrap();
        let mut ts = Vec::new();
        for (d, &c) in counts.iter().enumerate() {
            for k in 0..c {
                ts.push(base + d as i64 * MICROS_PER_DAY + k as i64 * 8 * MICROS_PER_HOUR / c.max(1) as i64);
            }
        }
        let first = crate::time::date_of(base);
        let last = first + chrono::Duration::days(counts.len() as i64 - 1);
        ArrivalDataset::over_dates(first, last, &ts)
    }

    #[test]
    fn counts() {
        assert_eq!(arrival_count_sequence(&dataset_from_counts(&[3, 0, 2])), vec![3, 0, 2]);
        assert_eq!(arrival_count_sequence(&dataset_from_counts(&[0])), vec![0]);
        assert_eq!(arrival_count_sequence(&dataset_from_counts(&[5; 7])), vec![5; 7]);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[2; 7], 7).unwrap(), vec![2.0]);
        assert_eq!(moving_average(&[1, 2, 3, 4], 2).unwrap(), vec![1.5, 2.5, 3.5]);
        assert_eq!(
            moving_average(&[1, 1, 1, 1, 5, 5, 5, 5], 2).unwrap(),
            vec![1.0, 1.0, 1.0, 3.0, 5.0, 5.0, 5.0]
        );
        assert!(matches!(moving_average(&[1, 2], 3), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn sliding_difference_examples() {
        assert_eq!(sliding_window_differences(&[4.0; 5], 2).unwrap(), vec![0.0; 3]);
        assert_eq!(
            sliding_window_differences(&[1.0, 1.0, 1.0, 3.0, 5.0, 5.0, 5.0], 2).unwrap(),
            vec![0.0, 2.0, 4.0, 2.0, 0.0]
        );
        assert_eq!(sliding_window_differences(&[1.5, 2.5, 3.5], 2).unwrap(), vec![2.0]);
        assert!(sliding_window_differences(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn change_point_examples() {
        assert!(detect_change_points(&[3.0; 10], 0.5, 7).is_empty());

        let diffs = [0.0, 2.0, 4.0, 2.0, 0.0];
        let (lo, hi) = acceptance_range(&diffs, 0.1);
        assert!((lo + 0.3).abs() < 1e-12 && (hi - 2.3).abs() < 1e-12);
        assert_eq!(outlier_candidates(&diffs, lo, hi), vec![2]);
        assert_eq!(detect_change_points(&diffs, 0.1, 2), vec![4]);

        let diffs = [10.0, 12.0, 11.0, 0.0, 0.0];
        let cands = outlier_candidates(&diffs, -1.0, 1.0);
        assert_eq!(cands, vec![0, 1, 2]);
        assert_eq!(collapse_runs(&diffs, &cands), vec![1]);
    }

    #[test]
    fn collapse_separate_runs() {
        let diffs = [5.0, -7.0, 0.0, 0.0, 3.0, 9.0, -2.0];
        assert_eq!(collapse_runs(&diffs, &[0, 1, 4, 5]), vec![1, 5]);
    }

    #[test]
    fn cutting() {
        assert_eq!(cut_segments(&[], 10), vec![Segment { start_day: 0, end_day: 9 }]);
        let segs = cut_segments(&[60], 120);
        assert_eq!(segs.iter().map(|s| (s.start_day + 1, s.end_day + 1)).collect::<Vec<_>>(), vec![(1, 60), (61, 120)]);
        let segs = cut_segments(&[30, 60], 90);
        assert_eq!(
            segs.iter().map(|s| (s.start_day + 1, s.end_day + 1)).collect::<Vec<_>>(),
            vec![(1, 30), (31, 60), (61, 90)]
        );
    }

    #[test]
    fn features_of_even_hourly_days() {
        let base = parse_timestamp("2024-01-01T09:00:00Z").unwrap();
        let ts: Vec<i64> = (0..3)
            .flat_map(|d| (0..4).map(move |k| base + d * MICROS_PER_DAY + k * MICROS_PER_HOUR))
            .collect();
        let ds = ArrivalDataset::from_timestamps(ts);
        let f = segment_features(&ds.days);
        assert_eq!(f.mean_daily_arrivals, 4.0);
        assert_eq!((f.p25_daily_arrivals, f.p75_daily_arrivals), (4.0, 4.0));
        assert_eq!(f.std_interarrival_seconds, 0.0);
        assert_eq!((f.p25_interarrival_seconds, f.p75_interarrival_seconds), (3600.0, 3600.0));
        assert!(!f.degenerate);
        assert_eq!(segment_features(&ds.days), f);
    }

    #[test]
    fn single_arrival_is_degenerate() {
        let ds = dataset_from_counts(&[0, 1, 0]);
        let f = segment_features(&ds.days);
        assert!(f.degenerate);
        assert_eq!(f.std_interarrival_seconds, 0.0);
    }

    #[test]
    fn segment_clustering_examples() {
        let ds = dataset_from_counts(&[5; 20]);
        let two = cut_segments(&[10], 20);
        assert_eq!(cluster_segments(&ds, &two, 1.0, 1), vec![1, 1]);
        assert_eq!(cluster_segments(&ds, &cut_segments(&[], 20), 1.0, 1), vec![1]);

        let mut counts = vec![50; 20];
        counts.extend([10; 20]);
        let ds = dataset_from_counts(&counts);
        let four = cut_segments(&[10, 20, 30], 40);
        assert_eq!(cluster_segments(&ds, &four, 1.0, 1), vec![1, 1, 2, 2]);
    }

    #[test]
    fn constant_counts_fall_back() {
        let ds = dataset_from_counts(&[5; 100]);
        let g = cluster_global_segments(&ds, &DivideConfig::default()).unwrap();
        assert!(g.fallback);
        assert_eq!(g.labels, vec![1]);
        assert_eq!(g.segments, vec![Segment { start_day: 0, end_day: 99 }]);
    }

    #[test]
    fn short_dataset_falls_back() {
        let ds = dataset_from_counts(&[5, 9, 1, 30, 2, 1, 40, 3, 3, 3]);
        let g = cluster_global_segments(&ds, &DivideConfig::default()).unwrap();
        assert!(g.fallback);
    }

    #[test]
    fn clean_step_gives_one_change_point() {
        let mut counts = vec![50; 60];
        counts.extend([10; 60]);
        let ds = dataset_from_counts(&counts);
        let g = cluster_global_segments(&ds, &DivideConfig::default()).unwrap();
        assert_eq!(g.change_points, vec![60]);
        assert_eq!(g.labels, vec![1, 2]);
        assert_eq!(g.day_labels().len(), 120);
    }

    #[test]
    fn clean_alternation_gives_repeating_labels() {
        let mut counts = Vec::new();
        for rate in [50, 10, 50, 10] {
            counts.extend(std::iter::repeat_n(rate, 30));
        }
        let ds = dataset_from_counts(&counts);
        let g = cluster_global_segments(&ds, &DivideConfig::default()).unwrap();
        assert_eq!(g.labels, vec![1, 2, 1, 2]);
        assert_eq!(g.change_points, vec![30, 60, 90]);
        assert_eq!(g.cluster_days(1).len(), 60);
    }

    #[test]
    fn config_validation() {
        let mut c = DivideConfig::default();
        c.sensitivities.push(1.5);
        assert!(c.validate().is_err());
        let c = DivideConfig { max_clusters: 1, ..DivideConfig::default() };
        assert!(c.validate().is_err());
    }
}
