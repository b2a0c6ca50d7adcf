//! Weekday clustering inside each global cluster, intraday bins, and the
//! resulting (global, weekday, bin) partition of the training arrivals.

mod ward;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use ward::{silhouette, WardDendrogram};

use crate::divide::{segment_features, within_day_interarrivals, GlobalClustering, SegmentFeatures};
use crate::error::{Error, Result};
use crate::eventlog::{ArrivalDataset, DayArrivals};
use crate::stats::standardize;
use crate::time::{clock_of, MICROS_PER_DAY, MICROS_PER_SECOND};

/// Silhouette below this keeps all populated weekdays in one cluster.
pub const MIN_SILHOUETTE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekdayAssignment {
    Cluster(u32),
    NoData,
}

/// Weekday → cluster mapping of one global cluster. Index 0 is Monday.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekdayClusters {
    pub assignments: [WeekdayAssignment; 7],
    /// Number of regular clusters, not counting NoData.
    pub num_clusters: u32,
    pub features: [Option<SegmentFeatures>; 7],
}

impl WeekdayClusters {
    pub fn assignment(&self, weekday: u8) -> WeekdayAssignment {
        self.assignments[usize::from(weekday - 1)]
    }

    pub fn has_no_data(&self) -> bool {
        self.assignments.contains(&WeekdayAssignment::NoData)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeekdayClusterMap {
    pub by_global: BTreeMap<u32, WeekdayClusters>,
}

impl WeekdayClusterMap {
    pub fn assignment(&self, global: u32, weekday: u8) -> WeekdayAssignment {
        self.by_global
            .get(&global)
            .map_or(WeekdayAssignment::NoData, |w| w.assignment(weekday))
    }
}

/// Chooses a flat cut of the Ward dendrogram by mean silhouette.
pub fn cluster_feature_vectors(features: &[[f64; 6]]) -> Vec<u32> {
    let n = features.len();
    if n < 3 {
        return vec![1; n];
    }
    let standardized = standardize(features);
    let dendrogram = WardDendrogram::build(&standardized);
    let mut best: Option<(f64, Vec<u32>)> = None;
    for k in 2..n {
        let labels = dendrogram.cut(k);
        let score = silhouette(&standardized, &labels);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, labels));
        }
    }
    match best {
        Some((score, labels)) if score >= MIN_SILHOUETTE => labels,
        _ => vec![1; n],
    }
}

pub fn cluster_weekdays(dataset: &ArrivalDataset, globals: &GlobalClustering) -> WeekdayClusterMap {
    let mut by_global = BTreeMap::new();
    for label in 1..=globals.num_clusters() as u32 {
        let days: Vec<&DayArrivals> = globals
            .cluster_days(label)
            .into_iter()
            .map(|i| &dataset.days[i])
            .collect();
        by_global.insert(label, cluster_weekdays_of(&days));
    }
    WeekdayClusterMap { by_global }
}

/// Weekday clustering for the days of a single global cluster.
pub fn cluster_weekdays_of(days: &[&DayArrivals]) -> WeekdayClusters {
    let mut features: [Option<SegmentFeatures>; 7] = [None; 7];
    for weekday in 1..=7u8 {
        let of_weekday: Vec<&DayArrivals> = days.iter().copied().filter(|d| d.weekday() == weekday).collect();
        if of_weekday.iter().any(|d| !d.is_empty()) {
            features[usize::from(weekday - 1)] = Some(segment_features(of_weekday.iter().copied()));
        }
    }
    let populated: Vec<usize> = (0..7).filter(|&w| features[w].is_some()).collect();
    let vectors: Vec<[f64; 6]> = populated.iter().map(|&w| features[w].unwrap().as_array()).collect();
    let labels = cluster_feature_vectors(&vectors);
    let mut assignments = [WeekdayAssignment::NoData; 7];
    for (&w, &l) in populated.iter().zip(&labels) {
        assignments[w] = WeekdayAssignment::Cluster(l);
    }
    WeekdayClusters {
        assignments,
        num_clusters: labels.iter().copied().max().unwrap_or(0),
        features,
    }
}

/// Earliest and latest clock time of any arrival, widened by 30 minutes on
/// each side when they coincide.
pub fn determine_bounds(dataset: &ArrivalDataset) -> Result<(i64, i64)> {
    let mut clocks = dataset.arrivals().map(clock_of);
    let first = clocks.next().ok_or(Error::EmptyInput("no arrivals to bound"))?;
    let (lo, hi) = clocks.fold((first, first), |(lo, hi), c| (lo.min(c), hi.max(c)));
    if lo < hi {
        return Ok((lo, hi));
    }
    let half_hour = 30 * 60 * MICROS_PER_SECOND;
    Ok(((lo - half_hour).max(0), (hi + half_hour).min(MICROS_PER_DAY - 1)))
}

/// `bins` equal-width clock-time intervals over `[lower, upper]`. All bins are
/// half-open except the last, which includes `upper`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinGrid {
    pub lower: i64,
    pub upper: i64,
    pub edges: Vec<i64>,
}

pub fn make_bin_grid(lower: i64, upper: i64, bins: usize) -> Result<BinGrid> {
    if bins < 1 {
        return Err(Error::Config("number of bins must be at least 1".into()));
    }
    if lower >= upper {
        return Err(Error::Config(format!("bin bounds not increasing: {lower} >= {upper}")));
    }
    let span = (upper - lower) as i128;
    let edges = (0..=bins)
        .map(|l| lower + (span * l as i128 / bins as i128) as i64)
        .collect::<Vec<_>>();
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bins narrower than one microsecond".into()));
    }
    Ok(BinGrid { lower, upper, edges })
}

impl BinGrid {
    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// `(start, end)` clock times of bin `index` (0-based).
    pub fn bin(&self, index: usize) -> (i64, i64) {
        (self.edges[index], self.edges[index + 1])
    }

    /// 0-based bin of a clock time; values outside the bounds are clamped.
    pub fn bin_of(&self, clock: i64) -> usize {
        let c = clock.clamp(self.lower, self.upper);
        let last = self.num_bins() - 1;
        // First edge strictly greater than c, minus one.
        let idx = self.edges.partition_point(|&e| e <= c);
        idx.saturating_sub(1).min(last)
    }
}

/// `(global cluster, weekday cluster, bin)`, all 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub global: u32,
    pub weekday: u32,
    pub bin: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub timestamps: Vec<i64>,
    /// Inter-arrival seconds, computed within one (day, bin) and pooled.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingPartition {
    pub cells: BTreeMap<CellKey, Cell>,
}

impl TrainingPartition {
    pub fn total_timestamps(&self) -> usize {
        self.cells.values().map(|c| c.timestamps.len()).sum()
    }
}

pub fn build_partition(
    train: &ArrivalDataset,
    globals: &GlobalClustering,
    weekdays: &WeekdayClusterMap,
    grid: &BinGrid,
) -> Result<TrainingPartition> {
    let day_labels = globals.day_labels();
    if day_labels.len() != train.num_days() {
        return Err(Error::Model(format!(
            "segments cover {} days, dataset has {}",
            day_labels.len(),
            train.num_days()
        )));
    }
    let mut cells: BTreeMap<CellKey, Cell> = BTreeMap::new();
    for (day, &global) in train.days.iter().zip(&day_labels) {
        if day.is_empty() {
            continue;
        }
        let weekday = match weekdays.assignment(global, day.weekday()) {
            WeekdayAssignment::Cluster(k) => k,
            WeekdayAssignment::NoData => {
                return Err(Error::Model(format!(
                    "{} has arrivals but its weekday is NoData in cluster {global}",
                    day.date
                )))
            }
        };
        let mut per_bin: Vec<DayArrivals> = vec![DayArrivals::empty(day.date); grid.num_bins()];
        for &t in &day.timestamps {
            per_bin[grid.bin_of(clock_of(t))].timestamps.push(t);
        }
        for (l, part) in per_bin.iter().enumerate() {
            if part.is_empty() {
                continue;
            }
            let key = CellKey {
                global,
                weekday,
                bin: l as u32 + 1,
            };
            let cell = cells.entry(key).or_default();
            cell.timestamps.extend_from_slice(&part.timestamps);
            cell.samples.extend(within_day_interarrivals([part]));
        }
    }
    Ok(TrainingPartition { cells })
}
