//! CADD (earth mover's distance between hourly arrival distributions) and the
//! multi-seed benchmark harness.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_best_distribution, fit_mean};
use crate::error::{Error, Result};
use crate::eventlog::ArrivalDataset;
use crate::generate::{ArrivalSimulator, SimulationWindow};
use crate::pipeline::{AtKdeModel, FitConfig, ModelFile};
use crate::stats::{mean, sample_std};
use crate::time::{clock_of, date_of, weekday_number, MICROS_PER_HOUR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourHistogram {
    pub origin: i64,
    /// Hours since `origin` → arrivals in that hour.
    pub counts: BTreeMap<i64, u64>,
}

impl HourHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

pub fn hourly_histogram(arrivals: &[i64], origin: i64) -> Result<HourHistogram> {
    let mut counts = BTreeMap::new();
    for &t in arrivals {
        if t < origin {
            return Err(Error::BeforeOrigin { arrival: t, origin });
        }
        *counts.entry((t - origin) / MICROS_PER_HOUR).or_insert(0) += 1;
    }
    Ok(HourHistogram { origin, counts })
}

/// 1-Wasserstein distance in hours between the two histograms, each
/// normalized to unit mass.
pub fn emd_1d(a: &HourHistogram, b: &HourHistogram) -> Result<f64> {
    let (ta, tb) = (a.total(), b.total());
    if ta == 0 {
        return Err(Error::EmptyArrivals("first histogram's"));
    }
    if tb == 0 {
        return Err(Error::EmptyArrivals("second histogram's"));
    }
    let shift = (b.origin - a.origin) as f64 / MICROS_PER_HOUR as f64;
    if shift.fract() != 0.0 {
        return Err(Error::Model("histogram origins are not whole hours apart".into()));
    }
    let shift = shift as i64;
    let mut mass: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for (&h, &c) in &a.counts {
        mass.entry(h).or_default().0 += c;
    }
    for (&h, &c) in &b.counts {
        mass.entry(h + shift).or_default().1 += c;
    }
    let (mut ca, mut cb) = (0u64, 0u64);
    let mut distance = 0.0;
    let mut iter = mass.iter().peekable();
    while let Some((&h, &(ma, mb))) = iter.next() {
        ca += ma;
        cb += mb;
        if let Some((&next, _)) = iter.peek() {
            let gap = ca as f64 / ta as f64 - cb as f64 / tb as f64;
            distance += gap.abs() * (next - h) as f64;
        }
    }
    Ok(distance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaddReport {
    pub cadd: f64,
    pub sqrt_cadd: f64,
    pub test_count: usize,
    pub sim_count: usize,
}

pub fn cadd(test: &[i64], sim: &[i64]) -> Result<CaddReport> {
    if test.is_empty() {
        return Err(Error::EmptyArrivals("test"));
    }
    if sim.is_empty() {
        return Err(Error::EmptyArrivals("simulated"));
    }
    let origin = test.iter().chain(sim).copied().min().unwrap();
    let value = emd_1d(&hourly_histogram(test, origin)?, &hourly_histogram(sim, origin)?)?;
    Ok(CaddReport {
        cadd: value,
        sqrt_cadd: value.sqrt(),
        test_count: test.len(),
        sim_count: sim.len(),
    })
}

/// Arrival counts by weekday (row 0 = Monday) and hour of day.
pub fn weekday_hour_counts(arrivals: impl IntoIterator<Item = i64>) -> [[u64; 24]; 7] {
    let mut m = [[0u64; 24]; 7];
    for t in arrivals {
        let w = usize::from(weekday_number(date_of(t)) - 1);
        let h = (clock_of(t) / MICROS_PER_HOUR) as usize;
        m[w][h] += 1;
    }
    m
}

/// Model families the benchmark knows how to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    AtKde(FitConfig),
    Mean,
    BestDistribution,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::AtKde(_) => "at_kde",
            ModelSpec::Mean => "mean",
            ModelSpec::BestDistribution => "best_distribution",
        }
    }

    pub fn fit(&self, train: &ArrivalDataset, seed: u64) -> Result<ModelFile> {
        Ok(match self {
            ModelSpec::AtKde(config) => ModelFile::AtKde(AtKdeModel::fit(train, config, seed)?.0),
            ModelSpec::Mean => ModelFile::Mean(fit_mean(train)?),
            ModelSpec::BestDistribution => ModelFile::BestDistribution(fit_best_distribution(train)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub mean_sqrt_cadd: f64,
    pub std_sqrt_cadd: f64,
    pub fit_seconds: f64,
    pub gen_seconds: f64,
    pub scores: Vec<f64>,
    pub error: Option<String>,
    /// Weekday × hour counts of the first run's arrivals.
    pub weekday_hour: Option<[[u64; 24]; 7]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub runs: u32,
    pub base_seed: u64,
    pub window: SimulationWindow,
    pub test_weekday_hour: [[u64; 24]; 7],
    /// Successful models by ascending mean √CADD, then failed models.
    pub rows: Vec<BenchmarkRow>,
}

fn run_one(
    spec: &ModelSpec,
    train: &ArrivalDataset,
    target: &[i64],
    window: SimulationWindow,
    runs: u32,
    base_seed: u64,
) -> Result<BenchmarkRow> {
    let started = Instant::now();
    let model = spec.fit(train, base_seed)?;
    let fit_seconds = started.elapsed().as_secs_f64();
    let mut scores = Vec::with_capacity(runs as usize);
    let mut gen_seconds = 0.0;
    let mut weekday_hour = None;
    for r in 0..runs {
        let started = Instant::now();
        let generated = model.simulate(&window.config(base_seed + u64::from(r)))?;
        gen_seconds += started.elapsed().as_secs_f64();
        let sim: Vec<i64> = generated.arrivals().collect();
        if weekday_hour.is_none() {
            weekday_hour = Some(weekday_hour_counts(sim.iter().copied()));
        }
        scores.push(cadd(target, &sim)?.sqrt_cadd);
    }
    Ok(BenchmarkRow {
        model: spec.name().to_string(),
        mean_sqrt_cadd: mean(&scores),
        std_sqrt_cadd: if scores.len() > 1 { sample_std(&scores) } else { 0.0 },
        fit_seconds,
        gen_seconds: gen_seconds / f64::from(runs),
        scores,
        error: None,
        weekday_hour,
    })
}

/// Fits every model once on `train`, then generates and scores `runs` times
/// over the test window with seeds `base_seed..base_seed + runs`.
pub fn benchmark_run(
    train: &ArrivalDataset,
    test: &ArrivalDataset,
    models: &[ModelSpec],
    runs: u32,
    base_seed: u64,
) -> Result<BenchmarkTable> {
    if runs < 1 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let target: Vec<i64> = test.arrivals().collect();
    if target.is_empty() {
        return Err(Error::EmptyArrivals("test"));
    }
    let window = SimulationWindow::following(train, test);
    let mut rows: Vec<BenchmarkRow> = models
        .iter()
        .map(|spec| {
            run_one(spec, train, &target, window, runs, base_seed).unwrap_or_else(|e| {
                log::warn!("{} failed: {e}", spec.name());
                BenchmarkRow {
                    model: spec.name().to_string(),
                    mean_sqrt_cadd: f64::NAN,
                    std_sqrt_cadd: f64::NAN,
                    fit_seconds: f64::NAN,
                    gen_seconds: f64::NAN,
                    scores: Vec::new(),
                    error: Some(e.to_string()),
                    weekday_hour: None,
                }
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.error
            .is_some()
            .cmp(&b.error.is_some())
            .then(a.mean_sqrt_cadd.total_cmp(&b.mean_sqrt_cadd))
    });
    Ok(BenchmarkTable {
        runs,
        base_seed,
        window,
        test_weekday_hour: weekday_hour_counts(target.iter().copied()),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::parse_timestamp;

    const H: i64 = MICROS_PER_HOUR;

    fn hist(pairs: &[(i64, u64)]) -> HourHistogram {
        HourHistogram {
            origin: 0,
            counts: pairs.iter().copied().collect(),
        }
    }

    #[test]
    fn histogram_buckets() {
        let o = parse_timestamp("2024-03-01T10:00:00Z").unwrap();
        let h = hourly_histogram(&[o + H / 2, o + 3 * H / 2], o).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(0, 1), (1, 1)]));
        assert!(hourly_histogram(&[], o).unwrap().counts.is_empty());
        let h = hourly_histogram(&[o + 5 * H, o + 5 * H + 1, o + 6 * H - 1], o).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(5, 3)]));
        assert!(matches!(hourly_histogram(&[o - 1], o), Err(Error::BeforeOrigin { .. })));
    }

    #[test]
    fn emd_examples() {
        let a = hist(&[(0, 3), (4, 1)]);
        assert_eq!(emd_1d(&a, &a).unwrap(), 0.0);
        assert_eq!(emd_1d(&hist(&[(0, 1)]), &hist(&[(5, 1)])).unwrap(), 5.0);
        assert_eq!(emd_1d(&hist(&[(0, 1), (2, 1)]), &hist(&[(1, 2)])).unwrap(), 1.0);
        assert!(emd_1d(&hist(&[]), &a).is_err());
    }

    #[test]
    fn cadd_shift_and_errors() {
        let base = parse_timestamp("2024-03-04T08:00:00Z").unwrap();
        let test: Vec<i64> = (0..50).map(|i| base + i * 1_234_567_891).collect();
        let shifted: Vec<i64> = test.iter().map(|t| t + 5 * H).collect();
        let r = cadd(&test, &shifted).unwrap();
        assert!((r.cadd - 5.0).abs() < 1e-12);
        assert!((r.sqrt_cadd - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(cadd(&shifted, &test).unwrap().cadd, r.cadd);
        assert_eq!(cadd(&test, &test).unwrap().cadd, 0.0);
        assert!(cadd(&test, &[]).unwrap_err().to_string().contains("simulated"));
        assert!(cadd(&[], &test).unwrap_err().to_string().contains("test"));
    }

    #[test]
    fn duplicating_arrivals_changes_nothing() {
        let a: Vec<i64> = vec![0, H, 7 * H, 7 * H + 5];
        let b: Vec<i64> = vec![2 * H, 3 * H, 30 * H];
        let double = |v: &[i64]| v.iter().flat_map(|&t| [t, t]).collect::<Vec<_>>();
        assert_eq!(cadd(&a, &b).unwrap().cadd, cadd(&double(&a), &double(&b)).unwrap().cadd);
    }

    #[test]
    fn weekday_hour_matrix() {
        // Monday 2024-01-01 09:30 and Sunday 2024-01-07 23:59.
        let m = weekday_hour_counts([
            parse_timestamp("2024-01-01T09:30:00Z").unwrap(),
            parse_timestamp("2024-01-07T23:59:00Z").unwrap(),
        ]);
        assert_eq!(m[0][9], 1);
        assert_eq!(m[6][23], 1);
        assert_eq!(m.iter().flatten().sum::<u64>(), 2);
    }
}
