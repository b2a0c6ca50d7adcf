//! Gaussian kernel density estimates over inter-arrival seconds.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{CellKey, TrainingPartition};
use crate::stats::{quartiles, sample_std};

/// Ground bandwidth (seconds) for cells with fewer than two samples or no spread.
pub const FLOOR_BANDWIDTH: f64 = 1.0;
/// Rejection attempts for a non-negative draw before giving up with 0.
pub const MAX_REJECTIONS: usize = 100;
pub const MAX_FACTOR: f64 = 200.0;

/// Robust Silverman rule `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return FLOOR_BANDWIDTH;
    }
    let sd = sample_std(samples);
    let (q1, q3) = quartiles(samples);
    let iqr_scale = (q3 - q1) / 1.34;
    let spread = if iqr_scale > 0.0 { sd.min(iqr_scale) } else { sd };
    if !(spread > 0.0) {
        return FLOOR_BANDWIDTH;
    }
    0.9 * spread * (n as f64).powf(-0.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeModel {
    pub fn new(samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Model("KDE needs at least one sample".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Model(format!("invalid bandwidth {bandwidth}")));
        }
        if samples.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Model("inter-arrival samples must be non-negative".into()));
        }
        Ok(Self { samples, bandwidth })
    }

    /// Silverman bandwidth scaled by `factor`.
    pub fn fit(samples: Vec<f64>, factor: f64) -> Result<Self> {
        let h = silverman_bandwidth(&samples) * factor;
        Self::new(samples, h)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / ((2.0 * PI).sqrt() * h * self.samples.len() as f64);
        norm * self
            .samples
            .iter()
            .map(|xi| (-0.5 * ((x - xi) / h).powi(2)).exp())
            .sum::<f64>()
    }

    /// Smoothed bootstrap draw: a data point plus Gaussian noise of scale
    /// `bandwidth`, redrawn while negative.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        for _ in 0..MAX_REJECTIONS {
            let i = rng.random_range(0..self.samples.len());
            let eps: f64 = rng.sample(StandardNormal);
            let draw = self.samples[i] + self.bandwidth * eps;
            if draw >= 0.0 {
                return draw;
            }
        }
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCell {
    pub key: CellKey,
    pub model: KdeModel,
}

/// One KDE per populated partition cell, sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnsemble {
    pub bandwidth_factor: f64,
    pub cells: Vec<EnsembleCell>,
}

impl ModelEnsemble {
    pub fn get(&self, key: &CellKey) -> Option<&KdeModel> {
        self.cells
            .binary_search_by(|c| c.key.cmp(key))
            .ok()
            .map(|i| &self.cells[i].model)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn validate_factor(factor: f64) -> Result<()> {
    if !(factor > 0.0 && factor <= MAX_FACTOR) {
        return Err(Error::Config(format!("bandwidth factor {factor} outside (0, {MAX_FACTOR}]")));
    }
    Ok(())
}

pub fn fit_ensemble(partition: &TrainingPartition, factor: f64) -> Result<ModelEnsemble> {
    validate_factor(factor)?;
    let cells = partition
        .cells
        .iter()
        .filter(|(_, cell)| !cell.samples.is_empty())
        .map(|(key, cell)| {
            Ok(EnsembleCell {
                key: *key,
                model: KdeModel::fit(cell.samples.clone(), factor)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelEnsemble {
        bandwidth_factor: factor,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSearchConfig {
    pub factor_grid: Vec<f64>,
    pub validation_fraction: f64,
    pub seeds_per_candidate: u32,
}

impl Default for BandwidthSearchConfig {
    fn default() -> Self {
        Self {
            factor_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 200.0],
            validation_fraction: 0.2,
            seeds_per_candidate: 3,
        }
    }
}

impl BandwidthSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factor_grid.is_empty() {
            return Err(Error::Config("factor grid is empty".into()));
        }
        for &f in &self.factor_grid {
            validate_factor(f)?;
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        if self.seeds_per_candidate < 1 {
            return Err(Error::Config("seeds per candidate must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid sorted ascending without duplicates.
    pub fn sorted_grid(&self) -> Vec<f64> {
        let mut grid = self.factor_grid.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

/// Outcome of the bandwidth-factor search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSearch {
    pub factor: f64,
    /// `(factor, mean sqrt-CADD)` per evaluated candidate; empty when no search ran.
    pub scores: Vec<(f64, f64)>,
    pub note: Option<String>,
}

/// Picks the grid factor whose ensemble, fitted on the first part of `train`,
/// best reproduces the held-out remainder (lowest mean sqrt-CADD; ties go to
/// the smaller factor).
pub fn tune_bandwidth_factor(
    train: &crate::eventlog::ArrivalDataset,
    pipeline: &crate::pipeline::FitConfig,
    seed: u64,
) -> Result<BandwidthSearch> {
    let search = &pipeline.search;
    search.validate()?;
    let grid = search.sorted_grid();
    if grid.len() == 1 {
        return Ok(BandwidthSearch {
            factor: grid[0],
            scores: Vec::new(),
            note: None,
        });
    }
    let fallback = |why: String| {
        log::warn!("bandwidth search skipped: {why}; using factor 1.0");
        BandwidthSearch {
            factor: 1.0,
            scores: Vec::new(),
            note: Some(why),
        }
    };
    let inner = crate::eventlog::SplitSpec::new(1.0 - search.validation_fraction)?;
    let (inner_train, validation) = match crate::eventlog::temporal_split(train, inner) {
        Ok(parts) => parts,
        Err(e) => return Ok(fallback(e.to_string())),
    };
    if validation.is_empty() {
        return Ok(fallback("inner validation window is empty".into()));
    }
    let prepared = crate::pipeline::prepare(&inner_train, pipeline)?;
    let window = crate::generate::SimulationWindow::following(&inner_train, &validation);
    let target: Vec<i64> = validation.arrivals().collect();
    // The validation part ends inside the day of the last training arrival.
    let end = *target.last().unwrap();

    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &factor in &grid {
        let model = prepared.assemble(fit_ensemble(&prepared.partition, factor)?);
        let mut total = 0.0;
        for s in 0..search.seeds_per_candidate {
            let config = window.config(seed.wrapping_add(u64::from(s)));
            let generated = crate::generate::generate_arrivals(&model, &config)?;
            let sim: Vec<i64> = generated.arrivals().filter(|&t| t <= end).collect();
            total += match crate::evaluate::cadd(&target, &sim) {
                Ok(report) => report.sqrt_cadd,
                Err(_) => f64::INFINITY,
            };
        }
        let score = total / f64::from(search.seeds_per_candidate);
        scores.push((factor, score));
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((factor, score));
        }
    }
    let factor = match best {
        Some((f, s)) if s.is_finite() => f,
        _ => return Ok(BandwidthSearch { scores, ..fallback("no candidate generated arrivals".into()) }),
    };
    Ok(BandwidthSearch {
        factor,
        scores,
        note: None,
    })
}
