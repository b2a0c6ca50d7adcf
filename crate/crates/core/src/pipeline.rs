//! End-to-end fitting: divide, partition, tune, fit. Also the model file format.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baselines::{BestDistModel, MeanModel};
use crate::divide::{cluster_global_segments_with_diagnostics, DivideConfig, DivideDiagnostics, GlobalClustering};
use crate::error::{Error, Result};
use crate::eventlog::ArrivalDataset;
use crate::generate::SimulationWindow;
use crate::kde::{fit_ensemble, tune_bandwidth_factor, BandwidthSearch, BandwidthSearchConfig, ModelEnsemble};
use crate::partition::{
    build_partition, cluster_weekdays, determine_bounds, make_bin_grid, BinGrid, CellKey, TrainingPartition,
    WeekdayClusterMap,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub divide: DivideConfig,
    /// Intraday bins per day.
    pub bins: usize,
    pub search: BandwidthSearchConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            divide: DivideConfig::default(),
            bins: 3,
            search: BandwidthSearchConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.divide.validate()?;
        if self.bins < 1 {
            return Err(Error::Config("number of bins must be at least 1".into()));
        }
        self.search.validate()
    }
}

/// Everything that does not depend on the bandwidth factor.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub divide: DivideDiagnostics,
    pub weekdays: WeekdayClusterMap,
    pub grid: BinGrid,
    pub partition: TrainingPartition,
    pub window: usize,
    pub last_date: NaiveDate,
    pub mean_daily_arrivals: f64,
}

pub fn prepare(train: &ArrivalDataset, config: &FitConfig) -> Result<Prepared> {
    config.validate()?;
    let (Some(last_date), false) = (train.last_date(), train.is_empty()) else {
        return Err(Error::EmptyInput("training data has no arrivals"));
    };
    let divide = cluster_global_segments_with_diagnostics(train, &config.divide)?;
    let weekdays = cluster_weekdays(train, &divide.clustering);
    let (lower, upper) = determine_bounds(train)?;
    let grid = make_bin_grid(lower, upper, config.bins)?;
    let partition = build_partition(train, &divide.clustering, &weekdays, &grid)?;
    Ok(Prepared {
        divide,
        weekdays,
        grid,
        partition,
        window: config.divide.window,
        last_date,
        mean_daily_arrivals: train.total_arrivals() as f64 / train.num_days() as f64,
    })
}

impl Prepared {
    pub fn clustering(&self) -> &GlobalClustering {
        &self.divide.clustering
    }

    pub fn assemble(&self, ensemble: ModelEnsemble) -> AtKdeModel {
        let clustering = self.clustering();
        AtKdeModel {
            window: self.window,
            labels: clustering.labels.clone(),
            segment_lengths: clustering.segment_lengths(),
            weekday_clusters: self.weekdays.clone(),
            grid: self.grid.clone(),
            ensemble,
            training_last_date: self.last_date,
            mean_daily_arrivals: self.mean_daily_arrivals,
            default_window: None,
            bandwidth_search: None,
        }
    }
}

/// A fitted AT-KDE model: everything generation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtKdeModel {
    pub window: usize,
    /// Global cluster label per training segment, in time order.
    pub labels: Vec<u32>,
    pub segment_lengths: Vec<usize>,
    pub weekday_clusters: WeekdayClusterMap,
    pub grid: BinGrid,
    pub ensemble: ModelEnsemble,
    pub training_last_date: NaiveDate,
    pub mean_daily_arrivals: f64,
    /// Window used when generation is asked for no explicit start or horizon.
    pub default_window: Option<SimulationWindow>,
    pub bandwidth_search: Option<BandwidthSearch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: CellKey,
    pub timestamps: usize,
    pub samples: usize,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub divide: DivideDiagnostics,
    pub weekday_clusters: WeekdayClusterMap,
    pub lower_time: i64,
    pub upper_time: i64,
    pub cells: Vec<CellSummary>,
    pub bandwidth_search: BandwidthSearch,
}

impl AtKdeModel {
    /// Runs the whole pipeline on `train`; `seed` drives the bandwidth search.
    pub fn fit(train: &ArrivalDataset, config: &FitConfig, seed: u64) -> Result<(Self, FitDiagnostics)> {
        let prepared = prepare(train, config)?;
        let search = tune_bandwidth_factor(train, config, seed)?;
        let ensemble = fit_ensemble(&prepared.partition, search.factor)?;
        let cells = prepared
            .partition
            .cells
            .iter()
            .map(|(key, cell)| CellSummary {
                key: *key,
                timestamps: cell.timestamps.len(),
                samples: cell.samples.len(),
                bandwidth: ensemble.get(key).map(|m| m.bandwidth),
            })
            .collect();
        let mut model = prepared.assemble(ensemble);
        model.bandwidth_search = Some(search.clone());
        let diagnostics = FitDiagnostics {
            weekday_clusters: prepared.weekdays.clone(),
            lower_time: prepared.grid.lower,
            upper_time: prepared.grid.upper,
            divide: prepared.divide,
            cells,
            bandwidth_search: search,
        };
        Ok((model, diagnostics))
    }

    pub fn num_global_clusters(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }
}

/// Serialized form of any fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ModelFile {
    AtKde(AtKdeModel),
    Mean(MeanModel),
    BestDistribution(BestDistModel),
}

impl ModelFile {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFile::AtKde(_) => "at_kde",
            ModelFile::Mean(_) => "mean",
            ModelFile::BestDistribution(_) => "best_distribution",
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn default_window(&self) -> Option<SimulationWindow> {
        match self {
            ModelFile::AtKde(m) => m.default_window,
            ModelFile::Mean(m) => m.default_window,
            ModelFile::BestDistribution(m) => m.default_window,
        }
    }

    pub fn set_default_window(&mut self, window: SimulationWindow) {
        match self {
            ModelFile::AtKde(m) => m.default_window = Some(window),
            ModelFile::Mean(m) => m.default_window = Some(window),
            ModelFile::BestDistribution(m) => m.default_window = Some(window),
        }
    }
}

impl crate::generate::ArrivalSimulator for ModelFile {
    fn simulate(&self, config: &crate::generate::GenerationConfig) -> Result<crate::generate::GeneratedArrivals> {
        match self {
            ModelFile::AtKde(m) => m.simulate(config),
            ModelFile::Mean(m) => m.simulate(config),
            ModelFile::BestDistribution(m) => m.simulate(config),
        }
    }
}
