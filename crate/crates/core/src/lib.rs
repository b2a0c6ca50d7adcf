//! Case-arrival modeling for business process simulation.
//!
//! Training arrivals are cut into global segments at change points of the
//! daily arrival counts, segments and weekdays are clustered, and a Gaussian
//! KDE is fitted to the inter-arrival times of every (segment cluster,
//! weekday cluster, intraday bin) cell. Generation replays the segment
//! pattern and samples each bin's arrivals cumulatively.

pub mod baselines;
pub mod divide;
pub mod error;
pub mod evaluate;
pub mod eventlog;
pub mod generate;
pub mod kde;
pub mod partition;
pub mod pipeline;
pub mod stats;
pub mod time;

pub use baselines::{fit_best_distribution, fit_mean, BestDistModel, Family, MeanModel};
pub use error::{Error, Result};
pub use evaluate::{benchmark_run, cadd, CaddReport, ModelSpec};
pub use eventlog::{derive_arrivals, parse_event_log, temporal_split, ArrivalDataset, ColumnMap, DayArrivals, SplitSpec};
pub use generate::{generate_arrivals, ArrivalSimulator, GeneratedArrivals, GenerationConfig, Horizon, SimulationWindow};
pub use pipeline::{AtKdeModel, FitConfig, ModelFile};
