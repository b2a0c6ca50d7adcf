//! Run settings: built-in defaults, then a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use atkde::divide::DivideConfig;
use atkde::kde::BandwidthSearchConfig;
use atkde::{ColumnMap, FitConfig, SplitSpec};

/// Keys accepted in a config file, with their defaults as shown in `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("window", "7"),
    ("sensitivities", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"),
    ("kmax", "6"),
    ("bins", "3"),
    ("factor_grid", "0.25,0.5,1,2,4,8,16,32,64,128,200"),
    ("validation_fraction", "0.2"),
    ("seeds_per_candidate", "3"),
    ("seed", "0"),
    ("train_fraction", "0.8"),
    ("horizon_days", "test window"),
    ("num_cases", "unset"),
    ("start", "test window start"),
    ("runs", "10"),
    ("case_column", "case_id"),
    ("timestamp_column", "timestamp"),
    ("activity_column", "unset"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub window: usize,
    pub sensitivities: Vec<f64>,
    pub kmax: usize,
    pub bins: usize,
    pub factor_grid: Vec<f64>,
    pub validation_fraction: f64,
    pub seeds_per_candidate: u32,
    pub seed: u64,
    pub train_fraction: f64,
    pub horizon_days: Option<u32>,
    pub num_cases: Option<u64>,
    pub start: Option<String>,
    pub runs: u32,
    pub case_column: String,
    pub timestamp_column: String,
    pub activity_column: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        let divide = DivideConfig::default();
        let search = BandwidthSearchConfig::default();
        Self {
            window: divide.window,
            sensitivities: divide.sensitivities,
            kmax: divide.max_clusters,
            bins: FitConfig::default().bins,
            factor_grid: search.factor_grid,
            validation_fraction: search.validation_fraction,
            seeds_per_candidate: search.seeds_per_candidate,
            seed: 0,
            train_fraction: SplitSpec::default().train_fraction,
            horizon_days: None,
            num_cases: None,
            start: None,
            runs: 10,
            case_column: "case_id".into(),
            timestamp_column: "timestamp".into(),
            activity_column: None,
        }
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("{v:?}: {e}")))
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value {value:?} for {key}: {e}"))
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "window" => self.window = parse(key, value)?,
            "sensitivities" => self.sensitivities = parse_list(value).context("sensitivities")?,
            "kmax" => self.kmax = parse(key, value)?,
            "bins" => self.bins = parse(key, value)?,
            "factor_grid" => self.factor_grid = parse_list(value).context("factor_grid")?,
            "validation_fraction" => self.validation_fraction = parse(key, value)?,
            "seeds_per_candidate" => self.seeds_per_candidate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "horizon_days" => self.horizon_days = Some(parse(key, value)?),
            "num_cases" => self.num_cases = Some(parse(key, value)?),
            "start" => self.start = Some(value.to_string()),
            "runs" => self.runs = parse(key, value)?,
            "case_column" => self.case_column = value.to_string(),
            "timestamp_column" => self.timestamp_column = value.to_string(),
            "activity_column" => self.activity_column = Some(value.to_string()),
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            let key = key.trim().replace('-', "_");
            self.set(&key, value).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("in config file {}", path.display()))
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            divide: DivideConfig {
                window: self.window,
                sensitivities: self.sensitivities.clone(),
                max_clusters: self.kmax,
                ..DivideConfig::default()
            },
            bins: self.bins,
            search: BandwidthSearchConfig {
                factor_grid: self.factor_grid.clone(),
                validation_fraction: self.validation_fraction,
                seeds_per_candidate: self.seeds_per_candidate,
            },
        }
    }

    pub fn columns(&self) -> ColumnMap {
        ColumnMap {
            case_id: self.case_column.clone(),
            timestamp: self.timestamp_column.clone(),
            activity: self.activity_column.clone(),
        }
    }

    pub fn split(&self) -> Result<SplitSpec> {
        Ok(SplitSpec::new(self.train_fraction)?)
    }

    /// All effective values, for echoing into diagnostics.
    pub fn as_map(&self) -> BTreeMap<&'static str, String> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let opt = |v: Option<String>| v.unwrap_or_default();
        BTreeMap::from([
            ("window", self.window.to_string()),
            ("sensitivities", list(&self.sensitivities)),
            ("kmax", self.kmax.to_string()),
            ("bins", self.bins.to_string()),
            ("factor_grid", list(&self.factor_grid)),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("seeds_per_candidate", self.seeds_per_candidate.to_string()),
            ("seed", self.seed.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("horizon_days", opt(self.horizon_days.map(|v| v.to_string()))),
            ("num_cases", opt(self.num_cases.map(|v| v.to_string()))),
            ("start", opt(self.start.clone())),
            ("runs", self.runs.to_string()),
            ("case_column", self.case_column.clone()),
            ("timestamp_column", self.timestamp_column.clone()),
            ("activity_column", opt(self.activity_column.clone())),
        ])
    }
}
