//! Comparison models: a fixed mean inter-arrival time and the best-fitting
//! parametric distribution, both with a calendar component for non-working
//! days and daily first/last arrival times.

use std::f64::consts::SQRT_2;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{digamma, gamma_lr};

use crate::divide::within_day_interarrivals;
use crate::error::{Error, Result};
use crate::eventlog::ArrivalDataset;
use crate::generate::{run_horizon, ArrivalSimulator, GeneratedArrivals, GenerationConfig, SimulationWindow};
use crate::stats::{mean, population_std, sample_std};
use crate::time::{clock_of, midnight, weekday_number, MICROS_PER_SECOND};

/// Redraws of a (first, last) pair before falling back to the pool extremes.
pub const MAX_WINDOW_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarAugmentation {
    /// Share of each weekday's training dates (Monday first) with an arrival.
    pub working_probability: [f64; 7],
    /// Clock times (µs after midnight) of each populated day's first arrival.
    pub first_times: Vec<i64>,
    pub last_times: Vec<i64>,
}

pub fn fit_calendar(train: &ArrivalDataset) -> Result<CalendarAugmentation> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training data has no arrivals"));
    }
    let mut seen = [0u32; 7];
    let mut worked = [0u32; 7];
    let mut first_times = Vec::new();
    let mut last_times = Vec::new();
    for day in &train.days {
        let w = usize::from(day.weekday() - 1);
        seen[w] += 1;
        if let (Some(&first), Some(&last)) = (day.timestamps.first(), day.timestamps.last()) {
            worked[w] += 1;
            first_times.push(clock_of(first));
            last_times.push(clock_of(last));
        }
    }
    let working_probability =
        std::array::from_fn(|w| if seen[w] == 0 { 0.0 } else { f64::from(worked[w]) / f64::from(seen[w]) });
    Ok(CalendarAugmentation {
        working_probability,
        first_times,
        last_times,
    })
}

impl CalendarAugmentation {
    /// Arrival window of one day, or `None` for a non-working day.
    pub fn draw_window<R: Rng + ?Sized>(&self, date: NaiveDate, rng: &mut R) -> Option<(i64, i64)> {
        let p = self.working_probability[usize::from(weekday_number(date) - 1)];
        if !(rng.random::<f64>() < p) || self.first_times.is_empty() {
            return None;
        }
        for _ in 0..MAX_WINDOW_REDRAWS {
            let first = self.first_times[rng.random_range(0..self.first_times.len())];
            let last = self.last_times[rng.random_range(0..self.last_times.len())];
            if first < last {
                return Some((first, last));
            }
        }
        let first = *self.first_times.iter().min().unwrap();
        let last = *self.last_times.iter().max().unwrap();
        Some((first, last.max(first)))
    }
}

fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn standard_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Candidate inter-arrival distributions, in selection-priority order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Fixed { value: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
    /// Normal with parameters `mean`, `std`, truncated to `[0, ∞)`.
    TruncatedNormal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Fixed { .. } => "fixed",
            Family::Exponential { .. } => "exponential",
            Family::Gamma { .. } => "gamma",
            Family::Lognormal { .. } => "lognormal",
            Family::TruncatedNormal { .. } => "truncated_normal",
            Family::Uniform { .. } => "uniform",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Family::Fixed { value } => f64::from(u8::from(x >= value)),
            Family::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Family::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, x / scale)
                }
            }
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    standard_normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Family::TruncatedNormal { mean, std } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let below = standard_normal_cdf(-mean / std);
                let mass = 1.0 - below;
                ((standard_normal_cdf((x - mean) / std) - below) / mass).clamp(0.0, 1.0)
            }
            Family::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    /// `P(X < x)`; differs from the CDF only at the atom of `Fixed`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match *self {
            Family::Fixed { value } => f64::from(u8::from(x > value)),
            _ => self.cdf(x),
        }
    }

    /// One draw in seconds, never negative.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match *self {
            Family::Fixed { value } => value,
            Family::Exponential { rate } => Exp::new(rate).map_or(0.0, |d| d.sample(rng)),
            Family::Gamma { shape, scale } => Gamma::new(shape, scale).map_or(0.0, |d| d.sample(rng)),
            Family::Lognormal { mu, sigma } => LogNormal::new(mu, sigma).map_or(0.0, |d| d.sample(rng)),
            Family::TruncatedNormal { mean, std } => {
                let below = standard_normal_cdf(-mean / std);
                let u: f64 = rng.random();
                let p = (below + u * (1.0 - below)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                mean + std * standard_normal_quantile(p)
            }
            Family::Uniform { low, high } => low + rng.random::<f64>() * (high - low),
        };
        x.max(0.0)
    }
}

/// Kolmogorov–Smirnov distance between a family and the empirical
/// distribution of `sorted`. Handles ties and atoms exactly.
pub fn ks_statistic(family: &Family, sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d.max((family.cdf(v) - upto).abs()).max((family.cdf_left(v) - below).abs());
        i = j;
    }
    d
}

/// Shape solving `ln k - ψ(k) = s` by bisection in log space.
fn gamma_shape(s: f64) -> f64 {
    let (mut lo, mut hi) = (1e-8f64.ln(), 1e8f64.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let k = mid.exp();
        if k.ln() - digamma(k) > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Fitted parameters of every family that is defined for `samples`, in
/// candidate order.
pub fn fit_candidates(samples: &[f64]) -> Vec<Family> {
    let m = mean(samples);
    let sd = sample_std(samples);
    let mut out = vec![Family::Fixed { value: m }];
    if m > 0.0 {
        out.push(Family::Exponential { rate: 1.0 / m });
    }
    if samples.iter().all(|&x| x > 0.0) {
        let s = m.ln() - samples.iter().map(|x| x.ln()).sum::<f64>() / samples.len() as f64;
        if s > 1e-12 {
            let shape = gamma_shape(s);
            out.push(Family::Gamma {
                shape,
                scale: m / shape,
            });
        }
    } else if m > 0.0 && sd > 0.0 {
        let shape = (m / sd).powi(2);
        out.push(Family::Gamma {
            shape,
            scale: m / shape,
        });
    }
    let logs: Vec<f64> = samples.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
    if logs.len() >= 2 {
        let sigma = population_std(&logs);
        if sigma > 0.0 {
            out.push(Family::Lognormal { mu: mean(&logs), sigma });
        }
    }
    if sd > 0.0 {
        out.push(Family::TruncatedNormal { mean: m, std: sd });
        let half = 3f64.sqrt() * sd;
        out.push(Family::Uniform {
            low: m - half,
            high: m + half,
        });
    }
    out
}

/// Common shape of the two baselines' generation: a calendar window per day,
/// filled from the first arrival by cumulative inter-arrival draws.
fn generate_with<F>(
    calendar: &CalendarAugmentation,
    mean_daily: f64,
    config: &GenerationConfig,
    mut draw: F,
) -> Result<GeneratedArrivals>
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    run_horizon(config, mean_daily, |_, date, rng| {
        let Some((first, last)) = calendar.draw_window(date, rng) else {
            return Ok(Vec::new());
        };
        let day_start = midnight(date);
        let mut out = vec![day_start + first];
        let mut cursor = first;
        loop {
            let step = (draw(rng) * MICROS_PER_SECOND as f64).round() as i64;
            cursor = cursor.saturating_add(step.max(1));
            if cursor > last {
                break;
            }
            out.push(day_start + cursor);
        }
        Ok(out)
    })
}

fn training_interarrivals(train: &ArrivalDataset) -> Result<Vec<f64>> {
    let samples = within_day_interarrivals(&train.days);
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    Ok(samples)
}

fn mean_daily(train: &ArrivalDataset) -> f64 {
    train.total_arrivals() as f64 / train.num_days().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanModel {
    pub mean_interarrival_seconds: f64,
    pub calendar: CalendarAugmentation,
    pub mean_daily_arrivals: f64,
    pub default_window: Option<SimulationWindow>,
}

pub fn fit_mean(train: &ArrivalDataset) -> Result<MeanModel> {
    let samples = training_interarrivals(train)?;
    let m = mean(&samples);
    if !(m > 0.0) {
        return Err(Error::Model("mean inter-arrival time is zero".into()));
    }
    Ok(MeanModel {
        mean_interarrival_seconds: m,
        calendar: fit_calendar(train)?,
        mean_daily_arrivals: mean_daily(train),
        default_window: None,
    })
}

impl ArrivalSimulator for MeanModel {
    fn simulate(&self, config: &GenerationConfig) -> Result<GeneratedArrivals> {
        let m = self.mean_interarrival_seconds;
        generate_with(&self.calendar, self.mean_daily_arrivals, config, |_| m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDistModel {
    pub distribution: Family,
    /// KS statistic of every candidate that could be fitted.
    pub candidates: Vec<(Family, f64)>,
    pub calendar: CalendarAugmentation,
    pub mean_daily_arrivals: f64,
    pub default_window: Option<SimulationWindow>,
}

/// Picks the candidate with the smallest KS statistic. A later candidate has
/// to beat the incumbent by more than `0.5 / sqrt(n)` to replace it.
pub fn select_family(samples: &[f64]) -> Result<(Family, Vec<(Family, f64)>)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tolerance = 0.5 / (sorted.len() as f64).sqrt();
    let scored: Vec<(Family, f64)> = fit_candidates(&sorted)
        .into_iter()
        .map(|f| (f, ks_statistic(&f, &sorted)))
        .filter(|(_, d)| d.is_finite())
        .collect();
    let mut best = scored[0];
    for &(f, d) in &scored[1..] {
        if d < best.1 - tolerance {
            best = (f, d);
        }
    }
    Ok((best.0, scored))
}

pub fn fit_best_distribution(train: &ArrivalDataset) -> Result<BestDistModel> {
    let samples = training_interarrivals(train)?;
    let (distribution, candidates) = select_family(&samples)?;
    Ok(BestDistModel {
        distribution,
        candidates,
        calendar: fit_calendar(train)?,
        mean_daily_arrivals: mean_daily(train),
        default_window: None,
    })
}

impl ArrivalSimulator for BestDistModel {
    fn simulate(&self, config: &GenerationConfig) -> Result<GeneratedArrivals> {
        let family = self.distribution;
        generate_with(&self.calendar, self.mean_daily_arrivals, config, |rng| family.sample(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::Horizon;
    use crate::time::{parse_timestamp, MICROS_PER_DAY, MICROS_PER_HOUR};
    use rand::SeedableRng;

    fn ts(s: &str) -> i64 {
        parse_timestamp(s).unwrap()
    }

    fn calendar_with(first: i64, last: i64) -> CalendarAugmentation {
        CalendarAugmentation {
            working_probability: [1.0; 7],
            first_times: vec![first],
            last_times: vec![last],
        }
    }

    #[test]
    fn working_probabilities() {
        // 2024-01-01 is a Monday. Two weeks; Monday always populated, Sunday never,
        // Tuesday once.
        let mut stamps = vec![
            ts("2024-01-01T09:00:00Z"),
            ts("2024-01-02T09:00:00Z"),
            ts("2024-01-08T09:00:00Z"),
            ts("2024-01-08T10:00:00Z"),
        ];
        stamps.sort();
        let ds = ArrivalDataset::over_dates(
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2024, 1, 14).unwrap(),
            &stamps,
        );
        let cal = fit_calendar(&ds).unwrap();
        assert_eq!(cal.working_probability[0], 1.0);
        assert_eq!(cal.working_probability[1], 0.5);
        assert_eq!(cal.working_probability[6], 0.0);
        assert_eq!(cal.first_times, vec![9 * MICROS_PER_HOUR; 3]);
        assert_eq!(cal.last_times, vec![9 * MICROS_PER_HOUR, 9 * MICROS_PER_HOUR, 10 * MICROS_PER_HOUR]);
    }

    #[test]
    fn mean_of_two_gaps() {
        let ds = ArrivalDataset::from_timestamps([
            ts("2024-01-01T09:00:00Z"),
            ts("2024-01-01T09:00:02Z"),
            ts("2024-01-01T09:00:06Z"),
        ]);
        assert_eq!(fit_mean(&ds).unwrap().mean_interarrival_seconds, 3.0);
        let single = ArrivalDataset::from_timestamps([ts("2024-01-01T09:00:00Z")]);
        assert!(matches!(fit_mean(&single), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn constant_gaps_select_fixed() {
        let (f, scored) = select_family(&[60.0; 50]).unwrap();
        assert_eq!(f, Family::Fixed { value: 60.0 });
        assert_eq!(scored[0].1, 0.0);
    }

    #[test]
    fn exponential_data_selects_exponential() {
        let d = Exp::new(1.0 / 300.0).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
            let (f, _) = select_family(&samples).unwrap();
            assert_eq!(f.name(), "exponential", "seed {seed}");
        }
    }

    #[test]
    fn ks_against_oracle() {
        // Brute force over a fine grid approximates the supremum from below.
        let samples = [1.0, 2.0, 2.0, 5.0, 9.0];
        let fam = Family::Exponential { rate: 0.25 };
        let exact = ks_statistic(&fam, &samples);
        let mut approx: f64 = 0.0;
        for i in 0..200_000 {
            let x = i as f64 * 1e-4;
            let ecdf = samples.iter().filter(|&&s| s <= x).count() as f64 / 5.0;
            approx = approx.max((fam.cdf(x) - ecdf).abs());
        }
        assert!(exact >= approx - 1e-12);
        assert!(exact - approx < 1e-3);
    }

    #[test]
    fn family_cdfs_are_consistent_with_samples() {
        let families = [
            Family::Exponential { rate: 0.01 },
            Family::Gamma { shape: 2.5, scale: 40.0 },
            Family::Lognormal { mu: 4.0, sigma: 0.7 },
            Family::TruncatedNormal { mean: 20.0, std: 50.0 },
            Family::Uniform { low: 10.0, high: 90.0 },
        ];
        for fam in families {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut xs: Vec<f64> = (0..20_000).map(|_| fam.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            assert!(ks_statistic(&fam, &xs) < 0.02, "{}", fam.name());
        }
    }

    #[test]
    fn gamma_mle_recovers_shape() {
        let d = Gamma::new(3.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        let gamma = fit_candidates(&samples)
            .into_iter()
            .find(|f| f.name() == "gamma")
            .unwrap();
        let Family::Gamma { shape, scale } = gamma else { unreachable!() };
        assert!((shape - 3.0).abs() < 0.1, "{shape}");
        assert!((shape * scale - 60.0).abs() < 1.5);
    }

    fn one_day(start: &str, model: &impl ArrivalSimulator, seed: u64) -> Vec<i64> {
        let config = GenerationConfig {
            start: ts(start),
            horizon: Horizon::Days(1),
            seed,
        };
        model.simulate(&config).unwrap().arrivals().collect()
    }

    #[test]
    fn fixed_hourly_window() {
        let model = BestDistModel {
            distribution: Family::Fixed { value: 3600.0 },
            candidates: Vec::new(),
            calendar: calendar_with(9 * MICROS_PER_HOUR, 12 * MICROS_PER_HOUR),
            mean_daily_arrivals: 4.0,
            default_window: None,
        };
        let got = one_day("2024-01-01T00:00:00Z", &model, 1);
        let want: Vec<i64> = (9..=12).map(|h| ts("2024-01-01T00:00:00Z") + h * MICROS_PER_HOUR).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn non_working_calendar_is_silent() {
        let mut model = fit_mean(&ArrivalDataset::from_timestamps([
            ts("2024-01-01T09:00:00Z"),
            ts("2024-01-01T09:10:00Z"),
            ts("2024-01-01T09:30:00Z"),
        ]))
        .unwrap();
        model.calendar.working_probability = [0.0; 7];
        let config = GenerationConfig {
            start: ts("2024-01-01T00:00:00Z"),
            horizon: Horizon::Days(30),
            seed: 3,
        };
        let out = model.simulate(&config).unwrap();
        assert_eq!(out.days.len(), 30);
        assert_eq!(out.total(), 0);
    }

    #[test]
    fn window_redraw_falls_back_to_extremes() {
        let cal = CalendarAugmentation {
            working_probability: [1.0; 7],
            first_times: vec![10 * MICROS_PER_HOUR, 12 * MICROS_PER_HOUR],
            last_times: vec![8 * MICROS_PER_HOUR, 11 * MICROS_PER_HOUR],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        for _ in 0..50 {
            let (a, b) = cal.draw_window(date, &mut rng).unwrap();
            assert!(a < b);
            assert!((a, b) == (10 * MICROS_PER_HOUR, 11 * MICROS_PER_HOUR));
        }
        let stuck = calendar_with(12 * MICROS_PER_HOUR, 8 * MICROS_PER_HOUR);
        assert_eq!(
            stuck.draw_window(date, &mut rng),
            Some((12 * MICROS_PER_HOUR, 12 * MICROS_PER_HOUR))
        );
    }

    #[test]
    fn arrivals_stay_in_window_and_reproduce() {
        let model = BestDistModel {
            distribution: Family::Exponential { rate: 1.0 / 600.0 },
            candidates: Vec::new(),
            calendar: CalendarAugmentation {
                working_probability: [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
                first_times: vec![8 * MICROS_PER_HOUR, 9 * MICROS_PER_HOUR],
                last_times: vec![16 * MICROS_PER_HOUR, 17 * MICROS_PER_HOUR],
            },
            mean_daily_arrivals: 50.0,
            default_window: None,
        };
        let config = GenerationConfig {
            start: ts("2024-01-01T00:00:00Z"),
            horizon: Horizon::Days(28),
            seed: 42,
        };
        let a = model.simulate(&config).unwrap();
        assert_eq!(a, model.simulate(&config).unwrap());
        for day in &a.days {
            if day.weekday() >= 6 {
                assert!(day.is_empty());
            }
            for &t in &day.timestamps {
                let c = clock_of(t);
                assert!((8 * MICROS_PER_HOUR..=17 * MICROS_PER_HOUR).contains(&c));
            }
            assert!(day.timestamps.windows(2).all(|w| w[0] < w[1]));
        }
        let first_day = &a.days[0].timestamps;
        assert!(!first_day.is_empty());
        assert!(first_day[0] - ts("2024-01-01T00:00:00Z") < MICROS_PER_DAY);
    }

    #[test]
    fn generated_mean_gap_matches_fit() {
        let model = MeanModel {
            mean_interarrival_seconds: 37.5,
            calendar: calendar_with(0, 86_399 * MICROS_PER_SECOND),
            mean_daily_arrivals: 2000.0,
            default_window: None,
        };
        let config = GenerationConfig {
            start: ts("2024-01-01T00:00:00Z"),
            horizon: Horizon::Cases(100_001),
            seed: 9,
        };
        let out = model.simulate(&config).unwrap();
        let gaps = within_day_interarrivals(&out.days);
        assert!(gaps.len() >= 100_000 - 50);
        assert!((mean(&gaps) - 37.5).abs() / 37.5 < 0.01);
    }
}
