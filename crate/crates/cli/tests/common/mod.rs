//! Synthetic arrival logs shared by the CLI tests and the acceptance suite.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use atkde::time::{format_timestamp, MICROS_PER_DAY, MICROS_PER_HOUR};
use atkde::ArrivalDataset;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// 2024-01-01T00:00:00Z, a Monday.
pub const BASE: i64 = 1_704_067_200_000_000;

pub fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as usize
}

/// `count` arrivals on day `day`, uniform over `[from_hour, to_hour)`.
pub fn uniform_day(rng: &mut ChaCha8Rng, day: i64, count: usize, from_hour: f64, to_hour: f64) -> Vec<i64> {
    let lo = (from_hour * MICROS_PER_HOUR as f64) as i64;
    let hi = (to_hour * MICROS_PER_HOUR as f64) as i64;
    (0..count)
        .map(|_| BASE + day * MICROS_PER_DAY + rng.random_range(lo..hi))
        .collect()
}

/// Daily counts drawn by `counts(day)`, times uniform in working hours.
pub fn log_with(rng: &mut ChaCha8Rng, days: i64, mut counts: impl FnMut(&mut ChaCha8Rng, i64) -> usize) -> Vec<i64> {
    let mut ts = Vec::new();
    for d in 0..days {
        let n = counts(rng, d);
        ts.extend(uniform_day(rng, d, n, 8.0, 18.0));
    }
    ts.sort_unstable();
    ts
}

/// 60 days at Poisson(50) per day, then 60 days at Poisson(10).
pub fn step_log(rng: &mut ChaCha8Rng) -> Vec<i64> {
    log_with(rng, 120, |r, d| poisson(r, if d < 60 { 50.0 } else { 10.0 }))
}

/// Exactly `per_day` arrivals every day.
pub fn constant_log(rng: &mut ChaCha8Rng, days: i64, per_day: usize) -> Vec<i64> {
    log_with(rng, days, |_, _| per_day)
}

/// Four 30-day blocks with Poisson rates 50, 10, 50, 10.
pub fn alternating_log(rng: &mut ChaCha8Rng) -> Vec<i64> {
    log_with(rng, 120, |r, d| poisson(r, if (d / 30) % 2 == 0 { 50.0 } else { 10.0 }))
}

/// Loan-application style drift: a stable office regime with a Monday peak
/// and a late-morning intraday peak, then a drop period in which Saturdays
/// are worked and the day is flat, then a recovery to the stable pattern.
pub fn drift_log(rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut ts = Vec::new();
    for d in 0..140i64 {
        let weekday = d % 7; // 0 = Monday
        let drop = (50..80).contains(&d);
        let mean = match (drop, weekday) {
            (false, 0) => 60.0,
            (false, 1..=4) => 30.0,
            (false, _) => 0.0,
            (true, 0..=5) => 12.0,
            (true, _) => 0.0,
        };
        let n = poisson(rng, mean);
        if drop {
            ts.extend(uniform_day(rng, d, n, 8.0, 18.0));
        } else {
            // Two thirds of the stable-regime arrivals fall in 09:00–12:00.
            let peak = (0..n).filter(|_| rng.random_bool(2.0 / 3.0)).count();
            ts.extend(uniform_day(rng, d, peak, 9.0, 12.0));
            ts.extend(uniform_day(rng, d, n - peak, 8.0, 18.0));
        }
    }
    ts.sort_unstable();
    ts
}

/// Drift-free: Poisson(40) arrivals every day, uniform over 08:00–18:00.
pub fn stationary_log(rng: &mut ChaCha8Rng) -> Vec<i64> {
    log_with(rng, 120, |r, _| poisson(r, 40.0))
}

pub fn dataset(ts: &[i64]) -> ArrivalDataset {
    ArrivalDataset::from_timestamps(ts.iter().copied())
}

/// Event log with two events per case; the case arrival is the first one.
pub fn write_event_log(path: &Path, arrivals: &[i64]) {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    writeln!(f, "case_id,activity,timestamp").unwrap();
    for (i, &t) in arrivals.iter().enumerate() {
        writeln!(f, "c{i},register,{}", format_timestamp(t)).unwrap();
        writeln!(f, "c{i},review,{}", format_timestamp(t + 300_000_000)).unwrap();
    }
}
