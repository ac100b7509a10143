//! Seeded Monte Carlo estimates of `Pr[M ≥ k]` and samples of the waiting
//! time `W`.
//!
//! Trial `t` draws from its own ChaCha8 stream keyed by `(seed, t)`, so a
//! trial's ball sequence does not depend on how trials are scheduled, and
//! serial and parallel runs agree exactly. Because every trial throws a
//! prefix of the same sequence, `M_m ≥ k` holds exactly when that trial's
//! `W ≤ m`; estimates for many `m` come from one waiting-time run per trial.

mod alias;
mod wilson;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use alias::{build_sampler, Sampler};
pub use wilson::{wilson_interval, z_for_confidence};

use crate::error::{domain, Result};
use crate::math::{k_norm, Distribution, ProblemInstance};

/// Two-sided 99.9% normal quantile.
pub const Z_999: f64 = 3.290_526_731_491_926;
/// Two-sided 99.99% normal quantile.
pub const Z_9999: f64 = 3.890_591_886_413_094;

pub const DEFAULT_TRIALS: u64 = 5000;
pub const FIG3_TRIALS: u64 = 50_000;
/// Above this many bins per-trial loads live in a hash map.
pub const DENSE_LOAD_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    /// Maximum balls per waiting-time trial; `None` picks `⌈100 k/‖p‖_k⌉`.
    pub cap: Option<u64>,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            cap: None,
            execution: Execution::Parallel,
        }
    }

    pub fn serial(mut self) -> Self {
        self.execution = Execution::Serial;
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = Some(cap);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(domain("simulation needs at least one trial"));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::new(DEFAULT_TRIALS, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub successes: u64,
    pub trials: u64,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub z: f64,
}

impl SimEstimate {
    pub fn from_counts(successes: u64, trials: u64, z: f64) -> Result<Self> {
        let (wilson_low, wilson_high) = wilson_interval(successes, trials, z)?;
        Ok(Self {
            successes,
            trials,
            frequency: successes as f64 / trials as f64,
            wilson_low,
            wilson_high,
            z,
        })
    }

    /// The same counts with a different interval width.
    pub fn with_z(&self, z: f64) -> Result<Self> {
        Self::from_counts(self.successes, self.trials, z)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.wilson_high - self.wilson_low)
    }
}

/// Random stream of trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Per-trial bin loads; only touched bins are reset between trials.
enum LoadCounter {
    Dense { counts: Vec<u32>, touched: Vec<u32> },
    Sparse(HashMap<u32, u32>),
}

impl LoadCounter {
    fn new(bins: usize) -> Self {
        if bins <= DENSE_LOAD_LIMIT {
            Self::Dense {
                counts: vec![0; bins],
                touched: Vec::new(),
            }
        } else {
            Self::Sparse(HashMap::new())
        }
    }

    #[inline]
    fn increment(&mut self, bin: usize) -> u32 {
        match self {
            Self::Dense { counts, touched } => {
                let c = &mut counts[bin];
                if *c == 0 {
                    touched.push(bin as u32);
                }
                *c += 1;
                *c
            }
            Self::Sparse(map) => {
                let c = map.entry(bin as u32).or_insert(0);
                *c += 1;
                *c
            }
        }
    }

    fn reset(&mut self) {
        match self {
            Self::Dense { counts, touched } => {
                for &b in touched.iter() {
                    counts[b as usize] = 0;
                }
                touched.clear();
            }
            Self::Sparse(map) => map.clear(),
        }
    }
}

/// Throws up to `limit` balls; returns the index of the ball that first
/// brings some bin to `k`.
fn first_hit(
    sampler: &Sampler,
    loads: &mut LoadCounter,
    seed: u64,
    trial: u64,
    k: u32,
    limit: u64,
) -> Option<u64> {
    let mut rng = trial_rng(seed, trial);
    let mut hit = None;
    for ball in 1..=limit {
        if loads.increment(sampler.sample(&mut rng)) >= k {
            hit = Some(ball);
            break;
        }
    }
    loads.reset();
    hit
}

fn max_load_after(
    sampler: &Sampler,
    loads: &mut LoadCounter,
    seed: u64,
    trial: u64,
    m: u64,
) -> u32 {
    let mut rng = trial_rng(seed, trial);
    let mut max = 0;
    for _ in 0..m {
        max = max.max(loads.increment(sampler.sample(&mut rng)));
    }
    loads.reset();
    max
}

/// Runs `f` for every trial index in order, serially or on the rayon pool.
fn run_trials<T, F>(cfg: &SimConfig, bins: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut LoadCounter, u64) -> T + Sync,
{
    match cfg.execution {
        Execution::Serial => {
            let mut loads = LoadCounter::new(bins);
            (0..cfg.trials).map(|t| f(&mut loads, t)).collect()
        }
        Execution::Parallel => (0..cfg.trials)
            .into_par_iter()
            .map_init(|| LoadCounter::new(bins), |loads, t| f(loads, t))
            .collect(),
    }
}

/// Waiting time per trial, capped at `limit` (`None` when censored).
fn hit_times(k: u32, dist: &Distribution, limit: u64, cfg: &SimConfig) -> Vec<Option<u64>> {
    let sampler = build_sampler(dist);
    run_trials(cfg, dist.bin_count(), |loads, t| {
        first_hit(&sampler, loads, cfg.seed, t, k, limit)
    })
}

/// Fraction of trials in which some bin holds at least `k` of `m` balls,
/// with a 99.9% Wilson interval.
pub fn sim_max_load(inst: &ProblemInstance, cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    let hits = hit_times(inst.load, &inst.dist, inst.balls, cfg);
    let successes = hits.iter().filter(|h| h.is_some()).count() as u64;
    SimEstimate::from_counts(successes, cfg.trials, Z_999)
}

/// [`sim_max_load`] for every `m` in `ms` under common random numbers; equal
/// to calling it once per `m` with the same config.
pub fn sim_max_load_curve(
    k: u32,
    dist: &Distribution,
    ms: &[u64],
    cfg: &SimConfig,
) -> Result<Vec<SimEstimate>> {
    cfg.validate()?;
    if k < 1 {
        return Err(domain("load k must be at least 1"));
    }
    let limit = ms.iter().copied().max().unwrap_or(0);
    let mut times: Vec<u64> = hit_times(k, dist, limit, cfg)
        .into_iter()
        .flatten()
        .collect();
    times.sort_unstable();
    ms.iter()
        .map(|&m| {
            let successes = times.partition_point(|&w| w <= m) as u64;
            SimEstimate::from_counts(successes, cfg.trials, Z_999)
        })
        .collect()
}

/// Maximum bin load after `m` balls, one entry per trial.
pub fn trial_max_loads(m: u64, dist: &Distribution, cfg: &SimConfig) -> Result<Vec<u32>> {
    cfg.validate()?;
    let sampler = build_sampler(dist);
    Ok(run_trials(cfg, dist.bin_count(), |loads, t| {
        max_load_after(&sampler, loads, cfg.seed, t, m)
    }))
}

/// Waiting-time samples; censored trials are counted, not included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimes {
    /// Uncensored samples in trial order.
    pub samples: Vec<u64>,
    pub censored: u64,
    pub cap: u64,
}

impl WaitingTimes {
    pub fn mean(&self) -> f64 {
        let n = self.samples.len() as f64;
        self.samples.iter().map(|&w| w as f64).sum::<f64>() / n
    }

    /// Standard error of [`Self::mean`] from the sample standard deviation.
    pub fn std_error(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.mean();
        let var = self
            .samples
            .iter()
            .map(|&w| (w as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }

    /// Number of samples with `W ≤ m`.
    pub fn count_at_most(&self, m: u64) -> u64 {
        self.samples.iter().filter(|&&w| w <= m).count() as u64
    }
}

/// Samples of `W`, the index of the ball that first brings some bin to `k`.
pub fn sim_waiting_time(k: u32, dist: &Distribution, cfg: &SimConfig) -> Result<WaitingTimes> {
    cfg.validate()?;
    if k < 1 {
        return Err(domain("load k must be at least 1"));
    }
    let cap = match cfg.cap {
        Some(c) => c,
        None => (100.0 * f64::from(k) / k_norm(dist, f64::from(k))?).ceil() as u64,
    };
    let hits = hit_times(k, dist, cap, cfg);
    let censored = hits.iter().filter(|h| h.is_none()).count() as u64;
    Ok(WaitingTimes {
        samples: hits.into_iter().flatten().collect(),
        censored,
        cap,
    })
}
