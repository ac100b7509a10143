//! Grids of `(k, m)` points parameterized by `ρ`, with bounds, simulated
//! frequencies and optionally exact values: the data behind max-load versus
//! `ρ` plots.

use serde::{Deserialize, Serialize};

use crate::bounds::sandwich;
use crate::error::{domain, Error, Result};
use crate::math::{k_norm, Distribution, ProblemInstance};
use crate::oracle::{exact_pr_max_geq, EGF_MAX_BALLS, EGF_MAX_BINS};
use crate::sim::{sim_max_load_curve, SimConfig};

pub const DEFAULT_POINTS: usize = 60;
pub const DEFAULT_RHO_MAX: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub loads: Vec<u32>,
    pub rho_max: f64,
    pub points: usize,
    pub sim: SimConfig,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u32,
    pub m: u64,
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
    pub empirical: Option<f64>,
    pub wilson_low: Option<f64>,
    pub wilson_high: Option<f64>,
    pub exact: Option<f64>,
}

/// Ball counts `round(ρ_i k / ‖p‖_k)` for `ρ_i = ρ_max i / P`, `i = 1..=P`,
/// deduplicated and without zero.
pub fn sweep_ball_counts(
    k: u32,
    dist: &Distribution,
    rho_max: f64,
    points: usize,
) -> Result<Vec<u64>> {
    if points < 2 {
        return Err(domain(format!(
            "a sweep needs at least 2 points, got {points}"
        )));
    }
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return Err(domain(format!("rho-max must be positive, got {rho_max}")));
    }
    let scale = f64::from(k) / k_norm(dist, f64::from(k))?;
    let mut ms: Vec<u64> = (1..=points)
        .map(|i| (rho_max * i as f64 / points as f64 * scale).round() as u64)
        .filter(|&m| m > 0)
        .collect();
    ms.dedup();
    Ok(ms)
}

pub fn run_sweep(dist: &Distribution, req: &SweepRequest) -> Result<Vec<SweepRow>> {
    if req.loads.is_empty() {
        return Err(domain("a sweep needs at least one load k"));
    }
    let mut grid = Vec::with_capacity(req.loads.len());
    for &k in &req.loads {
        if k < 1 {
            return Err(domain("load k must be at least 1"));
        }
        let ms = sweep_ball_counts(k, dist, req.rho_max, req.points)?;
        if req.exact {
            let too_big = ms.iter().any(|&m| m > EGF_MAX_BALLS) || dist.bin_count() > EGF_MAX_BINS;
            if too_big {
                return Err(Error::TooLarge(format!(
                    "exact values need m ≤ {EGF_MAX_BALLS} and n ≤ {EGF_MAX_BINS}; k = {k} reaches m = {}",
                    ms.last().copied().unwrap_or(0)
                )));
            }
        }
        grid.push((k, ms));
    }

    let mut rows = Vec::new();
    for (k, ms) in grid {
        let sims = sim_max_load_curve(k, dist, &ms, &req.sim)?;
        for (&m, est) in ms.iter().zip(&sims) {
            let inst = ProblemInstance::new(m, k, dist.clone())?;
            let bounds = sandwich(&inst)?;
            let exact = if req.exact {
                Some(exact_pr_max_geq(&inst)?.probability)
            } else {
                None
            };
            rows.push(SweepRow {
                k,
                m,
                rho: inst.rho().value(),
                lower: bounds.lower,
                upper: bounds.upper,
                empirical: Some(est.frequency),
                wilson_low: Some(est.wilson_low),
                wilson_high: Some(est.wilson_high),
                exact,
            });
        }
    }
    Ok(rows)
}
