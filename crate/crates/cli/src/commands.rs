use std::fmt::Write as _;

use maxload::bounds::{
    cor2_lower, cor2_upper, cor4_interval, cor5_interval, cor6_wait_bounds, integer_brackets,
    restricted_sandwich, sandwich, solve_k_star, subset_indices, RegimeBound,
};
use maxload::check::{run_checks_with, BoundsFn, CheckLevel, CheckReport};
use maxload::oracle::{
    enumerate_restricted, enumerate_small, exact_pr_max_geq, exact_restricted,
    expected_wait_quadrature,
};
use maxload::sim::{sim_max_load, sim_waiting_time, z_for_confidence, SimConfig};
use maxload::sweep::{run_sweep, SweepRequest};
use maxload::{BoundPair, ProblemInstance, Result};
use serde::Serialize;

use crate::dist_spec::DistSpec;

#[derive(Debug, Serialize)]
pub struct BoundReport {
    pub dist: String,
    pub m: u64,
    pub k: u32,
    pub k_norm: f64,
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_source: String,
    pub upper_source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    pub cor2_upper: RegimeBound,
    pub cor2_lower: RegimeBound,
}

pub fn bound(spec: &DistSpec, m: u64, k: u32, subset: Option<&[usize]>) -> Result<BoundReport> {
    let inst = ProblemInstance::new(m, k, spec.dist.clone())?;
    let (pair, subset) = match subset {
        Some(s) => (
            restricted_sandwich(&inst, s)?,
            Some(subset_indices(s, spec.dist.bin_count())?),
        ),
        None => (sandwich(&inst)?, None),
    };
    let rho = inst.rho();
    Ok(BoundReport {
        dist: spec.text.clone(),
        m,
        k,
        k_norm: inst.k_norm(),
        rho: rho.value(),
        lower: pair.lower,
        upper: pair.upper,
        lower_source: pair.lower_source.to_string(),
        upper_source: pair.upper_source.to_string(),
        subset,
        cor2_upper: cor2_upper(rho, f64::from(k)),
        cor2_lower: cor2_lower(rho, f64::from(k)),
    })
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum SolveReport {
    Load {
        dist: String,
        m: u64,
        delta: f64,
        k_star: f64,
        k_floor: u32,
        k_ceil: u32,
        k_low: f64,
        k_high: f64,
    },
    Balls {
        dist: String,
        k: u32,
        delta: f64,
        m_star: f64,
        m_low: f64,
        m_high: f64,
    },
}

pub fn solve_for_load(spec: &DistSpec, m: u64, delta: f64) -> Result<SolveReport> {
    let iv = cor4_interval(m, &spec.dist, delta)?;
    let (k_floor, k_ceil) = integer_brackets(iv.k_star);
    Ok(SolveReport::Load {
        dist: spec.text.clone(),
        m,
        delta,
        k_star: solve_k_star(m, &spec.dist)?,
        k_floor,
        k_ceil,
        k_low: iv.k_low,
        k_high: iv.k_high,
    })
}

pub fn solve_for_balls(spec: &DistSpec, k: u32, delta: f64) -> Result<SolveReport> {
    let iv = cor5_interval(k, &spec.dist, delta)?;
    Ok(SolveReport::Balls {
        dist: spec.text.clone(),
        k,
        delta,
        m_star: iv.m_star,
        m_low: iv.m_low,
        m_high: iv.m_high,
    })
}

/// CSV float: shortest round-trip form, exponent notation only at the extremes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sweep(spec: &DistSpec, req: &SweepRequest) -> Result<String> {
    let rows = run_sweep(&spec.dist, req)?;
    let mut out = String::from("dist,k,m,rho,lower,upper,empirical,wilson_low,wilson_high,exact\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            spec.text,
            r.k,
            r.m,
            num(r.rho),
            num(r.lower),
            num(r.upper),
            opt(r.empirical),
            opt(r.wilson_low),
            opt(r.wilson_high),
            opt(r.exact)
        )
        .expect("writing to a String");
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct WaitSim {
    pub trials: u64,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
    pub censored: u64,
    pub cap: u64,
}

#[derive(Debug, Serialize)]
pub struct WaitReport {
    pub dist: String,
    pub k: u32,
    pub k_norm: f64,
    pub m_star: f64,
    pub cor6_lower: f64,
    pub cor6_upper: f64,
    pub c_k: f64,
    /// `c_k / ‖p‖_k`.
    pub c_k_lower: f64,
    pub quadrature_ew: f64,
    /// `‖p‖_k E[W]`, which lies in `[c_k, k]`.
    pub scaled_ew: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<WaitSim>,
}

pub fn wait(spec: &DistSpec, k: u32, sim: Option<SimConfig>) -> Result<WaitReport> {
    let wb = cor6_wait_bounds(k, &spec.dist)?;
    let ew = expected_wait_quadrature(k, &spec.dist)?;
    let sim = match sim {
        Some(cfg) => {
            let w = sim_waiting_time(k, &spec.dist, &cfg)?;
            Some(WaitSim {
                trials: cfg.trials,
                seed: cfg.seed,
                mean: w.mean(),
                std_error: w.std_error(),
                censored: w.censored,
                cap: w.cap,
            })
        }
        None => None,
    };
    Ok(WaitReport {
        dist: spec.text.clone(),
        k,
        k_norm: wb.k_norm,
        m_star: wb.m_star(),
        cor6_lower: wb.lower_expected,
        cor6_upper: wb.upper_expected,
        c_k: wb.c_k,
        c_k_lower: wb.c_k_lower(),
        quadrature_ew: ew,
        scaled_ew: wb.k_norm * ew,
        sim,
    })
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub dist: String,
    pub m: u64,
    pub k: u32,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    pub probability: f64,
    pub method: String,
    pub precision_bits: u32,
}

pub fn oracle(
    spec: &DistSpec,
    m: u64,
    k: u32,
    subset: Option<&[usize]>,
    enumerate: bool,
) -> Result<OracleReport> {
    let inst = ProblemInstance::new(m, k, spec.dist.clone())?;
    let res = match (subset, enumerate) {
        (Some(s), true) => enumerate_restricted(&inst, s)?,
        (Some(s), false) => exact_restricted(&inst, s)?,
        (None, true) => enumerate_small(&inst)?,
        (None, false) => exact_pr_max_geq(&inst)?,
    };
    let subset = subset
        .map(|s| subset_indices(s, spec.dist.bin_count()))
        .transpose()?;
    Ok(OracleReport {
        dist: spec.text.clone(),
        m,
        k,
        rho: inst.rho().value(),
        subset,
        probability: res.probability,
        method: res.method.label().to_string(),
        precision_bits: res.precision_bits,
    })
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub dist: String,
    pub m: u64,
    pub k: u32,
    pub rho: f64,
    pub trials: u64,
    pub seed: u64,
    pub successes: u64,
    pub frequency: f64,
    pub confidence: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn simulate(
    spec: &DistSpec,
    m: u64,
    k: u32,
    cfg: &SimConfig,
    confidence: f64,
) -> Result<SimulateReport> {
    let inst = ProblemInstance::new(m, k, spec.dist.clone())?;
    let est = sim_max_load(&inst, cfg)?.with_z(z_for_confidence(confidence)?)?;
    let b = sandwich(&inst)?;
    Ok(SimulateReport {
        dist: spec.text.clone(),
        m,
        k,
        rho: inst.rho().value(),
        trials: cfg.trials,
        seed: cfg.seed,
        successes: est.successes,
        frequency: est.frequency,
        confidence,
        wilson_low: est.wilson_low,
        wilson_high: est.wilson_high,
        lower: b.lower,
        upper: b.upper,
    })
}

/// Deliberately wrong bounds for exercising the self-check's failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Halve the upper bound.
    HalveUpper,
    /// Double the lower bound.
    DoubleLower,
}

fn faulty(fault: Fault, inst: &ProblemInstance) -> Result<BoundPair> {
    let mut b = sandwich(inst)?;
    match fault {
        Fault::HalveUpper => b.upper *= 0.5,
        Fault::DoubleLower => b.lower = (2.0 * b.lower).min(1.0),
    }
    Ok(b)
}

pub fn check(level: CheckLevel, seed: u64, fault: Option<Fault>) -> CheckReport {
    match fault {
        None => run_checks_with(level, seed, &sandwich),
        Some(f) => {
            let bounds: &BoundsFn = &move |inst: &ProblemInstance| faulty(f, inst);
            run_checks_with(level, seed, bounds)
        }
    }
}
