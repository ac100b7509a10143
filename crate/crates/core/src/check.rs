//! Self-check suites: every bound against the exact oracles and seeded
//! simulation on fixed grids. `fast` covers the identities and exact grids;
//! `full` adds the simulation sweeps and the waiting-time quadrature.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    cor2_lower, cor2_upper, cor3_thresholds, cor6_wait_bounds, m_star, restricted_sandwich,
    sandwich, solve_k_star, BoundPair,
};
use crate::error::Result;
use crate::math::{
    binom_cdf_negative_form, binom_upper_tail, k_norm, rho, validate_distribution, Distribution,
    ProblemInstance,
};
use crate::oracle::{
    enumerate_restricted, enumerate_small, exact_pr_max_geq, exact_restricted,
    expected_wait_quadrature, lemma_collapse_step, ENUMERATION_MAX_OUTCOMES,
};
use crate::sim::{sim_max_load_curve, sim_waiting_time, SimConfig, SimEstimate, Z_999, Z_9999};
use crate::sweep::sweep_ball_counts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub checked: u64,
    /// First violation, or a short summary when passing.
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub level: CheckLevel,
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

/// The two-sided bound under test. Swapping it out is how the negative
/// control checks that the suite can fail.
pub type BoundsFn = dyn Fn(&ProblemInstance) -> Result<BoundPair> + Sync;

struct Tally {
    checked: u64,
    failure: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            checked: 0,
            failure: None,
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(describe());
        }
    }

    fn fail(&mut self, msg: String) {
        self.check(false, || msg);
    }

    fn finish(self, id: u32, name: &str, start: Instant, summary: String) -> CriterionReport {
        CriterionReport {
            id,
            name: name.to_string(),
            passed: self.failure.is_none(),
            checked: self.checked,
            detail: self.failure.unwrap_or(summary),
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

/// Distributions on `n` bins used by the exact grids: uniform, linear,
/// near-point `(0.9, 0.1/(n-1), ...)` and `randoms` random vectors.
pub fn grid_distributions(n: usize, randoms: usize, rng: &mut ChaCha8Rng) -> Vec<Distribution> {
    let mut out = vec![
        Distribution::uniform(n).expect("n ≥ 1"),
        Distribution::linear(n).expect("n ≥ 1"),
    ];
    let near_point: Vec<f64> = if n == 1 {
        vec![1.0]
    } else {
        std::iter::once(0.9)
            .chain(std::iter::repeat_n(0.1 / (n - 1) as f64, n - 1))
            .collect()
    };
    out.push(validate_distribution(&near_point).expect("valid"));
    for _ in 0..randoms {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        out.push(validate_distribution(&w).expect("positive weights"));
    }
    out
}

fn within_enumeration(n: usize, m: u64) -> bool {
    u32::try_from(m)
        .ok()
        .and_then(|m| (n as u64).checked_pow(m))
        .is_some_and(|o| o <= ENUMERATION_MAX_OUTCOMES)
}

fn describe(inst: &ProblemInstance) -> String {
    format!(
        "n={} m={} k={} p={:?}",
        inst.dist.bin_count(),
        inst.balls,
        inst.load,
        inst.dist.weights()
    )
}

/// Exact `Pr[M ≥ k]`, cross-checked against enumeration where it fits.
fn verified_exact(inst: &ProblemInstance, tally: &mut Tally) -> Result<f64> {
    let egf = exact_pr_max_geq(inst)?.probability;
    if within_enumeration(inst.dist.bin_count(), inst.balls) {
        let en = enumerate_small(inst)?.probability;
        tally.check((egf - en).abs() <= 1e-10, || {
            format!("egf {egf} vs enumeration {en} at {}", describe(inst))
        });
    }
    Ok(egf)
}

fn criterion_sandwich(seed: u64, bounds: &BoundsFn) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    for n in 1..=6 {
        for dist in grid_distributions(n, 20, &mut rng) {
            for m in 0..=10u64 {
                for k in 1..=6u32 {
                    let inst = ProblemInstance::new(m, k, dist.clone())?;
                    let exact = verified_exact(&inst, &mut tally)?;
                    let b = bounds(&inst)?;
                    tally.check(b.contains(exact, 1e-12), || {
                        format!(
                            "exact {exact} outside [{}, {}] at {}",
                            b.lower,
                            b.upper,
                            describe(&inst)
                        )
                    });
                }
            }
        }
    }
    Ok(tally.finish(
        1,
        "sandwich correctness",
        start,
        "all grid instances bracketed".into(),
    ))
}

fn criterion_fact1() -> Result<CriterionReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let alphas: Vec<f64> = std::iter::once(0.01)
        .chain((1..=19).map(|i| f64::from(i) * 0.05))
        .chain(std::iter::once(0.99))
        .collect();
    for m in 1..=50u64 {
        for &a in &alphas {
            for t in 0..m {
                let lhs = binom_cdf_negative_form(m, a, t)?;
                let rhs = 1.0 - binom_upper_tail(m, a, t as i64 + 1)?;
                tally.check((lhs - rhs).abs() <= 1e-12, || {
                    format!("m={m} alpha={a} t={t}: {lhs} vs {rhs}")
                });
            }
        }
    }
    Ok(tally.finish(
        2,
        "negative-binomial identity",
        start,
        "identity holds".into(),
    ))
}

/// Frequencies of a `ρ` sweep with common random numbers.
fn sweep_curve(
    dist: &Distribution,
    k: u32,
    rho_max: f64,
    points: usize,
    cfg: &SimConfig,
) -> Result<Vec<(u64, f64, SimEstimate)>> {
    let ms = sweep_ball_counts(k, dist, rho_max, points)?;
    let est = sim_max_load_curve(k, dist, &ms, cfg)?;
    Ok(ms
        .iter()
        .zip(est)
        .map(|(&m, e)| (m, rho(m, f64::from(k), dist).expect("k ≥ 1").value(), e))
        .collect())
}

/// `ρ` at which the curve first reaches 0.5, linearly interpolated.
pub fn half_crossing(curve: &[(f64, f64)]) -> Option<f64> {
    let idx = curve.iter().position(|&(_, f)| f >= 0.5)?;
    if idx == 0 {
        return Some(curve[0].0);
    }
    let (r0, f0) = curve[idx - 1];
    let (r1, f1) = curve[idx];
    Some(r0 + (0.5 - f0) / (f1 - f0) * (r1 - r0))
}

fn criterion_phase_sweep(seed: u64, bounds: &BoundsFn) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let dist = Distribution::uniform(20)?;
    let cfg = SimConfig::new(5000, seed);
    let mut crossings = Vec::new();
    for k in [4u32, 20] {
        let curve = sweep_curve(&dist, k, 3.0, 60, &cfg)?;
        for (m, r, est) in &curve {
            let est = est.with_z(Z_9999)?;
            let eps = est.half_width();
            let inst = ProblemInstance::new(*m, k, dist.clone())?;
            let b = bounds(&inst)?;
            tally.check(b.contains(est.frequency, eps), || {
                format!(
                    "k={k} m={m} rho={r:.4}: frequency {} outside [{}, {}] ± {eps}",
                    est.frequency, b.lower, b.upper
                )
            });
        }
        let pts: Vec<(f64, f64)> = curve.iter().map(|(_, r, e)| (*r, e.frequency)).collect();
        match half_crossing(&pts) {
            Some(c) => {
                tally.check((0.3..=1.5).contains(&c), || {
                    format!("k={k}: 0.5 crossing at rho={c}")
                });
                crossings.push(format!("k={k}: {c:.3}"));
            }
            None => tally.fail(format!("k={k}: frequency never reaches 0.5")),
        }
    }
    Ok(tally.finish(
        3,
        "sweep sandwich and phase transition",
        start,
        format!("0.5 crossings {}", crossings.join(", ")),
    ))
}

/// Linear interpolation of `(ρ, value)` points at `x`.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let idx = points.iter().position(|&(r, _)| r >= x)?;
    if points[idx].0 == x || idx == 0 {
        return (points[idx].0 == x).then_some(points[idx].1);
    }
    let (r0, v0) = points[idx - 1];
    let (r1, v1) = points[idx];
    Some(v0 + (x - r0) / (r1 - r0) * (v1 - v0))
}

/// Uniform and linear frequencies at matched `ρ`: every ball count from 1 to
/// `ρ = 3` is simulated for the linear distribution and interpolated at each
/// uniform grid point.
fn criterion_insensitivity(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let k = 4u32;
    let cfg = SimConfig::new(5000, seed);
    let uniform = Distribution::uniform(20)?;
    let linear = Distribution::linear(20)?;
    let u_curve = sweep_curve(&uniform, k, 3.0, 60, &cfg)?;
    let lin_max = (3.0 * f64::from(k) / k_norm(&linear, f64::from(k))?).ceil() as u64 + 1;
    let lin_ms: Vec<u64> = (1..=lin_max).collect();
    let lin_est = sim_max_load_curve(k, &linear, &lin_ms, &cfg)?;
    let lin_pts: Vec<(f64, f64, f64)> = lin_ms
        .iter()
        .zip(&lin_est)
        .map(|(&m, e)| {
            let e = e.with_z(Z_999).expect("valid counts");
            (
                rho(m, f64::from(k), &linear).expect("k ≥ 1").value(),
                e.frequency,
                e.half_width(),
            )
        })
        .collect();
    let freq: Vec<(f64, f64)> = lin_pts.iter().map(|p| (p.0, p.1)).collect();
    let hw: Vec<(f64, f64)> = lin_pts.iter().map(|p| (p.0, p.2)).collect();
    let mut worst: f64 = 0.0;
    for (m, r, est) in &u_curve {
        let (Some(lf), Some(lh)) = (interpolate(&freq, *r), interpolate(&hw, *r)) else {
            continue;
        };
        let gap = (est.frequency - lf).abs();
        let allowed = est.with_z(Z_999)?.half_width() + lh + 0.02;
        worst = worst.max(gap - allowed);
        tally.check(gap < allowed, || {
            format!(
                "m={m} rho={r:.4}: uniform {} vs linear {lf:.4}, allowed {allowed:.4}",
                est.frequency
            )
        });
    }
    Ok(tally.finish(
        4,
        "distribution insensitivity",
        start,
        format!("largest gap minus allowance {worst:.4}"),
    ))
}

fn criterion_small_rho(bounds: &BoundsFn) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let dist = Distribution::uniform(5000)?;
    let k = 2u32;
    let norm = k_norm(&dist, 2.0)?;
    let mut m = u64::from(k);
    let mut min_ratio = f64::INFINITY;
    loop {
        let inst = ProblemInstance::new(m, k, dist.clone())?;
        if inst.rho().value() > 0.25 {
            break;
        }
        if norm <= 0.5 {
            let exact = exact_pr_max_geq(&inst)?.probability;
            let upper = bounds(&inst)?.upper;
            let floor = (-2.0 * m as f64 * norm).exp();
            let ratio = exact / upper;
            min_ratio = min_ratio.min(ratio / floor);
            tally.check(ratio >= floor, || {
                format!("m={m}: exact/upper = {ratio} below exp(-2m‖p‖) = {floor}")
            });
        }
        m += 1;
    }
    Ok(tally.finish(
        5,
        "small-rho tightness",
        start,
        format!("min (exact/upper)/exp(-2m‖p‖) = {min_ratio:.4}"),
    ))
}

fn criterion_solver(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..100 {
        let n = rng.random_range(2..=50usize);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let dist = validate_distribution(&w)?;
        let m = rng.random_range(1..=2000u64);
        let k = solve_k_star(m, &dist)?;
        let r = rho(m, k, &dist)?.value();
        tally.check((r - 1.0).abs() <= 1e-9, || {
            format!("n={n} m={m}: rho(k*={k}) = {r}")
        });
    }
    let k = solve_k_star(27, &Distribution::uniform(27)?)?;
    tally.check((k - 3.0).abs() <= 1e-9, || format!("uniform 27: k* = {k}"));
    let ms = m_star(2.0, &Distribution::uniform(100)?)?;
    tally.check(ms == 20.0, || format!("uniform 100, k=2: m* = {ms}"));
    Ok(tally.finish(
        6,
        "solver fixed points",
        start,
        "all fixed points within 1e-9".into(),
    ))
}

fn criterion_wait(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let dist = Distribution::uniform(365)?;
    let quad = expected_wait_quadrature(2, &dist)?;
    let sims = sim_waiting_time(2, &dist, &SimConfig::new(100_000, seed))?;
    tally.check(sims.censored == 0, || {
        format!("{} censored samples", sims.censored)
    });
    let (mean, se) = (sims.mean(), sims.std_error());
    tally.check((quad - mean).abs() <= 3.0 * se, || {
        format!("quadrature {quad} vs Monte Carlo {mean} ± {se}")
    });
    let wb = cor6_wait_bounds(2, &dist)?;
    tally.check(
        wb.lower_expected <= quad && quad <= wb.upper_expected,
        || {
            format!(
                "quadrature {quad} outside [{}, {}]",
                wb.lower_expected, wb.upper_expected
            )
        },
    );
    let scaled = k_norm(&dist, 2.0)? * quad;
    tally.check(wb.c_k - 1e-6 <= scaled && scaled <= 2.0 + 1e-6, || {
        format!("‖p‖_2 E[W] = {scaled} outside [{}, 2]", wb.c_k)
    });
    Ok(tally.finish(
        7,
        "expected waiting time",
        start,
        format!("quadrature {quad:.5}, Monte Carlo {mean:.5} ± {se:.5}"),
    ))
}

fn criterion_corollaries(seed: u64, bounds: &BoundsFn) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    let deltas = [0.01, 0.05, 0.1, 0.25, 0.5, 0.9];
    for n in 1..=6 {
        for dist in grid_distributions(n, 20, &mut rng) {
            for m in 1..=10u64 {
                for k in 1..=6u32 {
                    let inst = ProblemInstance::new(m, k, dist.clone())?;
                    let r = inst.rho();
                    let kf = f64::from(k);
                    let b = bounds(&inst)?;
                    if r.value() < (-1f64).exp() {
                        let c = cor2_upper(r, kf).value;
                        tally.check(c >= b.upper - 1e-15, || {
                            format!(
                                "cor2 upper {c} < theorem1 upper {} at {}",
                                b.upper,
                                describe(&inst)
                            )
                        });
                    }
                    if r.value() > 1.0 {
                        let c = cor2_lower(r, kf).value;
                        tally.check(c <= b.lower + 1e-15, || {
                            format!(
                                "cor2 lower {c} > theorem1 lower {} at {}",
                                b.lower,
                                describe(&inst)
                            )
                        });
                    }
                    let exact = exact_pr_max_geq(&inst)?.probability;
                    for &d in &deltas {
                        let th = cor3_thresholds(kf, d)?;
                        if r.value() <= th.rho_upper {
                            tally.check(exact <= d + 1e-12, || {
                                format!("delta={d}: exact {exact} > delta at {}", describe(&inst))
                            });
                        }
                        if r.value() >= th.rho_lower {
                            tally.check(exact >= 1.0 - d - 1e-12, || {
                                format!("delta={d}: exact {exact} < 1-delta at {}", describe(&inst))
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(tally.finish(
        8,
        "corollary consistency",
        start,
        "all regimes consistent".into(),
    ))
}

fn nonempty_subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << n)).map(move |mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
}

fn criterion_restricted(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(9));
    let mut tally = Tally::new();
    for n in 1..=5 {
        for dist in grid_distributions(n, 2, &mut rng) {
            for m in 0..=8u64 {
                for k in 1..=4u32 {
                    let inst = ProblemInstance::new(m, k, dist.clone())?;
                    for subset in nonempty_subsets(n) {
                        let exact = exact_restricted(&inst, &subset)?.probability;
                        if within_enumeration(n, m) {
                            let en = enumerate_restricted(&inst, &subset)?.probability;
                            tally.check((exact - en).abs() <= 1e-10, || {
                                format!(
                                    "subset {subset:?}: egf {exact} vs enumeration {en} at {}",
                                    describe(&inst)
                                )
                            });
                        }
                        let b = restricted_sandwich(&inst, &subset)?;
                        tally.check(b.contains(exact, 1e-12), || {
                            format!(
                                "subset {subset:?}: exact {exact} outside [{}, {}] at {}",
                                b.lower,
                                b.upper,
                                describe(&inst)
                            )
                        });
                    }
                }
            }
        }
    }
    Ok(tally.finish(9, "restricted bins", start, "all subsets bracketed".into()))
}

/// `Pr[max load over bins j.. < k]` under `q`.
fn pr_tail_bins_below(q: &Distribution, from: usize, m: u64, k: u32) -> Result<f64> {
    let inst = ProblemInstance::new(m, k, q.clone())?;
    let subset: Vec<usize> = (from..q.bin_count()).collect();
    Ok(1.0 - exact_restricted(&inst, &subset)?.probability)
}

fn criterion_collapse(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(10));
    let mut tally = Tally::new();
    for _ in 0..200 {
        let n = rng.random_range(2..=6usize);
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let Ok(q) = validate_distribution(&w) else {
            continue;
        };
        let j = rng.random_range(0..n - 1);
        let k = rng.random_range(1..=5u32);
        let m = rng.random_range(0..=10u64);
        let q2 = lemma_collapse_step(&q, j, k)?;
        let before = pr_tail_bins_below(&q, j, m, k)?;
        let after = pr_tail_bins_below(&q2, j + 1, m, k)?;
        tally.check(before <= after + 1e-12, || {
            format!("q={:?} j={j} k={k} m={m}: {before} > {after}", q.weights())
        });
    }
    Ok(tally.finish(
        10,
        "collapse-step monotonicity",
        start,
        "200 random instances".into(),
    ))
}

/// Runs the suite at `level`, with `bounds` as the two-sided bound under test.
pub fn run_checks_with(level: CheckLevel, seed: u64, bounds: &BoundsFn) -> CheckReport {
    type Job<'a> = Box<dyn Fn() -> Result<CriterionReport> + 'a>;
    let mut jobs: Vec<(u32, &str, Job)> = vec![
        (
            1,
            "sandwich correctness",
            Box::new(|| criterion_sandwich(seed, bounds)),
        ),
        (2, "negative-binomial identity", Box::new(criterion_fact1)),
        (
            5,
            "small-rho tightness",
            Box::new(|| criterion_small_rho(bounds)),
        ),
        (
            6,
            "solver fixed points",
            Box::new(|| criterion_solver(seed)),
        ),
        (
            8,
            "corollary consistency",
            Box::new(|| criterion_corollaries(seed, bounds)),
        ),
        (
            9,
            "restricted bins",
            Box::new(|| criterion_restricted(seed)),
        ),
        (
            10,
            "collapse-step monotonicity",
            Box::new(|| criterion_collapse(seed)),
        ),
    ];
    if level == CheckLevel::Full {
        jobs.push((
            3,
            "sweep sandwich and phase transition",
            Box::new(|| criterion_phase_sweep(seed, bounds)),
        ));
        jobs.push((
            4,
            "distribution insensitivity",
            Box::new(|| criterion_insensitivity(seed)),
        ));
        jobs.push((
            7,
            "expected waiting time",
            Box::new(|| criterion_wait(seed)),
        ));
    }
    jobs.sort_by_key(|j| j.0);
    let criteria: Vec<CriterionReport> = jobs
        .into_iter()
        .map(|(id, name, job)| {
            job().unwrap_or_else(|e| CriterionReport {
                id,
                name: name.to_string(),
                passed: false,
                checked: 0,
                detail: format!("error: {e}"),
                seconds: 0.0,
            })
        })
        .collect();
    CheckReport {
        level,
        seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

pub fn run_checks(level: CheckLevel, seed: u64) -> CheckReport {
    run_checks_with(level, seed, &sandwich)
}
