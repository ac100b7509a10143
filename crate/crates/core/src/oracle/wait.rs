//! `E[W] = ∫_0^∞ Π_i q_k(p_i t) e^{-p_i t} dt`.
//!
//! The integrand is `Pr[every bin < k]` for a Poissonized process at time
//! `t`, so it decreases from 1 to 0. Each factor is at most 1, which gives
//! the tail envelope `q_k(a t) e^{-a t}` with `a = max_i p_i`; its integral
//! over `[T, ∞)` has the closed form `(1/a) Σ_{i<k} Pr[Poisson(aT) ≤ i]`.

use crate::error::{domain, Error, Result};
use crate::math::{k_norm, Distribution};
use crate::numeric::{log_sum_exp, CompensatedSum};

/// Absolute tolerance for the integral over `[0, T]`.
const BODY_TOL: f64 = 1e-8;
/// Certified bound on the discarded tail `[T, ∞)`.
const TAIL_TOL: f64 = 1e-9;
const MAX_INTERVALS: usize = 20_000;

/// Distinct weights with multiplicities, so uniform inputs cost O(k) per
/// evaluation.
fn group_weights(dist: &Distribution) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = dist
        .weights()
        .iter()
        .copied()
        .filter(|&w| w > 0.0)
        .collect();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for w in sorted {
        match groups.last_mut() {
            Some((v, c)) if *v == w => *c += 1.0,
            _ => groups.push((w, 1.0)),
        }
    }
    groups
}

/// `ln(q_k(x) e^{-x}) = ln Pr[Poisson(x) < k]`.
fn ln_poisson_below(x: f64, k: u32, ln_fact: &[f64]) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let lx = x.ln();
    let terms: Vec<f64> = (0..k as usize)
        .map(|i| i as f64 * lx - ln_fact[i])
        .collect();
    log_sum_exp(&terms) - x
}

struct Integrand {
    groups: Vec<(f64, f64)>,
    k: u32,
    ln_fact: Vec<f64>,
}

impl Integrand {
    fn eval(&self, t: f64) -> f64 {
        let s: CompensatedSum = self
            .groups
            .iter()
            .map(|&(p, c)| c * ln_poisson_below(p * t, self.k, &self.ln_fact))
            .collect();
        s.value().exp()
    }
}

/// `∫_T^∞ q_k(a t) e^{-a t} dt`.
fn tail_envelope(a: f64, k: u32, cutoff: f64, ln_fact: &[f64]) -> f64 {
    let lambda = a * cutoff;
    let total: CompensatedSum = (0..k)
        .map(|i| ln_poisson_below(lambda, i + 1, ln_fact).exp())
        .collect();
    total.value() / a
}

// 15-point Kronrod nodes/weights and the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &Integrand, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f.eval(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let s = f.eval(center - dx) + f.eval(center + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive(f: &Integrand, panels: &[(f64, f64)]) -> Result<f64> {
    let mut work: Vec<(f64, f64, f64, f64)> = panels
        .iter()
        .map(|&(a, b)| {
            let (v, e) = gauss_kronrod(f, a, b);
            (a, b, v, e)
        })
        .collect();
    for _ in 0..MAX_INTERVALS {
        let err: f64 = work.iter().map(|w| w.3).sum();
        if err <= BODY_TOL {
            let total: CompensatedSum = work.iter().map(|w| w.2).collect();
            return Ok(total.value());
        }
        let (idx, _) = work
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (a, b, _, _) = work.swap_remove(idx);
        let mid = 0.5 * (a + b);
        for (lo, hi) in [(a, mid), (mid, b)] {
            let (v, e) = gauss_kronrod(f, lo, hi);
            work.push((lo, hi, v, e));
        }
    }
    Err(Error::ConvergenceFailure(format!(
        "error estimate above {BODY_TOL} after {MAX_INTERVALS} subdivisions"
    )))
}

/// `E[W]` for load threshold `k` by adaptive Gauss–Kronrod quadrature on
/// `[0, T]` plus a certified bound on the tail beyond `T`. Absolute error is
/// below `1e-6`.
///
/// `k = 1` needs no quadrature: the first ball always makes a 1-loaded bin.
pub fn expected_wait_quadrature(k: u32, dist: &Distribution) -> Result<f64> {
    if k < 1 {
        return Err(domain("load k must be at least 1"));
    }
    // One live bin: every ball lands there, so W = k.
    if k == 1 || dist.max_weight() == 1.0 {
        return Ok(f64::from(k));
    }
    let ln_fact: Vec<f64> = (0..=k as usize)
        .scan(0.0, |acc, i| {
            if i > 0 {
                *acc += (i as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let a = dist.max_weight();
    let m_star = f64::from(k) / k_norm(dist, f64::from(k))?;

    let mut cutoff = m_star;
    let mut doublings = 0;
    while tail_envelope(a, k, cutoff, &ln_fact) > TAIL_TOL {
        cutoff *= 2.0;
        doublings += 1;
        if doublings > 200 || !cutoff.is_finite() {
            return Err(Error::ConvergenceFailure(
                "tail envelope never fell below tolerance".into(),
            ));
        }
    }

    // E[W] ≤ m*, so the integrand's mass sits on the scale of m*; panel
    // widths grow geometrically from there so no panel can step over it.
    let mut panels = Vec::new();
    let first = m_star / 16.0;
    let mut lo = 0.0;
    let mut hi = first;
    while hi < cutoff {
        panels.push((lo, hi));
        lo = hi;
        hi = (hi * 2.0).max(lo + first);
    }
    panels.push((lo, cutoff));

    let integrand = Integrand {
        groups: group_weights(dist),
        k,
        ln_fact,
    };
    adaptive(&integrand, &panels)
}
