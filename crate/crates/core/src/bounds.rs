//! Bounds on `Pr[M ≥ k]` and on the waiting time `W`, the threshold solvers
//! built on `ρ`, and the restricted-subset variant.

use std::collections::BTreeSet;
use std::f64::consts::E;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math::{
    binom_upper_tail, k_norm, ln_k_norm, ln_norm_of, log_binomial_coeff, Distribution,
    ProblemInstance, Rho,
};

/// Which result a bound value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// Binomial lower bound `Pr[Bino(m, ‖p‖_k) ≥ k]`.
    Theorem1Lower,
    /// Collision-count upper bound `C(m,k) ‖p‖_k^k`.
    Theorem1Upper,
    /// Same two bounds with the k-norm of a subset of bins.
    RestrictedLower,
    RestrictedUpper,
    /// `(eρ)^k` upper bound.
    Cor2Upper,
    /// `1 - exp(-k(ρ - ln(eρ)))` lower bound.
    Cor2Lower,
}

impl BoundSource {
    pub fn label(self) -> &'static str {
        match self {
            Self::Theorem1Lower | Self::Theorem1Upper => "theorem1",
            Self::RestrictedLower | Self::RestrictedUpper => "restricted",
            Self::Cor2Upper | Self::Cor2Lower => "cor2",
        }
    }
}

impl fmt::Display for BoundSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lower and upper bounds on a probability, with provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub lower_source: BoundSource,
    pub upper_source: BoundSource,
}

impl BoundPair {
    pub fn contains(&self, p: f64, tol: f64) -> bool {
        self.lower - tol <= p && p <= self.upper + tol
    }
}

/// Whether a corollary bound is informative for the given `ρ` or was
/// replaced by its trivial value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Informative,
    Vacuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBound {
    pub value: f64,
    pub regime: Regime,
}

fn load_of(inst: &ProblemInstance) -> (u64, f64) {
    (u64::from(inst.load), f64::from(inst.load))
}

fn upper_from_ln_norm(m: u64, k: u64, ln_norm: f64) -> f64 {
    if m < k {
        return 0.0;
    }
    let ln = log_binomial_coeff(m, k) + k as f64 * ln_norm;
    ln.exp().min(1.0)
}

/// `min(1, C(m,k) ‖p‖_k^k)`: Markov's inequality on the number of k-way
/// collisions.
pub fn theorem1_upper(inst: &ProblemInstance) -> f64 {
    let (k, kf) = load_of(inst);
    let ln_norm = ln_k_norm(&inst.dist, kf).expect("load ≥ 1");
    upper_from_ln_norm(inst.balls, k, ln_norm)
}

/// `Pr[Bino(m, ‖p‖_k) ≥ k]`.
pub fn theorem1_lower(inst: &ProblemInstance) -> f64 {
    let norm = inst.k_norm();
    binom_upper_tail(inst.balls, norm, i64::from(inst.load)).expect("norm lies in [0, 1]")
}

fn checked_pair(
    lower: f64,
    upper: f64,
    lower_source: BoundSource,
    upper_source: BoundSource,
) -> Result<BoundPair> {
    // Analytically lower ≤ upper; a violation beyond rounding is a bug.
    if lower > upper + 1e-12 {
        return Err(Error::NumericFailure(format!(
            "lower bound {lower} exceeds upper bound {upper}"
        )));
    }
    Ok(BoundPair {
        lower: lower.min(upper),
        upper,
        lower_source,
        upper_source,
    })
}

/// Both sides of `Pr[Bino(m,‖p‖_k) ≥ k] ≤ Pr[M ≥ k] ≤ C(m,k)‖p‖_k^k`.
pub fn sandwich(inst: &ProblemInstance) -> Result<BoundPair> {
    checked_pair(
        theorem1_lower(inst),
        theorem1_upper(inst),
        BoundSource::Theorem1Lower,
        BoundSource::Theorem1Upper,
    )
}

/// `(eρ)^k` when `ρ < 1/e`, otherwise the vacuous bound 1.
pub fn cor2_upper(rho: Rho, k: f64) -> RegimeBound {
    let r = rho.value();
    if r < 1.0 / E {
        RegimeBound {
            value: (k * (E * r).ln()).exp().min(1.0),
            regime: Regime::Informative,
        }
    } else {
        RegimeBound {
            value: 1.0,
            regime: Regime::Vacuous,
        }
    }
}

/// `1 - exp(-k(ρ - ln(eρ)))` when `ρ > 1`, otherwise the vacuous bound 0.
pub fn cor2_lower(rho: Rho, k: f64) -> RegimeBound {
    let r = rho.value();
    if r > 1.0 {
        RegimeBound {
            value: (-(-k * (r - 1.0 - r.ln())).exp_m1()).clamp(0.0, 1.0),
            regime: Regime::Informative,
        }
    } else {
        RegimeBound {
            value: 0.0,
            regime: Regime::Vacuous,
        }
    }
}

/// `ρ` thresholds below which `Pr[M ≥ k] ≤ δ` and above which
/// `Pr[M ≥ k] ≥ 1 - δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    pub rho_upper: f64,
    pub rho_lower: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_real_load(k: f64) -> Result<()> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(domain(format!("load k must be a finite real ≥ 1, got {k}")));
    }
    Ok(())
}

/// `max{e², 2 ln(1/δ)}`, the factor shared by the lower-side corollaries.
fn lower_side_factor(ln_inv_delta: f64) -> f64 {
    (E * E).max(2.0 * ln_inv_delta)
}

pub fn cor3_thresholds(k: f64, delta: f64) -> Result<PhaseThresholds> {
    check_real_load(k)?;
    check_delta(delta)?;
    let ln_inv = -delta.ln() / k;
    Ok(PhaseThresholds {
        rho_upper: (-ln_inv).exp() / E,
        rho_lower: lower_side_factor(ln_inv),
    })
}

/// Iteration cap for the threshold bisection.
pub const BISECTION_MAX_ITER: usize = 200;
/// Target bracket width on `k`.
pub const BISECTION_TOL: f64 = 1e-12;

/// Solves `k / ‖p‖_k = m` for real `k ∈ [1, m]`, allowing real `m ≥ 1`.
///
/// `g(k) = k/‖p‖_k` is continuous and nondecreasing with `g(1) = 1`, so the
/// root is bracketed by `[1, m]`.
pub fn solve_load_threshold(m: f64, dist: &Distribution) -> Result<f64> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(domain(format!(
            "ball count must be a finite real ≥ 1, got {m}"
        )));
    }
    if dist.bin_count() == 1 {
        return Ok(m);
    }
    let g = |k: f64| -> f64 { k / k_norm(dist, k).expect("k ≥ 1") };
    let (mut lo, mut hi) = (1.0f64, m);
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    if !(g_lo <= m && m <= g_hi) {
        return Err(Error::NumericFailure(format!(
            "root not bracketed: g(1)={g_lo}, g({m})={g_hi}, target {m}"
        )));
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL.max(4.0 * f64::EPSILON * hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid + 1e-9 * m < g_lo || g_mid > g_hi + 1e-9 * m {
            return Err(Error::NumericFailure(format!(
                "k/‖p‖_k not monotone near k={mid}"
            )));
        }
        if g_mid < m {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    // Closer endpoint in ρ = m/g; ties go to the smaller k.
    if (m / g_lo - 1.0).abs() <= (m / g_hi - 1.0).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

/// `k*` with `ρ(m, k*) = 1`.
pub fn solve_k_star(m: u64, dist: &Distribution) -> Result<f64> {
    if m < 1 {
        return Err(domain("k* needs at least one ball"));
    }
    solve_load_threshold(m as f64, dist)
}

/// Integer loads `(⌊k⌋, ⌈k⌉)` around a real threshold, both at least 1.
pub fn integer_brackets(k: f64) -> (u32, u32) {
    let clamp = |x: f64| x.max(1.0).min(f64::from(u32::MAX)) as u32;
    (clamp(k.floor()), clamp(k.ceil()))
}

/// `m* = k / ‖p‖_k`, the ball count at which `ρ = 1`.
pub fn m_star(k: f64, dist: &Distribution) -> Result<f64> {
    check_real_load(k)?;
    Ok(k / k_norm(dist, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadInterval {
    pub k_star: f64,
    pub k_low: f64,
    pub k_high: f64,
}

/// Confidence interval for the maximum load: `Pr[M ≥ k_high] ≤ δ` and
/// `Pr[M ≥ k_low] ≥ 1 - δ`. `k_low` is clamped to 1.
pub fn cor4_interval(m: u64, dist: &Distribution, delta: f64) -> Result<LoadInterval> {
    check_delta(delta)?;
    let k_star = solve_k_star(m, dist)?;
    Ok(LoadInterval {
        k_star,
        k_low: (k_star / lower_side_factor(-delta.ln())).max(1.0),
        k_high: (E / delta) * k_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallInterval {
    pub m_star: f64,
    pub m_low: f64,
    pub m_high: f64,
}

/// Confidence interval for the waiting time: `Pr[W ≤ m_low] ≤ δ` and
/// `Pr[W ≤ m_high] ≥ 1 - δ`.
pub fn cor5_interval(k: u32, dist: &Distribution, delta: f64) -> Result<BallInterval> {
    check_delta(delta)?;
    let m_star = m_star(f64::from(k), dist)?;
    Ok(BallInterval {
        m_star,
        m_low: (delta / E) * m_star,
        m_high: lower_side_factor(-delta.ln()) * m_star,
    })
}

/// Bounds on `E[W]` and the constant `c_k` with `‖p‖_k E[W] ≥ c_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitBounds {
    pub lower_expected: f64,
    pub upper_expected: f64,
    pub c_k: f64,
    pub k_norm: f64,
}

impl WaitBounds {
    /// `m* = k/‖p‖_k`, which is also the upper bound on `E[W]`.
    pub fn m_star(&self) -> f64 {
        self.upper_expected
    }

    /// `c_k / ‖p‖_k`, the sharper lower bound on `E[W]`.
    pub fn c_k_lower(&self) -> f64 {
        self.c_k / self.k_norm
    }
}

pub fn cor6_wait_bounds(k: u32, dist: &Distribution) -> Result<WaitBounds> {
    if k < 1 {
        return Err(domain("load k must be at least 1"));
    }
    let kf = f64::from(k);
    let norm = k_norm(dist, kf)?;
    let m_star = kf / norm;
    Ok(WaitBounds {
        lower_expected: (kf / (kf + 1.0)) * m_star / E,
        upper_expected: m_star,
        c_k: c_k_constant(k),
        k_norm: norm,
    })
}

/// `c_k = (k!)^{1/k} Γ(1 + 1/k)`. Defined for every `k ≥ 1` (`c_1 = 1`).
pub fn c_k_constant(k: u32) -> f64 {
    let kf = f64::from(k.max(1));
    let ln_fact = libm::lgamma(kf + 1.0);
    (ln_fact / kf + libm::lgamma(1.0 + 1.0 / kf)).exp()
}

fn normalize_subset(subset: &[usize], bins: usize) -> Result<BTreeSet<usize>> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let set: BTreeSet<usize> = subset.iter().copied().collect();
    if let Some(&index) = set.iter().find(|&&i| i >= bins) {
        return Err(Error::Index { index, bins });
    }
    Ok(set)
}

/// The binomial and collision-count bounds for the maximum load over a subset of bins
/// (0-based indices), using the k-norm of the un-renormalized sub-vector.
pub fn restricted_sandwich(inst: &ProblemInstance, subset: &[usize]) -> Result<BoundPair> {
    let set = normalize_subset(subset, inst.dist.bin_count())?;
    if set.len() == inst.dist.bin_count() {
        return sandwich(inst);
    }
    let (k, kf) = load_of(inst);
    let w = inst.dist.weights();
    let ln_norm = ln_norm_of(set.iter().map(|&i| w[i]), kf);
    let upper = upper_from_ln_norm(inst.balls, k, ln_norm);
    let norm = ln_norm.exp().clamp(0.0, 1.0);
    let lower = binom_upper_tail(inst.balls, norm, i64::from(inst.load))?;
    checked_pair(
        lower,
        upper,
        BoundSource::RestrictedLower,
        BoundSource::RestrictedUpper,
    )
}

/// Sorted, deduplicated, range-checked subset.
pub fn subset_indices(subset: &[usize], bins: usize) -> Result<Vec<usize>> {
    Ok(normalize_subset(subset, bins)?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{rho, validate_distribution};
    use crate::oracle::exact_pr_max_geq;
    use proptest::prelude::*;

    fn inst(m: u64, k: u32, dist: Distribution) -> ProblemInstance {
        ProblemInstance::new(m, k, dist).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn theorem1_examples() {
        let u3 = Distribution::uniform(3).unwrap();
        let i = inst(3, 2, u3.clone());
        // C(3,2)/3 = 1 and Pr[Bino(3, 1/√3) ≥ 2].
        assert!(close(theorem1_upper(&i), 1.0, 1e-15));
        assert!(close(theorem1_lower(&i), 0.615_099_820_540_249_5, 1e-13));
        assert_eq!(theorem1_upper(&inst(1, 2, u3.clone())), 0.0);
        assert_eq!(theorem1_lower(&inst(0, 1, u3)), 0.0);
        let b = sandwich(&i).unwrap();
        assert!(b.contains(7.0 / 9.0, 0.0));
        assert_eq!(b.lower_source.label(), "theorem1");
        assert_eq!(b.upper_source.to_string(), "theorem1");
    }

    #[test]
    fn point_mass_is_certain() {
        let p = validate_distribution(&[0.0, 1.0]).unwrap();
        for k in 1..=5 {
            let b = sandwich(&inst(5, k, p.clone())).unwrap();
            assert!(close(b.lower, 1.0, 1e-15) && b.upper == 1.0);
        }
    }

    #[test]
    fn cor2_examples() {
        let up = cor2_upper(Rho(0.05), 2.0);
        assert_eq!(up.regime, Regime::Informative);
        assert!(close(up.value, 0.018_472_640_247_326_6, 1e-15));
        assert_eq!(cor2_upper(Rho(0.5), 2.0).regime, Regime::Vacuous);
        assert_eq!(cor2_upper(Rho(0.5), 2.0).value, 1.0);

        let lo = cor2_lower(Rho(E), 1.0);
        assert!(close(lo.value, 0.512_410_701_280_7, 1e-12));
        let lo = cor2_lower(Rho(10.0), 5.0);
        assert!(close(1.0 - lo.value, 2.8625e-15, 2.3e-16));
        assert_eq!(cor2_lower(Rho(1.0), 3.0).regime, Regime::Vacuous);
        assert_eq!(cor2_lower(Rho(0.2), 3.0).value, 0.0);
    }

    #[test]
    fn cor3_examples() {
        let t = cor3_thresholds(2.0, 0.01).unwrap();
        assert!(close(t.rho_upper, 0.1 / E, 1e-15));
        assert!(close(t.rho_lower, E * E, 1e-15));
        // 2 ln(1/δ) wins once δ is small enough.
        let t = cor3_thresholds(1.0, 1e-5).unwrap();
        assert!(close(t.rho_lower, 2.0 * 1e5f64.ln(), 1e-12));
        assert!(cor3_thresholds(2.0, 0.0).is_err());
        assert!(cor3_thresholds(2.0, 1.0).is_err());
        assert!(cor3_thresholds(0.5, 0.1).is_err());
    }

    #[test]
    fn solver_examples() {
        let k = solve_k_star(27, &Distribution::uniform(27).unwrap()).unwrap();
        assert!(close(k, 3.0, 1e-9));
        let one = Distribution::uniform(1).unwrap();
        assert_eq!(solve_k_star(7, &one).unwrap(), 7.0);
        let u100 = Distribution::uniform(100).unwrap();
        // m = n ln n with k = ln n gives n^{1/k} = e, so ρ = e there and the
        // true threshold sits above ln n.
        let m = 100.0 * 100f64.ln();
        let ln100 = 100f64.ln();
        let r_at_ln = m * k_norm(&u100, ln100).unwrap() / ln100;
        assert!(close(r_at_ln, E, 1e-12));
        let ks = solve_load_threshold(m, &u100).unwrap();
        assert!(ks > ln100);
        assert!(close(m * k_norm(&u100, ks).unwrap() / ks, 1.0, 1e-9));
        assert!(solve_k_star(0, &u100).is_err());
        assert_eq!(integer_brackets(2.5), (2, 3));
        assert_eq!(integer_brackets(0.3), (1, 1));
    }

    #[test]
    fn m_star_examples() {
        assert_eq!(
            m_star(2.0, &Distribution::uniform(100).unwrap()).unwrap(),
            20.0
        );
        let ms = m_star(2.0, &Distribution::uniform(365).unwrap()).unwrap();
        assert!(close(ms, 38.209_946_349_085_6, 1e-10));
    }

    #[test]
    fn cor4_cor5_examples() {
        let c = cor4_interval(27, &Distribution::uniform(27).unwrap(), 0.5).unwrap();
        assert!(close(c.k_high, 2.0 * E * 3.0, 1e-8));
        assert_eq!(c.k_low, 1.0);
        let b = cor5_interval(2, &Distribution::uniform(100).unwrap(), 0.1).unwrap();
        assert!(close(b.m_low, 2.0 / E, 1e-12));
        assert!(close(b.m_high, E * E * 20.0, 1e-10));
        assert!(close(b.m_low, 0.7358, 1e-4) && close(b.m_high, 147.78, 1e-2));
    }

    #[test]
    fn wait_bound_examples() {
        let w = cor6_wait_bounds(2, &Distribution::uniform(365).unwrap()).unwrap();
        assert!(close(w.lower_expected, 9.371_102_473_394_9, 1e-9));
        assert!(close(w.m_star(), 38.209_946_349_085_6, 1e-10));
        assert!(close(w.c_k_lower(), w.c_k * 365f64.sqrt(), 1e-9));
        assert!(w.lower_expected < w.c_k_lower() && w.c_k_lower() < w.upper_expected);
        assert!(cor6_wait_bounds(0, &Distribution::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn c_k_values() {
        assert_eq!(c_k_constant(1), 1.0);
        assert!(close(c_k_constant(2), 1.253_314_137_315_5, 1e-12));
        assert!(close(c_k_constant(3), 1.622_651_459_4, 1e-9));
        assert!(close(c_k_constant(10), 4.3084, 1e-4));
        for k in 1..=200 {
            let c = c_k_constant(k);
            assert!(c > f64::from(k) / E && c <= f64::from(k));
        }
    }

    #[test]
    fn restricted_examples() {
        let u4 = Distribution::uniform(4).unwrap();
        let i = inst(4, 2, u4.clone());
        let b = restricted_sandwich(&i, &[1, 2]).unwrap();
        assert!(close(b.lower, 0.443_321_609_4, 1e-9));
        assert!(close(b.upper, 0.75, 1e-15));
        assert!(b.contains(0.5, 0.0));
        assert_eq!(b.upper_source, BoundSource::RestrictedUpper);
        // The full subset is exactly the unrestricted sandwich.
        assert_eq!(
            restricted_sandwich(&i, &[3, 0, 2, 1, 1]).unwrap(),
            sandwich(&i).unwrap()
        );
        assert_eq!(restricted_sandwich(&i, &[]), Err(Error::EmptySubset));
        assert_eq!(
            restricted_sandwich(&i, &[4]),
            Err(Error::Index { index: 4, bins: 4 })
        );
        assert_eq!(subset_indices(&[2, 0, 2], 4).unwrap(), vec![0, 2]);
    }

    #[test]
    fn relaxations_are_ordered() {
        let d = Distribution::linear(6).unwrap();
        for m in 1..40u64 {
            for k in 1..=6u32 {
                let i = inst(m, k, d.clone());
                let b = sandwich(&i).unwrap();
                let r = i.rho();
                let exact = exact_pr_max_geq(&i).unwrap().probability;
                assert!(b.contains(exact, 1e-12));
                assert!(cor2_upper(r, f64::from(k)).value >= b.upper - 1e-15);
                assert!(cor2_lower(r, f64::from(k)).value <= b.lower + 1e-15);
            }
        }
    }

    fn arb_dist() -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.001f64..1.0, 1..12).prop_map(|w| validate_distribution(&w).unwrap())
    }

    proptest! {
        #[test]
        fn bounds_monotone_in_balls(d in arb_dist(), k in 1u32..6) {
            let mut prev = sandwich(&inst(0, k, d.clone())).unwrap();
            for m in 1..60u64 {
                let b = sandwich(&inst(m, k, d.clone())).unwrap();
                prop_assert!(b.lower >= prev.lower - 1e-14 && b.upper >= prev.upper - 1e-14);
                prop_assert!(b.lower <= b.upper);
                prev = b;
            }
        }

        #[test]
        fn solvers_hit_rho_one(d in arb_dist(), m in 1u64..5000, k in 1u32..30) {
            let ks = solve_k_star(m, &d).unwrap();
            prop_assert!((rho(m, ks, &d).unwrap().value() - 1.0).abs() <= 1e-9);
            let ms = m_star(f64::from(k), &d).unwrap();
            prop_assert!((ms * k_norm(&d, f64::from(k)).unwrap() / f64::from(k) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn restricted_never_exceeds_full(d in arb_dist(), m in 0u64..30, k in 1u32..5, mask in 1u32..4096) {
            let n = d.bin_count();
            let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            prop_assume!(!s.is_empty());
            let i = inst(m, k, d);
            let r = restricted_sandwich(&i, &s).unwrap();
            let f = sandwich(&i).unwrap();
            prop_assert!(r.upper <= f.upper + 1e-12 && r.lower <= f.lower + 1e-12);
        }
    }
}
