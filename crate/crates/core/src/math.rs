//! Scalar primitives: distributions over bins, k-norms, ρ, log binomial
//! coefficients, binomial tails and the Bernoulli KL divergence.
//!
//! Anything that can underflow is evaluated in log space; results are
//! returned in linear space and clamped to `[0, 1]` where they are
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{clamp_unit, log_sum_exp, x_log_ratio, CompensatedSum};

/// Deviation from 1 tolerated by [`Distribution::from_probabilities`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A probability vector over `n ≥ 1` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    weights: Vec<f64>,
    deviation: f64,
}

/// Normalizes a vector of nonnegative weights into a [`Distribution`].
///
/// Any finite, nonnegative vector with positive mass is accepted; the
/// pre-normalization `|1 - Σw|` is kept as [`Distribution::normalization_deviation`].
pub fn validate_distribution(raw_weights: &[f64]) -> Result<Distribution> {
    if raw_weights.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    for (index, &w) in raw_weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { index, value: w });
        }
    }
    let sum = raw_weights
        .iter()
        .copied()
        .collect::<CompensatedSum>()
        .value();
    if sum == 0.0 {
        return Err(Error::ZeroMass);
    }
    let weights = if sum == 1.0 {
        raw_weights.to_vec()
    } else {
        raw_weights.iter().map(|w| w / sum).collect()
    };
    Ok(Distribution {
        weights,
        deviation: (1.0 - sum).abs(),
    })
}

impl Distribution {
    /// Strict constructor for vectors that are already probabilities: the
    /// sum must be within [`NORMALIZATION_TOLERANCE`] of 1.
    pub fn from_probabilities(raw: &[f64]) -> Result<Self> {
        let dist = validate_distribution(raw)?;
        if dist.deviation > NORMALIZATION_TOLERANCE {
            let sum = raw.iter().copied().collect::<CompensatedSum>().value();
            return Err(Error::NotNormalized { sum });
        }
        Ok(dist)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        validate_distribution(&vec![1.0; n])
    }

    /// Weights proportional to `1, 2, ..., n`.
    pub fn linear(n: usize) -> Result<Self> {
        let raw: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        validate_distribution(&raw)
    }

    /// Weights proportional to `i^{-s}` for `i = 1..n`.
    pub fn zipf(n: usize, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(domain(format!("zipf exponent must be finite, got {s}")));
        }
        let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
        validate_distribution(&raw)
    }

    /// Bypasses normalization; the caller guarantees a valid probability vector.
    pub(crate) fn from_normalized_unchecked(weights: Vec<f64>) -> Self {
        let sum = weights.iter().copied().collect::<CompensatedSum>().value();
        Self {
            weights,
            deviation: (1.0 - sum).abs(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bin_count(&self) -> usize {
        self.weights.len()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// `|1 - Σw|` of the raw input before normalization.
    pub fn normalization_deviation(&self) -> f64 {
        self.deviation
    }
}

/// Balls `m`, integer load threshold `k ≥ 1` and the bin distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub balls: u64,
    pub load: u32,
    pub dist: Distribution,
}

impl ProblemInstance {
    pub fn new(balls: u64, load: u32, dist: Distribution) -> Result<Self> {
        if load < 1 {
            return Err(domain("load threshold k must be at least 1"));
        }
        Ok(Self { balls, load, dist })
    }

    pub fn rho(&self) -> Rho {
        // load ≥ 1 is a constructor invariant.
        rho(self.balls, f64::from(self.load), &self.dist).expect("validated instance")
    }

    pub fn k_norm(&self) -> f64 {
        k_norm(&self.dist, f64::from(self.load)).expect("validated instance")
    }
}

/// `ρ = m ‖p‖_k / k`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Rho(pub f64);

impl Rho {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_norm_order(k: f64) -> Result<()> {
    if k.is_nan() || k < 1.0 || !k.is_finite() {
        return Err(domain(format!(
            "norm order k must be a finite real ≥ 1, got {k}"
        )));
    }
    Ok(())
}

/// `ln ‖w‖_k` for an arbitrary nonnegative vector (not necessarily summing to 1).
pub(crate) fn ln_norm_of<I>(weights: I, k: f64) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let logs: Vec<f64> = weights
        .into_iter()
        .filter(|&w| w > 0.0)
        .map(|w| k * w.ln())
        .collect();
    log_sum_exp(&logs) / k
}

/// `ln ‖p‖_k`, clamped so that `‖p‖_k ∈ [max p_i, 1]`.
pub fn ln_k_norm(dist: &Distribution, k: f64) -> Result<f64> {
    check_norm_order(k)?;
    if k == 1.0 {
        return Ok(0.0);
    }
    let raw = ln_norm_of(dist.weights.iter().copied(), k);
    Ok(raw.clamp(dist.max_weight().ln(), 0.0))
}

/// `‖p‖_k = (Σ p_i^k)^{1/k}` for real `k ≥ 1`.
pub fn k_norm(dist: &Distribution, k: f64) -> Result<f64> {
    if k == 1.0 {
        return Ok(1.0);
    }
    check_norm_order(k)?;
    let max = dist.max_weight();
    // Direct power sum when nothing can underflow: exact on round inputs
    // (uniform n = 100, k = 2 gives ‖p‖ = 0.1, not 0.1 - ulp).
    if k.fract() == 0.0 && k <= 64.0 && k * max.ln() > -600.0 {
        let sum: CompensatedSum = dist.weights.iter().map(|&w| w.powi(k as i32)).collect();
        let s = sum.value();
        if s.is_normal() {
            let v = if k == 2.0 { s.sqrt() } else { s.powf(1.0 / k) };
            return Ok(v.clamp(max, 1.0));
        }
    }
    let ln = ln_k_norm(dist, k)?;
    Ok(ln.exp().clamp(max, 1.0))
}

/// `ρ = m ‖p‖_k / k` for real `k ≥ 1`.
pub fn rho(balls: u64, k: f64, dist: &Distribution) -> Result<Rho> {
    let norm = k_norm(dist, k)?;
    Ok(Rho(balls as f64 * norm / k))
}

const STIRLING_DIRECT_LIMIT: u64 = 32;

/// Remainder of Stirling's series, `ln Γ(n+1) - (n+½)ln n + n - ½ ln 2π`,
/// for `n > 32`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n2 = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / n2) / n2) / n2) / n2) / n
}

/// `ln C(m, k)`; `-∞` when `k > m`.
pub fn log_binomial_coeff(m: u64, k: u64) -> f64 {
    if k > m {
        return f64::NEG_INFINITY;
    }
    let small = k.min(m - k);
    if small == 0 {
        return 0.0;
    }
    if small <= STIRLING_DIRECT_LIMIT {
        let base = (m - small) as f64;
        return (1..=small)
            .map(|i| ((base + i as f64) / i as f64).ln())
            .collect::<CompensatedSum>()
            .value();
    }
    let (mf, kf) = (m as f64, k as f64);
    let rest = mf - kf;
    let stirling = stirling_error(mf) - stirling_error(kf) - stirling_error(rest);
    // k ln(m/k) + (m-k) ln(m/(m-k)): both terms positive, no cancellation.
    let entropy = kf * (mf / kf).ln() - rest * (-kf / mf).ln_1p();
    let prefactor = 0.5 * (mf / (2.0 * std::f64::consts::PI * kf * rest)).ln();
    stirling + entropy + prefactor
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

fn log_binomial_pmf(m: u64, j: u64, ln_a: f64, ln_b: f64) -> f64 {
    log_binomial_coeff(m, j) + j as f64 * ln_a + (m - j) as f64 * ln_b
}

/// Terms below `exp(-TAIL_CUTOFF)` times the boundary term are dropped.
const TAIL_CUTOFF: f64 = 60.0;

/// Sums `exp(l_j)` over `js`, which must start at the largest term and walk
/// away from the mode.
fn sum_decreasing_log_terms(
    js: impl Iterator<Item = u64>,
    mut log_term: impl FnMut(u64) -> f64,
) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut lead = None;
    for j in js {
        let l = log_term(j);
        let l0 = *lead.get_or_insert(l);
        if l0 == f64::NEG_INFINITY {
            return 0.0;
        }
        let rel = l - l0;
        if rel < -TAIL_CUTOFF {
            break;
        }
        acc.add(rel.exp());
    }
    match lead {
        Some(l0) => (l0 + acc.value().ln()).exp(),
        None => 0.0,
    }
}

/// `Pr[Bino(m, α) ≥ k]`.
///
/// The smaller tail is summed in log space starting from its largest term,
/// so the result keeps full relative precision when it is tiny.
pub fn binom_upper_tail(m: u64, alpha: f64, k: i64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    if k <= 0 {
        return Ok(1.0);
    }
    let k = k as u64;
    if k > m {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    if alpha == 1.0 {
        return Ok(1.0);
    }
    let ln_a = alpha.ln();
    let ln_b = (-alpha).ln_1p();
    let mean = m as f64 * alpha;
    let term = |j| log_binomial_pmf(m, j, ln_a, ln_b);
    let p = if k as f64 > mean {
        sum_decreasing_log_terms(k..=m, term)
    } else {
        1.0 - sum_decreasing_log_terms((0..k).rev(), term)
    };
    Ok(clamp_unit(p))
}

/// `Pr[Bino(m, α) ≤ t]` through the negative-binomial rewrite
/// `(1-α)^{m-t} Σ_{j≤t} C(m-t-1+j, j) α^j`, for `0 ≤ t ≤ m-1`.
pub fn binom_cdf_negative_form(m: u64, alpha: f64, t: u64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    if m == 0 || t > m - 1 {
        return Err(domain(format!("t must lie in [0, m-1]; got t={t}, m={m}")));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    let tails = m - t;
    let ln_a = alpha.ln();
    let lead = tails as f64 * (-alpha).ln_1p();
    let logs: Vec<f64> = (0..=t)
        .map(|j| lead + log_binomial_coeff(tails - 1 + j, j) + j as f64 * ln_a)
        .collect();
    Ok(clamp_unit(log_sum_exp(&logs).exp()))
}

/// Bernoulli KL divergence `D(a ‖ b) = a ln(a/b) + (1-a) ln((1-a)/(1-b))`.
pub fn kl_bernoulli(a: f64, b: f64) -> Result<f64> {
    check_probability("a", a)?;
    check_probability("b", b)?;
    if a == b {
        return Ok(0.0);
    }
    if b == 0.0 || b == 1.0 {
        return Err(domain(format!("D({a} ‖ {b}) is infinite")));
    }
    Ok((x_log_ratio(a, b) + x_log_ratio(1.0 - a, 1.0 - b)).max(0.0))
}
