//! Exact ground truth for small instances.
//!
//! Two independent routes to `Pr[M ≥ k]`:
//!
//! * [`exact_pr_max_geq`]: `Pr[all loads < k] = m! [x^m] Π_i q_k(p_i x)` with
//!   `q_k(t) = Σ_{i<k} t^i / i!`, assembled in high-precision floating point;
//! * [`enumerate_small`]: a depth-first walk over every placement of the
//!   balls.
//!
//! plus the pairwise collapse used in the lower-bound argument and the
//! integral representation of `E[W]` (see [`wait`]).

pub mod hifloat;
pub mod wait;

use std::collections::BTreeSet;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::bounds::subset_indices;
use crate::error::{domain, Error, Result};
use crate::math::{ln_norm_of, Distribution, ProblemInstance};
use crate::numeric::CompensatedSum;
use hifloat::HiFloat;

pub use wait::expected_wait_quadrature;

/// Largest ball count accepted by the generating-function oracle.
pub const EGF_MAX_BALLS: u64 = 200;
/// Largest bin count accepted by the generating-function oracle.
pub const EGF_MAX_BINS: usize = 10_000;
/// Largest number of placements `n^m` the enumerator will walk.
pub const ENUMERATION_MAX_OUTCOMES: u64 = 10_000_000;

/// Working precision of the first EGF pass, in bits.
pub const BASE_PRECISION: u32 = 192;
const MAX_PRECISION: u32 = 3072;
/// Bits of the complement `1 - Pr[all < k]` that must survive cancellation
/// before a result is accepted. Covers the accumulated truncation error of
/// up to ~2^40 operations with a 53-bit margin.
const REQUIRED_SURVIVING_BITS: u32 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactMethod {
    Egf,
    Enumeration,
}

impl ExactMethod {
    pub fn label(self) -> &'static str {
        match self {
            Self::Egf => "egf",
            Self::Enumeration => "enumeration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub probability: f64,
    pub method: ExactMethod,
    /// Mantissa width used by the EGF route; 53 for enumeration.
    pub precision_bits: u32,
}

/// Exponential-generating-function polynomial in scaled form:
/// `coeffs[j] = j! · [x^j] P(x)`, truncated at degree `m`.
///
/// Products are binomial convolutions, `c_j = Σ_l C(j,l) a_l b_{j-l}`, which
/// keep every coefficient in `[0, 1]` for sub-probability factors.
#[derive(Debug, Clone)]
pub struct LoadPolynomial {
    coeffs: Vec<HiFloat>,
}

struct EgfContext {
    degree: usize,
    prec: u32,
    /// Row `j` holds `C(j, 0..=j)`.
    binomials: Vec<Vec<BigUint>>,
}

impl EgfContext {
    fn new(degree: usize, prec: u32) -> Self {
        let mut binomials: Vec<Vec<BigUint>> = Vec::with_capacity(degree + 1);
        for j in 0..=degree {
            let mut row = Vec::with_capacity(j + 1);
            for l in 0..=j {
                if l == 0 || l == j {
                    row.push(BigUint::from(1u8));
                } else {
                    let prev = &binomials[j - 1];
                    row.push(&prev[l - 1] + &prev[l]);
                }
            }
            binomials.push(row);
        }
        Self {
            degree,
            prec,
            binomials,
        }
    }

    /// `Σ_{l ≤ cap} (p x)^l / l!` in scaled form: coefficients `p^l`.
    fn single_bin(&self, p: &HiFloat, cap: usize) -> LoadPolynomial {
        let top = cap.min(self.degree);
        let mut coeffs = Vec::with_capacity(top + 1);
        let mut pow = HiFloat::one();
        for _ in 0..=top {
            coeffs.push(pow.clone());
            pow = pow.mul(p, self.prec);
        }
        LoadPolynomial { coeffs }
    }

    fn multiply(&self, a: &LoadPolynomial, b: &LoadPolynomial) -> LoadPolynomial {
        let len = (a.coeffs.len() + b.coeffs.len() - 1).min(self.degree + 1);
        let mut out = Vec::with_capacity(len);
        for j in 0..len {
            let mut acc = HiFloat::zero();
            let l_min = j.saturating_sub(b.coeffs.len() - 1);
            let l_max = j.min(a.coeffs.len() - 1);
            for l in l_min..=l_max {
                let (x, y) = (&a.coeffs[l], &b.coeffs[j - l]);
                if x.is_zero() || y.is_zero() {
                    continue;
                }
                let term = x
                    .mul(y, self.prec)
                    .mul_int(&self.binomials[j][l], self.prec);
                acc = acc.add(&term, self.prec);
            }
            out.push(acc);
        }
        LoadPolynomial { coeffs: out }
    }

    fn power(&self, base: &LoadPolynomial, mut exp: usize) -> LoadPolynomial {
        let mut result = LoadPolynomial {
            coeffs: vec![HiFloat::one()],
        };
        let mut sq = base.clone();
        while exp > 0 {
            if exp & 1 == 1 {
                result = self.multiply(&result, &sq);
            }
            exp >>= 1;
            if exp > 0 {
                sq = self.multiply(&sq, &sq);
            }
        }
        result
    }
}

impl LoadPolynomial {
    /// Scaled coefficient `j! [x^j]`, or zero beyond the stored degree.
    pub fn scaled_coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).map_or(0.0, HiFloat::to_f64)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// One factor of the product: a bin weight and the highest load it may take
/// (`k - 1` for constrained bins, `m` for unconstrained ones).
#[derive(Debug, Clone, Copy)]
struct Factor {
    weight: f64,
    cap: usize,
}

/// `m! [x^m] Π_i F_i(x)` with each bin's weight renormalized in high precision
/// so that the weights sum to exactly one at working precision.
///
/// Unconstrained bins are merged into a single `e^{c x}` factor with `c` their
/// total weight, which has the same coefficients as the product of their
/// individual exponentials.
fn egf_all_below(
    factors: &[Factor],
    total: &HiFloat,
    m: usize,
    prec: u32,
) -> (HiFloat, LoadPolynomial) {
    let ctx = EgfContext::new(m, prec);
    // Group constrained bins with bit-identical weights so uniform
    // distributions cost O(log n) multiplications.
    let mut groups: Vec<(u64, usize, usize)> = Vec::new();
    let mut free_mass = HiFloat::zero();
    for f in factors {
        if f.weight == 0.0 {
            continue;
        }
        if f.cap >= m {
            free_mass = free_mass.add(&HiFloat::from_f64(f.weight), prec);
            continue;
        }
        let bits = f.weight.to_bits();
        match groups
            .iter_mut()
            .find(|(b, c, _)| *b == bits && *c == f.cap)
        {
            Some(g) => g.2 += 1,
            None => groups.push((bits, f.cap, 1)),
        }
    }
    let mut acc = LoadPolynomial {
        coeffs: vec![HiFloat::one()],
    };
    for &(bits, cap, count) in &groups {
        let p = HiFloat::from_f64(f64::from_bits(bits)).div(total, prec);
        let single = ctx.single_bin(&p, cap);
        acc = ctx.multiply(&acc, &ctx.power(&single, count));
    }
    if !free_mass.is_zero() {
        let c = free_mass.div(total, prec);
        acc = ctx.multiply(&acc, &ctx.single_bin(&c, m));
    }
    let top = acc.coeffs.get(m).cloned().unwrap_or_else(HiFloat::zero);
    (top, acc)
}

fn check_egf_limits(inst: &ProblemInstance) -> Result<()> {
    if inst.balls > EGF_MAX_BALLS {
        return Err(Error::TooLarge(format!(
            "m = {} exceeds the oracle limit {EGF_MAX_BALLS}",
            inst.balls
        )));
    }
    if inst.dist.bin_count() > EGF_MAX_BINS {
        return Err(Error::TooLarge(format!(
            "n = {} exceeds the oracle limit {EGF_MAX_BINS}",
            inst.dist.bin_count()
        )));
    }
    Ok(())
}

fn egf_probability(inst: &ProblemInstance, constrained: &BTreeSet<usize>) -> ExactResult {
    let m = inst.balls as usize;
    let k = inst.load as usize;
    let weights = inst.dist.weights();
    let factors: Vec<Factor> = weights
        .iter()
        .enumerate()
        .map(|(i, &weight)| Factor {
            weight,
            cap: if constrained.contains(&i) { k - 1 } else { m },
        })
        .collect();
    let mut prec = BASE_PRECISION;
    loop {
        let total = weights.iter().fold(HiFloat::zero(), |acc, &w| {
            acc.add(&HiFloat::from_f64(w), prec)
        });
        let (below, _) = egf_all_below(&factors, &total, m, prec);
        let one = HiFloat::one();
        let complement = if below.cmp_value(&one).is_lt() {
            one.sub(&below, prec)
        } else {
            HiFloat::zero()
        };
        let surviving = complement.log2() + f64::from(prec);
        if surviving >= f64::from(REQUIRED_SURVIVING_BITS) || prec >= MAX_PRECISION {
            return ExactResult {
                probability: complement.to_f64().clamp(0.0, 1.0),
                method: ExactMethod::Egf,
                precision_bits: prec,
            };
        }
        prec *= 2;
    }
}

/// Exact `Pr[M ≥ k]` from the generating function `Π_i q_k(p_i x)`.
///
/// Working precision starts at [`BASE_PRECISION`] bits and doubles while the
/// final `1 - Pr[all < k]` loses too many bits to cancellation.
pub fn exact_pr_max_geq(inst: &ProblemInstance) -> Result<ExactResult> {
    check_egf_limits(inst)?;
    if inst.balls < u64::from(inst.load) {
        return Ok(ExactResult {
            probability: 0.0,
            method: ExactMethod::Egf,
            precision_bits: BASE_PRECISION,
        });
    }
    let all: BTreeSet<usize> = (0..inst.dist.bin_count()).collect();
    Ok(egf_probability(inst, &all))
}

/// Exact `Pr[max load over the subset ≥ k]` (0-based bin indices). Bins
/// outside the subset contribute their full exponential series.
pub fn exact_restricted(inst: &ProblemInstance, subset: &[usize]) -> Result<ExactResult> {
    let set: BTreeSet<usize> = subset_indices(subset, inst.dist.bin_count())?
        .into_iter()
        .collect();
    check_egf_limits(inst)?;
    if inst.balls < u64::from(inst.load) {
        return Ok(ExactResult {
            probability: 0.0,
            method: ExactMethod::Egf,
            precision_bits: BASE_PRECISION,
        });
    }
    Ok(egf_probability(inst, &set))
}

/// The scaled EGF of `Π_i q_k(p_i x)` truncated at degree `m`, for callers
/// that want the whole law of "all loads below k" as a function of `m`.
pub fn load_polynomial(inst: &ProblemInstance) -> Result<LoadPolynomial> {
    check_egf_limits(inst)?;
    let k = inst.load as usize;
    let m = inst.balls as usize;
    let factors: Vec<Factor> = inst
        .dist
        .weights()
        .iter()
        .map(|&weight| Factor { weight, cap: k - 1 })
        .collect();
    let total = inst.dist.weights().iter().fold(HiFloat::zero(), |acc, &w| {
        acc.add(&HiFloat::from_f64(w), BASE_PRECISION)
    });
    Ok(egf_all_below(&factors, &total, m, BASE_PRECISION).1)
}

fn check_enumeration_limits(n: usize, m: u64) -> Result<()> {
    let outcomes = u32::try_from(m)
        .ok()
        .and_then(|m| (n as u64).checked_pow(m))
        .filter(|&o| o <= ENUMERATION_MAX_OUTCOMES);
    match outcomes {
        Some(_) => Ok(()),
        None => Err(Error::TooLarge(format!(
            "n^m = {n}^{m} exceeds {ENUMERATION_MAX_OUTCOMES} placements"
        ))),
    }
}

struct Walker<'a> {
    weights: &'a [f64],
    watched: &'a [bool],
    load: u32,
    loads: Vec<u32>,
    hit: CompensatedSum,
}

impl Walker<'_> {
    /// Places `remaining` more balls. Once a watched bin reaches the
    /// threshold every completion of the placement is a hit, and their
    /// probabilities sum to the prefix probability.
    fn walk(&mut self, remaining: u64, prob: f64) {
        if remaining == 0 {
            return;
        }
        for i in 0..self.weights.len() {
            let p = self.weights[i];
            if p == 0.0 {
                continue;
            }
            let next = prob * p;
            self.loads[i] += 1;
            if self.watched[i] && self.loads[i] >= self.load {
                self.hit.add(next);
            } else {
                self.walk(remaining - 1, next);
            }
            self.loads[i] -= 1;
        }
    }
}

fn enumerate_with(inst: &ProblemInstance, watched: Vec<bool>) -> Result<ExactResult> {
    check_enumeration_limits(inst.dist.bin_count(), inst.balls)?;
    let mut walker = Walker {
        weights: inst.dist.weights(),
        watched: &watched,
        load: inst.load,
        loads: vec![0; inst.dist.bin_count()],
        hit: CompensatedSum::new(),
    };
    walker.walk(inst.balls, 1.0);
    Ok(ExactResult {
        probability: walker.hit.value().clamp(0.0, 1.0),
        method: ExactMethod::Enumeration,
        precision_bits: f64::MANTISSA_DIGITS,
    })
}

/// `Pr[M ≥ k]` by walking all `n^m` ball placements.
pub fn enumerate_small(inst: &ProblemInstance) -> Result<ExactResult> {
    enumerate_with(inst, vec![true; inst.dist.bin_count()])
}

/// Enumeration counterpart of [`exact_restricted`].
pub fn enumerate_restricted(inst: &ProblemInstance, subset: &[usize]) -> Result<ExactResult> {
    let n = inst.dist.bin_count();
    let mut watched = vec![false; n];
    for i in subset_indices(subset, n)? {
        watched[i] = true;
    }
    enumerate_with(inst, watched)
}

/// Replaces bins `j` and `j + 1` (0-based) by
/// `(q_j + q_{j+1} - ‖(q_j, q_{j+1})‖_k, ‖(q_j, q_{j+1})‖_k)`.
///
/// The second bin receives the pair's k-norm, which is at least the larger
/// of the two weights; the pair's total mass is unchanged.
pub fn lemma_collapse_step(q: &Distribution, j: usize, k: u32) -> Result<Distribution> {
    let n = q.bin_count();
    if j + 1 >= n {
        return Err(Error::Index {
            index: j + 1,
            bins: n,
        });
    }
    if k < 1 {
        return Err(domain("load k must be at least 1"));
    }
    let mut w = q.weights().to_vec();
    let (a, b) = (w[j], w[j + 1]);
    let pair = a + b;
    let norm = if pair == 0.0 {
        0.0
    } else {
        ln_norm_of([a, b], f64::from(k)).exp().clamp(a.max(b), pair)
    };
    w[j] = (pair - norm).max(0.0);
    w[j + 1] = norm;
    Ok(Distribution::from_normalized_unchecked(w))
}

/// Runs [`lemma_collapse_step`] for `j = 0, 1, ..., n - 2`; the last bin ends
/// with mass `‖p‖_k`.
pub fn collapse_chain(p: &Distribution, k: u32) -> Result<Distribution> {
    let mut q = p.clone();
    for j in 0..p.bin_count().saturating_sub(1) {
        q = lemma_collapse_step(&q, j, k)?;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{k_norm, validate_distribution};

    fn inst(w: &[f64], m: u64, k: u32) -> ProblemInstance {
        ProblemInstance::new(m, k, validate_distribution(w).unwrap()).unwrap()
    }

    fn uniform(n: usize, m: u64, k: u32) -> ProblemInstance {
        ProblemInstance::new(m, k, Distribution::uniform(n).unwrap()).unwrap()
    }

    #[test]
    fn egf_examples() {
        let r = exact_pr_max_geq(&uniform(3, 3, 2)).unwrap();
        assert!((r.probability - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.method, ExactMethod::Egf);
        assert!(r.precision_bits >= 166);
        assert_eq!(
            exact_pr_max_geq(&uniform(5, 3, 4)).unwrap().probability,
            0.0
        );
        assert_eq!(
            exact_pr_max_geq(&uniform(1, 4, 4)).unwrap().probability,
            1.0
        );
    }

    #[test]
    fn enumeration_examples() {
        let r = enumerate_small(&uniform(2, 2, 2)).unwrap();
        assert!((r.probability - 0.5).abs() < 1e-15);
        assert_eq!(r.method, ExactMethod::Enumeration);
        assert_eq!(
            enumerate_small(&inst(&[1.0, 0.0], 3, 3))
                .unwrap()
                .probability,
            1.0
        );
        let r = enumerate_small(&uniform(4, 4, 2)).unwrap();
        assert!((r.probability - 232.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn limits_are_enforced() {
        assert!(matches!(
            exact_pr_max_geq(&uniform(3, 201, 2)),
            Err(Error::TooLarge(_))
        ));
        assert!(matches!(
            exact_pr_max_geq(&uniform(10_001, 3, 2)),
            Err(Error::TooLarge(_))
        ));
        assert!(matches!(
            enumerate_small(&uniform(10, 8, 2)),
            Err(Error::TooLarge(_))
        ));
        assert!(enumerate_small(&uniform(10, 7, 2)).is_ok());
    }

    #[test]
    fn egf_agrees_with_enumeration() {
        let dists: Vec<Vec<f64>> = vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.9, 0.05, 0.05],
            vec![0.1, 0.0, 0.6, 0.3],
            vec![0.37, 0.21, 0.11, 0.2, 0.11],
        ];
        for w in &dists {
            for m in 0..=7u64 {
                for k in 1..=5u32 {
                    let i = inst(w, m, k);
                    let a = exact_pr_max_geq(&i).unwrap().probability;
                    let b = enumerate_small(&i).unwrap().probability;
                    assert!((a - b).abs() <= 1e-12, "{w:?} m={m} k={k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn restricted_examples() {
        let i = uniform(4, 4, 2);
        let r = exact_restricted(&i, &[0, 1]).unwrap().probability;
        assert!((r - 0.5).abs() < 1e-15, "{r}");
        let e = enumerate_restricted(&i, &[0, 1]).unwrap().probability;
        assert!((e - 0.5).abs() < 1e-15);
        let full = exact_restricted(&i, &[3, 2, 1, 0]).unwrap();
        assert_eq!(full.probability, exact_pr_max_geq(&i).unwrap().probability);
        assert_eq!(exact_restricted(&i, &[]), Err(Error::EmptySubset));
        assert!(matches!(
            exact_restricted(&i, &[4]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn single_bin_subset_is_binomial() {
        let i = inst(&[0.3, 0.5, 0.2], 9, 3);
        let r = exact_restricted(&i, &[0]).unwrap().probability;
        let b = crate::math::binom_upper_tail(9, 0.3, 3).unwrap();
        assert!((r - b).abs() < 1e-12);
    }

    #[test]
    fn precision_escalates_for_tiny_probabilities() {
        // Pr[M ≥ 2] for two balls in 10^4 bins is 1e-4; deep in the tail
        // with k = m the probability is n^{1-m}.
        let i = uniform(10, 12, 12);
        let r = exact_pr_max_geq(&i).unwrap();
        let want = 10f64.powi(-11);
        assert!(
            (r.probability / want - 1.0).abs() < 1e-12,
            "{}",
            r.probability
        );
        let i = uniform(100, 40, 40);
        let r = exact_pr_max_geq(&i).unwrap();
        assert!(r.precision_bits > BASE_PRECISION);
        let want = (-39.0 * 100f64.ln()).exp();
        assert!((r.probability / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn load_polynomial_is_a_law() {
        let i = uniform(3, 6, 2);
        let poly = load_polynomial(&i).unwrap();
        assert_eq!(poly.degree(), 3);
        assert_eq!(poly.scaled_coeff(0), 1.0);
        assert!((poly.scaled_coeff(3) - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(poly.scaled_coeff(4), 0.0);
    }

    #[test]
    fn collapse_examples() {
        let q = validate_distribution(&[0.5, 0.5]).unwrap();
        let c = lemma_collapse_step(&q, 0, 2).unwrap();
        let r = 0.5f64.sqrt();
        assert!((c.weights()[1] - r).abs() < 1e-15);
        assert!((c.weights()[0] - (1.0 - r)).abs() < 1e-15);

        let q = validate_distribution(&[0.2, 0.5, 0.0, 0.3]).unwrap();
        let c = lemma_collapse_step(&q, 1, 3).unwrap();
        assert_eq!(c.weights(), &[0.2, 0.0, 0.5, 0.3]);

        assert!(matches!(
            lemma_collapse_step(&q, 3, 2),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn collapse_chain_ends_at_k_norm() {
        let p = validate_distribution(&[0.1, 0.4, 0.2, 0.25, 0.05]).unwrap();
        for k in 1..=6u32 {
            let q = collapse_chain(&p, k).unwrap();
            let last = *q.weights().last().unwrap();
            assert!((last - k_norm(&p, f64::from(k)).unwrap()).abs() < 1e-12);
            let s: f64 = q.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
