//! Nonnegative binary floating point with a configurable mantissa width.
//!
//! Only what the generating-function oracle needs: addition and
//! multiplication of nonnegative values, multiplication by exact integers,
//! division, and subtraction `a - b` for `a ≥ b`. Every operation truncates
//! the mantissa to `prec` bits, so each result carries a relative error
//! below `2^{1-prec}`.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

/// `mant · 2^exp`, with `mant` holding at most `prec` significant bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiFloat {
    mant: BigUint,
    exp: i64,
}

impl HiFloat {
    pub fn zero() -> Self {
        Self {
            mant: BigUint::zero(),
            exp: 0,
        }
    }

    pub fn one() -> Self {
        Self {
            mant: BigUint::from(1u8),
            exp: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    /// Exact conversion of a finite nonnegative `f64`.
    pub fn from_f64(x: f64) -> Self {
        assert!(
            x.is_finite() && x >= 0.0,
            "HiFloat::from_f64 needs a finite nonnegative value"
        );
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        Self {
            mant: BigUint::from(mant),
            exp,
        }
    }

    pub fn from_biguint(n: BigUint) -> Self {
        Self { mant: n, exp: 0 }
    }

    fn normalized(mut mant: BigUint, mut exp: i64, prec: u32) -> Self {
        if mant.is_zero() {
            return Self::zero();
        }
        let bits = mant.bits();
        if bits > u64::from(prec) {
            let shift = bits - u64::from(prec);
            mant >>= shift;
            exp += shift as i64;
        }
        Self { mant, exp }
    }

    pub fn mul(&self, other: &Self, prec: u32) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        Self::normalized(&self.mant * &other.mant, self.exp + other.exp, prec)
    }

    pub fn mul_int(&self, n: &BigUint, prec: u32) -> Self {
        Self::normalized(&self.mant * n, self.exp, prec)
    }

    /// Highest set bit position, i.e. `floor(log2(self))`.
    fn top_bit(&self) -> i64 {
        self.mant.bits() as i64 - 1 + self.exp
    }

    pub fn add(&self, other: &Self, prec: u32) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let (hi, lo) = if self.top_bit() >= other.top_bit() {
            (self, other)
        } else {
            (other, self)
        };
        // Bits of `lo` that land more than prec+2 places below the leading
        // bit of `hi` cannot change the truncated result.
        let floor = hi.top_bit() - i64::from(prec) - 2;
        if lo.top_bit() < floor {
            return hi.clone();
        }
        let base = hi.exp.min(lo.exp).max(floor.min(hi.exp));
        let align = |v: &Self| -> BigUint {
            if v.exp >= base {
                &v.mant << (v.exp - base) as u64
            } else {
                &v.mant >> (base - v.exp) as u64
            }
        };
        Self::normalized(align(hi) + align(lo), base, prec)
    }

    /// `self - other`, requiring `self ≥ other`. Exact before the final
    /// truncation.
    pub fn sub(&self, other: &Self, prec: u32) -> Self {
        assert!(
            self.cmp_value(other) != Ordering::Less,
            "HiFloat::sub underflow"
        );
        if other.is_zero() {
            return self.clone();
        }
        let base = self.exp.min(other.exp);
        let a = &self.mant << (self.exp - base) as u64;
        let b = &other.mant << (other.exp - base) as u64;
        Self::normalized(a - b, base, prec)
    }

    /// `self / other` truncated to `prec` bits.
    pub fn div(&self, other: &Self, prec: u32) -> Self {
        assert!(!other.is_zero(), "HiFloat::div by zero");
        if self.is_zero() {
            return Self::zero();
        }
        let shift = u64::from(prec) + other.mant.bits() + 1;
        let q = (&self.mant << shift) / &other.mant;
        Self::normalized(q, self.exp - other.exp - shift as i64, prec)
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        match self.top_bit().cmp(&other.top_bit()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let base = self.exp.min(other.exp);
        let a = &self.mant << (self.exp - base) as u64;
        let b = &other.mant << (other.exp - base) as u64;
        a.cmp(&b)
    }

    /// `log2(self)`, `-inf` for zero.
    pub fn log2(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.mant.bits();
        let keep = bits.min(64);
        let top = (&self.mant >> (bits - keep)).to_u64().expect("fits") as f64;
        top.log2() + (self.exp + (bits - keep) as i64) as f64
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mant.bits();
        // Keep 64 leading bits; the conversion to f64 rounds once more.
        let keep = bits.min(64);
        let top = (&self.mant >> (bits - keep)).to_u64().expect("fits");
        let scale = self.exp + (bits - keep) as i64;
        let mut v = top as f64;
        // Apply the power of two in steps that stay within f64 exponent range.
        let mut e = scale;
        while e > 0 {
            let step = e.min(1000);
            v *= 2f64.powi(step as i32);
            e -= step;
        }
        while e < 0 {
            let step = (-e).min(1000);
            v /= 2f64.powi(step as i32);
            e += step;
        }
        v
    }
}
