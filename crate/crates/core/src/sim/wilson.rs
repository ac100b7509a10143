use crate::error::{domain, Result};

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(domain("Wilson interval needs at least one trial"));
    }
    if successes > trials {
        return Err(domain(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(domain(format!("z must be positive, got {z}")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 {
        0.0
    } else {
        (center - half).clamp(0.0, p)
    };
    let high = if successes == trials {
        1.0
    } else {
        (center + half).clamp(p, 1.0)
    };
    Ok((low, high))
}

/// Two-sided standard normal quantile: the `z` with `Pr[|N(0,1)| ≤ z] = confidence`.
pub fn z_for_confidence(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(domain(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let target = 1.0 - confidence;
    // erfc(z/√2) is decreasing in z.
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid / std::f64::consts::SQRT_2) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
