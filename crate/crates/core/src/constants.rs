//! Explicit constants and elementary inequalities.

use crate::error::{Error, Result};

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("exponent p must exceed 1, got {p}")))
    }
}

/// `φ_p(y) = |y|^{p−1} sgn(y)`, with `φ_p(0) = 0`.
pub fn phi_p(y: f64, p: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y.abs().powf(p - 1.0) * y.signum()
    }
}

/// Burkholder constant `C*_p = (max(p/2, p/(p−2) − 1))^p` for `p > 2`, and 2 at `p = 2`.
pub fn burkholder_constant(p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(Error::Domain(format!("Burkholder constant needs p >= 2, got {p}")));
    }
    if p == 2.0 {
        return Ok(2.0);
    }
    Ok((p / 2.0).max(p / (p - 2.0) - 1.0).powf(p))
}

/// The other reading of the same expression, `(max(p/2, p/(p−2)) − 1)^p`.
pub fn burkholder_constant_alt(p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(Error::Domain(format!("Burkholder constant needs p >= 2, got {p}")));
    }
    if p == 2.0 {
        return Ok(2.0);
    }
    Ok(((p / 2.0).max(p / (p - 2.0)) - 1.0).powf(p))
}

/// Meyer's constant `C'_p`.
///
/// For `p > 2` it is the minimum over integers `2 <= k < p` of
/// `(p Π_{j=2..k} pj/(p−j))^{k/(p−1)}`; for `p ∈ (1, 2]` it is
/// `(p²/(p−1))^{1/(p−1)}`.
pub fn c_prime(p: f64) -> Result<f64> {
    check_p(p)?;
    if p <= 2.0 {
        return Ok((p * p / (p - 1.0)).powf(1.0 / (p - 1.0)));
    }
    let mut best = f64::INFINITY;
    let mut prod = p;
    let mut k = 2usize;
    while (k as f64) < p {
        let kf = k as f64;
        prod *= p * kf / (p - kf);
        best = best.min(prod.powf(kf / (p - 1.0)));
        k += 1;
    }
    Ok(best)
}

/// `C'_p (1 + p/(p−1))`, the bound for right-continuous supermartingales.
pub fn meyer_constant(p: f64) -> Result<f64> {
    Ok(c_prime(p)? * (1.0 + p / (p - 1.0)))
}

/// Bound for `‖A‖ + ‖I‖` of a làdlàg strong supermartingale: the `A` part
/// `C'_p(1+q)(1+C''_p)` plus the `I` part `C''_p(1+q)`, with
/// `C''_p = C'_p(1+q)` and `q = p/(p−1)`.
pub fn ladlag_meyer_constant(p: f64) -> Result<f64> {
    let q = p / (p - 1.0);
    let c = c_prime(p)?;
    let c2 = c * (1.0 + q);
    Ok(c * (1.0 + q) * (1.0 + c2) + c2 * (1.0 + q))
}

/// `(1 ∧ n^{ℓ−1})`.
pub fn power_lower_constant(n: usize, l: f64) -> f64 {
    (n as f64).powf(l - 1.0).min(1.0)
}

/// `(1 ∨ n^{ℓ−1})`.
pub fn power_upper_constant(n: usize, l: f64) -> f64 {
    (n as f64).powf(l - 1.0).max(1.0)
}

/// `((1∧n^{ℓ−1}) Σ a_i^ℓ, (Σ a_i)^ℓ, (1∨n^{ℓ−1}) Σ a_i^ℓ)`.
pub fn power_sum_bounds(values: &[f64], l: f64) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Domain("power sum of an empty list".into()));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Domain(format!("power sum exponent must be positive, got {l}")));
    }
    if let Some(a) = values.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Domain(format!("power sum entries must be positive, got {a}")));
    }
    let n = values.len();
    let sum_pow: f64 = values.iter().map(|a| a.powf(l)).sum();
    let middle = values.iter().sum::<f64>().powf(l);
    Ok((
        power_lower_constant(n, l) * sum_pow,
        middle,
        power_upper_constant(n, l) * sum_pow,
    ))
}

/// Young's inequality `ab <= β a^p + b^q / (q (βp)^{q/p})`; returns both sides.
pub fn young_bound(a: f64, b: f64, beta: f64, p: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("Young's inequality needs a, b >= 0, got ({a}, {b})")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("Young's inequality needs beta > 0, got {beta}")));
    }
    let q = p / (p - 1.0);
    let rhs = beta * a.powf(p) + b.powf(q) / (q * (beta * p).powf(q / p));
    Ok((a * b, rhs))
}
