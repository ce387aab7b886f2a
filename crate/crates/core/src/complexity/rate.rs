//! Large-deviation rate of the top eigenvalue of a GOE with edge `E`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionValue {
    pub u: f64,
    #[serde(rename = "E")]
    pub e: f64,
    /// `+∞` strictly inside the bulk.
    pub value: f64,
}

/// `I₁(u; E) = (2/E²) ∫_E^{|u|} √(z² − E²) dz`, in closed form
/// `(|u|/E²)·√(u² − E²) − acosh(|u|/E)`.
pub fn rate_i1(u: f64, e: f64) -> Result<RateFunctionValue> {
    if !(e > 0.0 && e.is_finite()) {
        return domain(format!("rate function edge must be positive, got {e}"));
    }
    if u.is_nan() {
        return domain("rate function argument is NaN");
    }
    let a = u.abs() / e;
    let value = if a < 1.0 {
        f64::INFINITY
    } else if a == 1.0 {
        0.0
    } else {
        // √(a² − 1) as √((a−1)(a+1)) keeps precision just outside the edge
        let root = ((a - 1.0) * (a + 1.0)).sqrt();
        a * root - (a + root).ln()
    };
    Ok(RateFunctionValue { u, e, value })
}

/// Penalty `k·w·I₁(u; E)` with the convention `0·∞ = 0`.
pub(crate) fn penalty(k: u32, weight: f64, u: f64, e: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    match rate_i1(u, e) {
        Ok(r) => f64::from(k) * weight * r.value,
        Err(_) => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss16;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::SQRT_2;

    /// `(2/E²)∫_E^{|u|} √(z²−E²) dz` with `z = E cosh s`, composite Gauss.
    fn quadrature(u: f64, e: f64) -> f64 {
        let top = (u.abs() / e).acosh();
        let panels = 64;
        let mut total = 0.0;
        for k in 0..panels {
            let (a, b) = (top * k as f64 / panels as f64, top * (k + 1) as f64 / panels as f64);
            total += gauss16()
                .nodes_on(a, b)
                .map(|(s, w)| w * e * e * s.sinh().powi(2))
                .sum::<f64>();
        }
        2.0 * total / (e * e)
    }

    #[test]
    fn edge_and_bulk() {
        assert_eq!(rate_i1(SQRT_2, SQRT_2).unwrap().value, 0.0);
        assert_eq!(rate_i1(-SQRT_2, SQRT_2).unwrap().value, 0.0);
        assert_eq!(rate_i1(0.5, SQRT_2).unwrap().value, f64::INFINITY);
        assert!(rate_i1(1.0, 0.0).is_err());
        assert!(rate_i1(1.0, -2.0).is_err());
    }

    #[test]
    fn known_value() {
        // √2 − acosh(√2) = √2 − ln(1 + √2)
        let v = rate_i1(-2.0, SQRT_2).unwrap().value;
        assert!((v - (SQRT_2 - (1.0 + SQRT_2).ln())).abs() < 1e-15);
        assert!((v - 0.532_839_975_353_552).abs() < 1e-12, "{v}");
    }

    #[test]
    fn matches_quadrature_and_scaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let e = rng.random_range(0.1..5.0);
            let u = e * rng.random_range(1.0..6.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let v = rate_i1(u, e).unwrap().value;
            let q = quadrature(u, e);
            assert!((v - q).abs() <= 1e-8 * q.max(1.0), "u={u} E={e}: {v} vs {q}");
            assert_eq!(v, rate_i1(-u, e).unwrap().value);
            let r = rng.random_range(0.2..5.0);
            let scaled = rate_i1(r * u, e).unwrap().value;
            let moved = rate_i1(u, e / r).unwrap().value;
            assert!(scaled == moved || (scaled - moved).abs() <= 1e-10 * scaled.max(1.0), "{u} {e} {r}: {scaled} {moved}");
        }
    }

    #[test]
    fn increasing_outside_bulk() {
        let mut last = 0.0;
        for i in 1..200 {
            let v = rate_i1(1.0 + 0.05 * i as f64, 1.0).unwrap().value;
            assert!(v > last);
            last = v;
        }
        assert_eq!(penalty(0, 0.5, 0.1, 1.0), 0.0);
        assert_eq!(penalty(2, 0.5, 0.1, 1.0), f64::INFINITY);
    }
}
