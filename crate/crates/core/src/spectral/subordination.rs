//! The master quartic is the square-free form of
//!
//! ```text
//! F(ω) = ω − z + (b²/2) · (κ'/ω + κ g(ω + x1)) = 0,
//! ```
//!
//! with `g` the Stieltjes transform of the semicircle of radius `√2 b1`.
//! Removing the square root pairs the roots up, which makes them badly
//! conditioned when `b ≪ b1`. Polishing the quartic roots against `F` itself,
//! on the physical branch of `g`, restores full precision and rejects the
//! roots that belong to the other branch.

use num_complex::Complex64;

use crate::rmt::SpectralParams;

/// Semicircle Stieltjes transform and its derivative, branch cut on `[−R, R]`.
fn semicircle_g(zeta: Complex64, b1: f64) -> (Complex64, Complex64) {
    let r = std::f64::consts::SQRT_2 * b1;
    let s = (zeta - r).sqrt() * (zeta + r).sqrt();
    // (ζ − s)/b1² rewritten without the cancellation for |ζ| ≫ R
    let g = 2.0 / (zeta + s);
    (g, -g / s)
}

fn residual(w: Complex64, z: f64, sp: &SpectralParams) -> (Complex64, Complex64) {
    let eps = 0.5 * sp.b * sp.b;
    let (g, dg) = semicircle_g(w + sp.x1, sp.b1);
    let kp = sp.kappa_prime();
    (
        w - z + eps * (kp / w + sp.kappa * g),
        1.0 + eps * (-kp / (w * w) + sp.kappa * dg),
    )
}

/// Keep `ω` in the closed upper half-plane, where the branch of `g` is the
/// limit from above.
fn upper(w: Complex64) -> Complex64 {
    Complex64::new(w.re, w.im.abs() + 0.0)
}

/// Newton on `F` from `start`. Returns the root when it converges.
pub(crate) fn polish(start: Complex64, z: f64, sp: &SpectralParams) -> Option<Complex64> {
    let mut w = upper(start);
    let scale = |w: Complex64| w.norm() + z.abs();
    let (mut f, mut df) = residual(w, z, sp);
    // Near a square-root edge the root is nearly double and Newton only
    // converges linearly, so a small residual alone does not mean the
    // imaginary part is settled. Iterate until the step itself is negligible.
    for iter in 0..80 {
        if !f.is_finite() || !df.is_finite() || df.norm() == 0.0 {
            return None;
        }
        // a start on the other branch wanders without approaching a root
        if iter >= 8 && f.norm() > 1e-4 * scale(w) {
            return None;
        }
        let mut step = f / df;
        let mut accepted = false;
        // damped: halve until the residual drops
        for _ in 0..10 {
            let cand = upper(w - step);
            let (fc, dfc) = residual(cand, z, sp);
            if fc.is_finite() && fc.norm() < f.norm() {
                w = cand;
                f = fc;
                df = dfc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.norm() <= 4.0 * f64::EPSILON * w.norm() {
            break;
        }
    }
    (f.norm() <= 1e-9 * scale(w)).then_some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semicircle_transform_decays_like_inverse() {
        let zeta = Complex64::new(1e4, 1.0);
        let (g, _) = semicircle_g(zeta, 1.3);
        assert!((g * zeta - 1.0).norm() < 1e-7);
        // limit from above inside the cut has negative imaginary part
        let (g, _) = semicircle_g(Complex64::new(0.2, 0.0), 1.0);
        assert!(g.im < 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sp = SpectralParams::new(0.8, 1.1, 0.6, 0.3).unwrap();
        let w = Complex64::new(0.4, 0.7);
        let h = 1e-6;
        let (_, d) = residual(w, 0.5, &sp);
        let fd = (residual(w + h, 0.5, &sp).0 - residual(w - h, 0.5, &sp).0) / (2.0 * h);
        assert!((d - fd).norm() < 1e-7);
    }
}
