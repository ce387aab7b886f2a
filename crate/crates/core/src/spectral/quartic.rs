//! The master quartic for the Stieltjes variable and its roots.
//!
//! With `G(z) = (2/b²)(z − t)` the limiting Stieltjes transform of `H'`, the
//! auxiliary variable `t` solves
//!
//! ```text
//! (t² − z t + κ'b²/2) · (β t² − (γ z − x1) t + δ) + κ b² t² / 2 = 0
//! γ = b1²/(κ b²),  β = 1 + γ,  δ = κ' b1²/(2κ).
//! ```

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rmt::SpectralParams;

/// Coefficients of the two quadratic factors and the coupling term.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Factors {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub coupling: f64,
}

pub(crate) fn factors(sp: &SpectralParams) -> Factors {
    let (b2, k, kp) = (sp.b * sp.b, sp.kappa, sp.kappa_prime());
    let gamma = sp.b1 * sp.b1 / (k * b2);
    Factors {
        alpha: kp * b2 / 2.0,
        beta: 1.0 + gamma,
        gamma,
        delta: kp * sp.b1 * sp.b1 / (2.0 * k),
        coupling: k * b2 / 2.0,
    }
}

/// Factored form of the quartic, evaluated at complex `t`.
pub fn quartic_factored(t: Complex64, z: f64, sp: &SpectralParams) -> Complex64 {
    let f = factors(sp);
    let left = t * t - z * t + f.alpha;
    let right = f.beta * t * t - (f.gamma * z - sp.x1) * t + f.delta;
    left * right + f.coupling * t * t
}

/// Expanded coefficients, highest degree first.
pub fn quartic_coeffs(z: f64, sp: &SpectralParams) -> Result<[f64; 5]> {
    sp.validate()?;
    if sp.b1 == 0.0 {
        return Err(Error::DegenerateQuartic(
            "b1 = 0 removes the block saddle; use the semicircle closed form".into(),
        ));
    }
    let f = factors(sp);
    let m = f.gamma * z - sp.x1;
    Ok([
        f.beta,
        -m - z * f.beta,
        f.delta + z * m + f.alpha * f.beta + f.coupling,
        -z * f.delta - f.alpha * m,
        f.alpha * f.delta,
    ])
}

pub fn eval_poly(c: &[f64; 5], t: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * t + a)
}

fn eval_with_derivative(c: &[f64; 5], t: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(c[0], 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for &a in &c[1..] {
        d = d * t + p;
        p = p * t + a;
    }
    (p, d)
}

/// All four roots via the eigenvalues of the (scaled) companion matrix,
/// each followed by a Newton step that is kept only if it lowers the residual.
pub fn solve_quartic(c: &[f64; 5]) -> Result<[Complex64; 4]> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale.is_finite()) || c[0].abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::DegenerateQuartic(format!("leading coefficient {} is ~0", c[0])));
    }
    // Rescale t = s·u so the monic coefficients are of comparable size.
    let monic: Vec<f64> = c[1..].iter().map(|a| a / c[0]).collect();
    let s = monic
        .iter()
        .enumerate()
        .map(|(i, a)| a.abs().powf(1.0 / (i + 1) as f64))
        .fold(0.0f64, f64::max);
    let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
    let a: Vec<f64> = monic.iter().enumerate().map(|(i, a)| a / s.powi(i as i32 + 1)).collect();
    let companion = Matrix4::new(
        -a[0], -a[1], -a[2], -a[3], //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0,
    );
    let ev = companion.complex_eigenvalues();
    let mut roots = [Complex64::new(0.0, 0.0); 4];
    for (r, e) in roots.iter_mut().zip(ev.iter()) {
        let mut t = Complex64::new(e.re * s, e.im * s);
        let (p, d) = eval_with_derivative(c, t);
        if d.norm() > 0.0 {
            let cand = t - p / d;
            if cand.is_finite() && eval_poly(c, cand).norm() < p.norm() {
                t = cand;
            }
        }
        *r = t;
    }
    if roots.iter().any(|r| !r.is_finite()) {
        return Err(Error::DegenerateQuartic("non-finite root".into()));
    }
    Ok(roots)
}
