//! Residual of the two fermionic saddle-point equations.
//!
//! With `σ = i(z − t)` and the block variable `σ1` eliminated through the
//! second equation, a root of the master quartic must make both residuals
//! vanish. This is an independent check on the quartic's algebra.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rmt::SpectralParams;

const TINY: f64 = 1e-14;

fn checked_inv(v: Complex64, what: &str) -> Result<Complex64> {
    if v.norm() < TINY {
        return Err(Error::Singular(format!("{what} is within {TINY:e} of zero")));
    }
    Ok(v.inv())
}

pub fn saddle_residual(z: Complex64, t: Complex64, sp: &SpectralParams) -> Result<f64> {
    sp.validate()?;
    if sp.b1 == 0.0 {
        return Err(Error::Singular("b1 = 0 removes the block saddle".into()));
    }
    let i = Complex64::i();
    let (b2, b12, k, kp) = (sp.b * sp.b, sp.b1 * sp.b1, sp.kappa, sp.kappa_prime());
    let sigma = i * (z - t);
    let inv_shift = checked_inv(sigma - i * z, "sigma - i z")?;
    let sigma1 = b12 / (2.0 * k) * (2.0 / b2 * sigma - kp * inv_shift);
    let inv_d = checked_inv(sigma1 + sigma - i * sp.x1 - i * z, "block denominator")?;
    let r_block = 2.0 / b12 * sigma1 - inv_d;
    let r_bulk = 2.0 / b2 * sigma - k * inv_d - kp * inv_shift;
    Ok(r_block.norm() + r_bulk.norm())
}
