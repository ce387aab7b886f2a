//! Model hyperparameters and the scalar constants derived from them.
//!
//! Everything downstream (spectral parameters, the quadratic part of the
//! Coulomb-gas functional, the asymptotic prefactor and the integration
//! region) is built from [`DerivedConstants`], so there is exactly one place
//! where the closed forms live.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{LN_2, PI, SQRT_2};

use crate::error::{domain, Result};

/// Largest supported `p + q`. Beyond this `2^{3(p+q)}` leaves the f64 range.
pub const MAX_TOTAL_DEGREE: u32 = 100;

/// The four hyperparameters of the interacting spin-glass model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: u32,
    pub q: u32,
    pub sigma_z: f64,
    pub kappa: f64,
}

impl ModelParams {
    pub fn new(p: u32, q: u32, sigma_z: f64, kappa: f64) -> Result<Self> {
        let m = ModelParams { p, q, sigma_z, kappa };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return domain(format!("p must be >= 2, got {}", self.p));
        }
        if self.q < 1 {
            return domain(format!("q must be >= 1, got {}", self.q));
        }
        if self.p + self.q > MAX_TOTAL_DEGREE {
            return domain(format!(
                "p + q must be <= {MAX_TOTAL_DEGREE}, got {}",
                self.p + self.q
            ));
        }
        if !(self.sigma_z.is_finite() && self.sigma_z > 0.0) {
            return domain(format!("sigma_z must be positive and finite, got {}", self.sigma_z));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return domain(format!("kappa must lie in (0, 1), got {}", self.kappa));
        }
        Ok(())
    }

    /// Non-fatal remarks about the parameter choice.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.p < 3 {
            out.push(format!("p = {} < 3: the model is intended for p >= 3", self.p));
        }
        if self.q < 3 {
            out.push(format!("q = {} < 3: the model is intended for q >= 3", self.q));
        }
        out
    }

    pub fn kappa_prime(&self) -> f64 {
        1.0 - self.kappa
    }

    fn total(&self) -> f64 {
        f64::from(self.p + self.q)
    }

    /// Exponent of two in the discriminator-gradient variance.
    fn grad_exponent(&self) -> i32 {
        if cfg!(feature = "grad-exponent-p-plus-one") {
            (self.p + 1) as i32
        } else {
            (self.p + self.q) as i32
        }
    }

    /// `log(p + σ_z² 2^e (p+q))`, the discriminator-gradient log-variance.
    fn log_grad_var_d(&self) -> f64 {
        let v = self.sigma_z.powi(2) * 2f64.powi(self.grad_exponent()) * self.total();
        (f64::from(self.p) + v).ln()
    }

    /// `log(σ_z² (p+q) 2^{p+q})`, the generator-gradient log-variance.
    fn log_grad_var_g(&self) -> f64 {
        2.0 * self.sigma_z.ln() + self.total().ln() + self.total() * LN_2
    }
}

/// Scalar constants shared by the spectral and complexity computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub b: f64,
    pub b1: f64,
    pub kappa_prime: f64,
    pub s2: f64,
    pub s1_2: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

pub fn derive_constants(params: &ModelParams) -> Result<DerivedConstants> {
    params.validate()?;
    let (p, n) = (f64::from(params.p), params.total());
    let pow = 2f64.powi((params.p + params.q) as i32);
    Ok(DerivedConstants {
        b: params.sigma_z * (pow * n * (n - 1.0)).sqrt(),
        b1: (p * (p - 1.0) * params.kappa).sqrt(),
        kappa_prime: params.kappa_prime(),
        s2: 0.5 * params.sigma_z.powi(2) * n * n * pow.powi(3),
        s1_2: p * p / 2.0,
        k: constant_k(params)?,
    })
}

/// Leading-order exponent of the Kac-Rice prefactor.
pub fn constant_k(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let (k, kp) = (params.kappa, params.kappa_prime());
    Ok(0.5 * LN_2 + 0.5 * PI.ln()
        - 0.5 * k * params.log_grad_var_d()
        - 0.5 * kp * params.log_grad_var_g()
        - 0.5 * k * k.ln()
        - 0.5 * kp * kp.ln())
}

/// `log ω_m` with `ω_m = 2π^{m/2}/Γ(m/2)`, the surface area of the unit
/// sphere in `R^m`, for real `m > 0`.
fn ln_sphere_area(m: f64) -> f64 {
    LN_2 + 0.5 * m * PI.ln() - ln_gamma(0.5 * m)
}

/// `(1/N) log K'_N`, the finite-N Kac-Rice prefactor including the two
/// Gaussian normalisations of the `(x, x1)` integral.
///
/// Sphere dimensions use the real values `κN` and `κ'N`.
pub fn log_kn_finite(params: &ModelParams, n: u64) -> Result<f64> {
    params.validate()?;
    if n < 4 {
        return domain(format!("N must be >= 4, got {n}"));
    }
    let c = derive_constants(params)?;
    let nf = n as f64;
    let (k, kp) = (params.kappa, params.kappa_prime());
    let m = nf - 2.0;
    let log_kn = ln_sphere_area(k * nf) + ln_sphere_area(kp * nf) + 0.5 * m * (2.0 * m).ln()
        - 0.5 * m * (2.0 * PI).ln()
        - 0.5 * (k * nf - 1.0) * params.log_grad_var_d()
        - 0.5 * (kp * nf - 1.0) * params.log_grad_var_g();
    let gauss = 0.5 * (m / (2.0 * PI * c.s1_2)).ln() + 0.5 * (m / (2.0 * PI * c.s2)).ln();
    Ok((log_kn + gauss) / nf)
}

/// Exact limit of [`log_kn_finite`] as `N → ∞`, from Stirling's formula.
pub fn log_kn_limit(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let (k, kp) = (params.kappa, params.kappa_prime());
    Ok(0.5 * LN_2 + 0.5
        - 0.5 * k * params.log_grad_var_d()
        - 0.5 * kp * params.log_grad_var_g()
        - 0.5 * k * k.ln()
        - 0.5 * kp * kp.ln())
}

/// The integration region `B` in the scaled `(x, x1)` plane:
/// `x <= x_max` and `x1 >= -slope * x - offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneRegion {
    pub u_d: f64,
    pub u_g: f64,
    pub x_max: f64,
    pub slope: f64,
    pub offset: f64,
}

impl HalfPlaneRegion {
    pub fn new(params: &ModelParams, u_d: f64, u_g: f64) -> Result<Self> {
        params.validate()?;
        if !(u_d.is_finite() && u_g.is_finite()) {
            return domain("loss bounds must be finite");
        }
        let n = params.total();
        let pow = 2f64.powi((params.p + params.q) as i32);
        let p = f64::from(params.p);
        Ok(HalfPlaneRegion {
            u_d,
            u_g,
            x_max: n * pow / SQRT_2 * u_g,
            slope: p / (n * pow),
            offset: p / SQRT_2 * u_d,
        })
    }

    /// Region given directly by its two constraints; used for generic objectives.
    pub fn from_constraints(x_max: f64, slope: f64, offset: f64) -> Result<Self> {
        if !(x_max.is_finite() && offset.is_finite() && slope.is_finite() && slope > 0.0) {
            return domain("region constraints must be finite with positive slope");
        }
        Ok(HalfPlaneRegion { u_d: f64::NAN, u_g: f64::NAN, x_max, slope, offset })
    }

    /// Lower boundary of the second constraint at a given `x`.
    pub fn x1_floor(&self, x: f64) -> f64 {
        -self.slope * x - self.offset
    }

    pub fn contains(&self, x: f64, x1: f64) -> bool {
        x <= self.x_max && x1 >= self.x1_floor(x)
    }

    /// Smallest `x1` that admits any feasible `x` (the corner of `B`).
    pub fn x1_corner(&self) -> f64 {
        self.x1_floor(self.x_max)
    }

    /// Feasible `x` for fixed `x1` as a closed interval, or `None` when empty.
    /// Both endpoints pass [`contains`](Self::contains) exactly.
    pub fn x_range(&self, x1: f64) -> Option<(f64, f64)> {
        let mut lo = -(x1 + self.offset) / self.slope;
        let mut guard = 0;
        while !self.contains(lo, x1) && guard < 64 {
            lo = next_up(lo);
            guard += 1;
        }
        if !self.contains(lo, x1) || lo > self.x_max {
            return None;
        }
        Some((lo, self.x_max))
    }
}

pub(crate) fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> ModelParams {
        ModelParams::new(3, 3, 1.0, 0.9).unwrap()
    }

    #[test]
    fn constants_match_hand_arithmetic() {
        let c = derive_constants(&reference()).unwrap();
        // 2^6 * 6 * 5 = 1920, 3*2*0.9 = 5.4, 0.5*36*2^18 = 18*2^18
        assert_relative_eq!(c.b, 1920f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(c.b1, 5.4f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(c.s2, 18.0 * 262144.0, max_relative = 1e-15);
        assert_eq!(c.s1_2, 4.5);
        assert_eq!(c.kappa_prime + 0.9, 1.0);
    }

    #[test]
    fn k_golden_value() {
        // 0.5 ln 2 + 0.5 ln pi - 0.45 ln 387 - 0.05 ln 384 - 0.45 ln 0.9 - 0.05 ln 0.1
        let want = 0.5 * 2f64.ln() + 0.5 * PI.ln() - 0.45 * 387f64.ln() - 0.05 * 384f64.ln()
            - 0.45 * 0.9f64.ln()
            - 0.05 * 0.1f64.ln();
        let k = constant_k(&reference()).unwrap();
        assert_relative_eq!(k, want, max_relative = 1e-14);
        assert_eq!(format!("{k:.2}"), "-1.90");
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::new(3, 3, 0.0, 0.5).is_err());
        assert!(ModelParams::new(1, 3, 1.0, 0.5).is_err());
        assert!(ModelParams::new(3, 0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(3, 3, 1.0, 1.0).is_err());
        assert!(ModelParams::new(3, 3, 1.0, 0.0).is_err());
        assert!(ModelParams::new(60, 60, 1.0, 0.5).is_err());
        let err = ModelParams::new(3, 3, 0.0, 0.5).unwrap_err().to_string();
        assert!(err.contains("sigma_z"), "{err}");
    }

    #[test]
    fn low_degree_warns() {
        assert_eq!(ModelParams::new(2, 1, 1.0, 0.5).unwrap().warnings().len(), 2);
        assert!(reference().warnings().is_empty());
    }

    #[test]
    fn finite_n_prefactor_is_finite_everywhere() {
        let p = reference();
        for n in [4u64, 5, 10, 1_000, 1_000_000, 1_000_000_000] {
            assert!(log_kn_finite(&p, n).unwrap().is_finite(), "N={n}");
        }
        assert!(log_kn_finite(&p, 3).is_err());
    }

    #[test]
    fn finite_n_prefactor_approaches_stirling_limit() {
        let p = reference();
        let lim = log_kn_limit(&p).unwrap();
        let gaps: Vec<f64> = [1_000u64, 100_000, 10_000_000]
            .iter()
            .map(|&n| (log_kn_finite(&p, n).unwrap() - lim).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-5);
    }

    #[test]
    fn stirling_limit_differs_from_k_by_fixed_offset() {
        let p = reference();
        let offset = log_kn_limit(&p).unwrap() - constant_k(&p).unwrap();
        assert_relative_eq!(offset, 0.5 - 0.5 * PI.ln(), max_relative = 1e-12);
    }

    #[test]
    fn region_membership_is_exact_on_returned_range() {
        let p = reference();
        for &(ud, ug) in &[(0.3, -0.2), (-1.7, 2.5), (1e-3, 1e3)] {
            let r = HalfPlaneRegion::new(&p, ud, ug).unwrap();
            for &x1 in &[-5.0, 0.0, 0.1, 3.3] {
                if let Some((lo, hi)) = r.x_range(x1) {
                    assert!(r.contains(lo, x1) && r.contains(hi, x1));
                    assert!(!r.contains(next_up(hi), x1));
                }
            }
            let corner = r.x1_corner();
            assert!(r.contains(r.x_max, corner));
        }
    }

    #[test]
    fn symmetric_kappa_terms_match() {
        let p = ModelParams::new(3, 3, 1.0, 0.5).unwrap();
        let (k, kp) = (p.kappa, p.kappa_prime());
        assert_eq!(0.5 * k * k.ln(), 0.5 * kp * kp.ln());
    }
}
