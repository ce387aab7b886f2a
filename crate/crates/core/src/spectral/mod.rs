//! Limiting spectral density of the deformed block ensemble and its
//! logarithmic potential.
//!
//! The density is read off the roots of the master quartic. Each root is
//! polished against the unsquared subordination equation it comes from;
//! roots on the wrong branch do not converge there and are dropped, which
//! removes the spurious complex pair that would otherwise put mass outside
//! the support. The density is `(2/(πb²)) Im t` for the surviving root.
//!
//! Each support interval `[a, c]` is parametrised as `z = m − h cos θ`,
//! `θ ∈ [0, π]`. In that variable `ρ(z) dz = ρ(z(θ)) h sin θ dθ` is smooth
//! at square-root edges, so the density is stored as adaptive Gauss panels
//! in `θ`. The log potential integrates those panels with geometric grading
//! towards the singular point.

mod quartic;
mod saddle;
mod subordination;

pub use quartic::{eval_poly, quartic_coeffs, quartic_factored, solve_quartic};
pub use saddle::saddle_residual;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quad::{gauss10, gauss16};
use crate::rmt::SpectralParams;

/// Density below this value counts as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
/// Allowed deviation of the total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-3;

/// Allowed gap between the trapezoid rule on the output grid and the panel mass.
const TRAPEZOID_TOLERANCE: f64 = 2e-4;
const MAX_GRID_ROUNDS: usize = 8;
/// Relative size of an imaginary part that is indistinguishable from zero.
const ROOT_NOISE: f64 = 64.0 * f64::EPSILON;

fn semicircle(z: f64, b: f64) -> f64 {
    let r2 = 2.0 * b * b;
    if z * z >= r2 {
        0.0
    } else {
        (r2 - z * z).sqrt() / (PI * b * b)
    }
}

/// A clustered conjugate pair often comes back from the companion matrix as
/// two real roots. Starting slightly above the axis lets Newton find the
/// complex root when there is one and return to the axis when there is not.
fn nudge(t: Complex64) -> Complex64 {
    let lift = 1e-6 * t.norm();
    if t.im.abs() < lift { Complex64::new(t.re, lift) } else { t }
}

/// Density at real `z`.
pub fn density_at(z: f64, sp: &SpectralParams) -> Result<f64> {
    sp.validate()?;
    if sp.b1 == 0.0 {
        if sp.x1 == 0.0 {
            return Ok(semicircle(z, sp.b));
        }
        return Err(Error::DegenerateQuartic(
            "b1 = 0 with nonzero x1 has no closed form here".into(),
        ));
    }
    let roots = solve_quartic(&quartic_coeffs(z, sp)?)?;
    // The root with positive imaginary part on the physical branch is
    // unique, so the first one found is the answer.
    let best = roots
        .iter()
        .filter_map(|&t| subordination::polish(nudge(t), z, sp))
        // an imaginary part at rounding level is a real root
        .find(|w| w.im > ROOT_NOISE * w.norm())
        .map_or(0.0, |w| w.im);
    Ok(2.0 * best / (PI * sp.b * sp.b))
}

/// Settings for [`density_grid_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Tabulation points per support interval (at least 64).
    pub n_points: usize,
    /// Scan points per search window.
    pub scan_points: usize,
    /// Relative size of the two top Legendre coefficients accepted per panel.
    pub panel_tol: f64,
    pub max_panels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_points: 256, scan_points: 1024, panel_tol: 1e-11, max_panels: 4000 }
    }
}

/// Panel of the `θ`-parametrised density on one support interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub t0: f64,
    pub t1: f64,
    /// `ρ(z(θ)) h sin θ` at the 16 Gauss nodes of `[t0, t1]`.
    pub values: Vec<f64>,
}

/// One support interval with its panel representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPiece {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub panels: Vec<Panel>,
}

impl SupportPiece {
    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
    fn half(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
    fn z(&self, theta: f64) -> f64 {
        self.mid() - self.half() * theta.cos()
    }

    /// `z(θ) − x` without cancellation near either edge.
    fn offset(&self, theta: f64, x: f64) -> f64 {
        if theta < 0.5 * PI {
            (self.lo - x) + 2.0 * self.half() * (0.5 * theta).sin().powi(2)
        } else {
            (self.hi - x) - 2.0 * self.half() * (0.5 * theta).cos().powi(2)
        }
    }

    fn theta_of(&self, z: f64) -> f64 {
        ((self.mid() - z) / self.half()).clamp(-1.0, 1.0).acos()
    }

    fn weighted(&self, panel: &Panel, theta: f64) -> f64 {
        let u = (2.0 * theta - panel.t0 - panel.t1) / (panel.t1 - panel.t0);
        gauss16().interpolate(&panel.values, u.clamp(-1.0, 1.0))
    }

    fn density(&self, z: f64) -> f64 {
        if z <= self.lo || z >= self.hi {
            return 0.0;
        }
        let theta = self.theta_of(z);
        let idx = self.panels.partition_point(|p| p.t1 < theta).min(self.panels.len() - 1);
        let s = self.half() * theta.sin();
        if s <= 0.0 {
            return 0.0;
        }
        (self.weighted(&self.panels[idx], theta) / s).max(0.0)
    }
}

/// Tabulated equilibrium density with detected support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub params: SpectralParams,
    pub z_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub support: Vec<(f64, f64)>,
    pub mass: f64,
    pub config: GridConfig,
    pub pieces: Vec<SupportPiece>,
}

/// Qualitative shape of the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportShape {
    Merged,
    Touching,
    Separate,
}

impl DensityGrid {
    /// Density at `z` from the panel interpolant.
    pub fn rho_at(&self, z: f64) -> f64 {
        self.pieces.iter().map(|p| p.density(z)).sum()
    }

    /// Trapezoid integral of the tabulated values.
    pub fn trapezoid_mass(&self) -> f64 {
        self.z_values
            .windows(2)
            .zip(self.rho_values.windows(2))
            .map(|(z, r)| 0.5 * (z[1] - z[0]) * (r[0] + r[1]))
            .sum()
    }

    /// Shape of the support: a gap no wider than `edge_tol` counts as touching.
    pub fn shape(&self, edge_tol: f64) -> SupportShape {
        let min_gap = self
            .support
            .windows(2)
            .map(|w| w[1].0 - w[0].1)
            .fold(f64::INFINITY, f64::min);
        if self.support.len() <= 1 {
            SupportShape::Merged
        } else if min_gap <= edge_tol {
            SupportShape::Touching
        } else {
            SupportShape::Separate
        }
    }

    /// `∫ log|z − x| dμ(z)`.
    pub fn log_potential(&self, x: f64) -> f64 {
        self.pieces.iter().map(|p| piece_log_potential(p, x)).sum()
    }
}

/// Density on a grid with default settings and `n_points` per interval.
pub fn density_grid(sp: &SpectralParams, n_points: usize) -> Result<DensityGrid> {
    density_grid_with(sp, &GridConfig { n_points, ..GridConfig::default() })
}

/// Windows that contain the whole spectrum: eigenvalues of the deformation
/// widened by the bulk norm. The first entry is their hull, followed by the
/// two component windows so narrow bulks are resolved at their own scale.
fn search_windows(sp: &SpectralParams) -> [(f64, f64); 3] {
    let r1 = SQRT_2 * (sp.b + sp.b1);
    let r2 = SQRT_2 * sp.b;
    let pad = |lo: f64, hi: f64| {
        let m = 0.1 * (hi - lo) + 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        (lo - m, hi + m)
    };
    let w1 = pad(-sp.x1 - r1, -sp.x1 + r1);
    let w2 = pad(-r2, r2);
    [(w1.0.min(w2.0), w1.1.max(w2.1)), w1, w2]
}

fn bisect_edge(rho: &impl Fn(f64) -> Result<f64>, mut out: f64, mut inside: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (out + inside);
        if mid == out || mid == inside {
            break;
        }
        if rho(mid)? > SUPPORT_THRESHOLD {
            inside = mid;
        } else {
            out = mid;
        }
    }
    Ok(inside)
}

fn scan_support(sp: &SpectralParams, cfg: &GridConfig) -> Result<Vec<(f64, f64)>> {
    let rho = |z: f64| density_at(z, sp);
    let mut found = Vec::new();
    for (w, (lo, hi)) in search_windows(sp).into_iter().enumerate() {
        let n = cfg.scan_points.max(16);
        let zs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let on: Vec<bool> = zs.iter().map(|&z| Ok(rho(z)? > SUPPORT_THRESHOLD)).collect::<Result<_>>()?;
        if w == 0 && (on[0] || on[n - 1]) {
            return Err(Error::Consistency(format!(
                "density does not vanish at the search window edge [{lo}, {hi}]"
            )));
        }
        let mut i = 0;
        while i < n {
            if !on[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && on[i] {
                i += 1;
            }
            // runs cut by a component window belong to a bulk the hull scan sees whole
            if start == 0 || i == n {
                continue;
            }
            let a = bisect_edge(&rho, zs[start - 1], zs[start])?;
            let c = bisect_edge(&rho, zs[i], zs[i - 1])?;
            found.push((a, c));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, c) in found {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(c),
            _ => merged.push((a, c)),
        }
    }
    Ok(merged.into_iter().filter(|(a, c)| c > a).collect())
}

fn panel_values(rho: &impl Fn(f64) -> Result<f64>, mid: f64, half: f64, t0: f64, t1: f64) -> Result<Vec<f64>> {
    gauss16()
        .nodes_on(t0, t1)
        .map(|(t, _)| Ok(rho(mid - half * t.cos())? * half * t.sin()))
        .collect()
}

fn build_piece(
    rho: &impl Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    features: &[f64],
    cfg: &GridConfig,
) -> Result<SupportPiece> {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    // uniform start, plus breaks at feature points so that a narrow bulk
    // sitting on top of a wide one always owns a panel
    let initial = 8;
    let mut breaks: Vec<f64> = (0..=initial).map(|k| PI * k as f64 / initial as f64).collect();
    for &z in features {
        if z > lo && z < hi {
            breaks.push(((mid - z) / half).clamp(-1.0, 1.0).acos());
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    // breadth first, so a panel budget runs out evenly rather than in one corner
    let mut work: VecDeque<(f64, f64, Vec<f64>)> = VecDeque::new();
    for w in breaks.windows(2) {
        work.push_back((w[0], w[1], panel_values(rho, mid, half, w[0], w[1])?));
    }
    let scale = work
        .iter()
        .flat_map(|w| w.2.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let integral = |t0: f64, t1: f64, vals: &[f64]| -> f64 {
        gauss16().nodes_on(t0, t1).zip(vals).map(|((_, w), v)| w * v).sum()
    };
    let mut done = Vec::new();
    while let Some((t0, t1, vals)) = work.pop_front() {
        let resolved = gauss16().tail(&vals) <= cfg.panel_tol * scale;
        let too_many = done.len() + work.len() >= cfg.max_panels;
        if resolved || too_many || t1 - t0 < 1e-12 {
            done.push(Panel { t0, t1, values: vals });
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let left = panel_values(rho, mid, half, t0, tm)?;
        let right = panel_values(rho, mid, half, tm, t1)?;
        // Root noise can keep the coefficient tail above tolerance forever.
        // Once halving no longer moves the integral, the panel is converged.
        let change = (integral(t0, tm, &left) + integral(tm, t1, &right) - integral(t0, t1, &vals)).abs();
        if change <= 1e-10 * scale * (t1 - t0) && t1 - t0 < PI / 64.0 {
            done.push(Panel { t0, t1: tm, values: left });
            done.push(Panel { t0: tm, t1, values: right });
            continue;
        }
        work.push_back((t0, tm, left));
        work.push_back((tm, t1, right));
    }
    done.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    let mass = done
        .iter()
        .map(|p| {
            gauss16().nodes_on(p.t0, p.t1).zip(&p.values).map(|((_, w), v)| w * v).sum::<f64>()
        })
        .sum();
    Ok(SupportPiece { lo, hi, mass, panels: done })
}

pub fn density_grid_with(sp: &SpectralParams, cfg: &GridConfig) -> Result<DensityGrid> {
    sp.validate()?;
    if cfg.n_points < 64 {
        return Err(Error::Domain(format!("n_points must be >= 64, got {}", cfg.n_points)));
    }
    let rho = |z: f64| density_at(z, sp);
    let intervals = if sp.b1 == 0.0 && sp.x1 == 0.0 {
        vec![(-SQRT_2 * sp.b, SQRT_2 * sp.b)]
    } else {
        scan_support(sp, cfg)?
    };
    let mut pieces = Vec::new();
    let (r1, r2) = (SQRT_2 * sp.b1, SQRT_2 * sp.b);
    let features = [-r2, r2, -sp.x1 - r1, -sp.x1 + r1, -sp.x1];
    for (lo, hi) in intervals {
        let piece = build_piece(&rho, lo, hi, &features, cfg)?;
        // discard numerical dust: intervals carrying no measurable mass
        if piece.mass > 1e-12 {
            pieces.push(piece);
        }
    }
    let mass: f64 = pieces.iter().map(|p| p.mass).sum();
    if !((mass - 1.0).abs() <= MASS_TOLERANCE) {
        return Err(Error::Consistency(format!("density mass {mass} differs from 1")));
    }
    let (lo_w, hi_w) = search_windows(sp)
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), w| (a.min(w.0), b.max(w.1)));
    // Chebyshev-Lobatto points plus the panel breaks, which cluster where the
    // density has narrow features; halve every θ step until the trapezoid
    // rule reproduces the panel mass.
    let mut thetas: Vec<Vec<f64>> = pieces
        .iter()
        .map(|piece| {
            let n = cfg.n_points;
            let mut t: Vec<f64> = (0..n).map(|j| PI * j as f64 / (n - 1) as f64).collect();
            t.extend(piece.panels.iter().map(|p| p.t0));
            t.sort_by(f64::total_cmp);
            t.dedup();
            t
        })
        .collect();
    let (mut z_values, mut rho_values);
    let mut rounds = 0;
    loop {
        z_values = vec![lo_w];
        rho_values = vec![0.0];
        for (piece, ts) in pieces.iter().zip(&thetas) {
            for (j, &theta) in ts.iter().enumerate() {
                let last = j + 1 == ts.len();
                let z = if j == 0 { piece.lo } else if last { piece.hi } else { piece.z(theta) };
                if z <= *z_values.last().unwrap() {
                    continue;
                }
                z_values.push(z);
                rho_values.push(if j == 0 || last { 0.0 } else { piece.density(z) });
            }
        }
        let trapezoid: f64 =
            z_values.windows(2).zip(rho_values.windows(2)).map(|(z, r)| 0.5 * (z[1] - z[0]) * (r[0] + r[1])).sum();
        if (trapezoid - mass).abs() <= TRAPEZOID_TOLERANCE || rounds == MAX_GRID_ROUNDS {
            break;
        }
        rounds += 1;
        for ts in &mut thetas {
            let mids: Vec<f64> = ts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            ts.extend(mids);
            ts.sort_by(f64::total_cmp);
        }
    }
    if hi_w > *z_values.last().unwrap() {
        z_values.push(hi_w);
        rho_values.push(0.0);
    }
    Ok(DensityGrid {
        params: *sp,
        z_values,
        rho_values,
        support: pieces.iter().map(|p| (p.lo, p.hi)).collect(),
        mass,
        config: *cfg,
        pieces,
    })
}

/// Potential of `grid` at `x`, checking that the grid was built for `sp`.
pub fn log_potential(x: f64, sp: &SpectralParams, grid: &DensityGrid) -> Result<f64> {
    if grid.params != *sp {
        return Err(Error::Consistency("density grid was built for different parameters".into()));
    }
    Ok(grid.log_potential(x))
}

/// Geometric grading ratio and depth for near-singular panels.
const GRADE_RATIO: f64 = 0.3;
const GRADE_LEVELS: i32 = 12;

fn piece_log_potential(piece: &SupportPiece, x: f64) -> f64 {
    let theta_x = piece.theta_of(x);
    let inside = x > piece.lo && x < piece.hi;
    // Inside the support, z(θ) − x = 2h sin((θ+θx)/2) sin((θ−θx)/2) stays
    // exact as θ → θx, where the direct difference is pure rounding.
    let h = piece.half();
    let log_at = |theta: f64| {
        if inside {
            (2.0 * h * (0.5 * (theta + theta_x)).sin() * (0.5 * (theta - theta_x)).sin()).abs().ln()
        } else {
            piece.offset(theta, x).abs().ln()
        }
    };
    let mut total = 0.0;
    for panel in &piece.panels {
        let len = panel.t1 - panel.t0;
        let dist = if theta_x < panel.t0 {
            panel.t0 - theta_x
        } else if theta_x > panel.t1 {
            theta_x - panel.t1
        } else {
            0.0
        };
        if dist >= len {
            total += gauss16()
                .nodes_on(panel.t0, panel.t1)
                .zip(&panel.values)
                .map(|((t, w), v)| w * v * log_at(t))
                .sum::<f64>();
            continue;
        }
        let f = |t: f64| piece.weighted(panel, t);
        if theta_x > panel.t0 && theta_x < panel.t1 {
            total += graded(&f, &log_at, theta_x, panel.t0, inside, piece);
            total += graded(&f, &log_at, theta_x, panel.t1, inside, piece);
        } else if theta_x <= panel.t0 {
            total += graded(&f, &log_at, panel.t0, panel.t1, inside && theta_x == panel.t0, piece);
        } else {
            total += graded(&f, &log_at, panel.t1, panel.t0, inside && theta_x == panel.t1, piece);
        }
    }
    total
}

/// `∫ f(θ) log|z(θ) − x| dθ` between `from` and `to`, graded towards `from`.
/// When `singular` is set the integrand has its log singularity exactly at
/// `from`; the innermost piece then uses the exact integral of `log u`.
fn graded(
    f: &impl Fn(f64) -> f64,
    log_at: &impl Fn(f64) -> f64,
    from: f64,
    to: f64,
    singular: bool,
    piece: &SupportPiece,
) -> f64 {
    let span = to - from;
    if span == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut outer = 1.0;
    for _ in 0..GRADE_LEVELS {
        let inner = outer * GRADE_RATIO;
        let (a, b) = (from + span * inner, from + span * outer);
        // nodes would round onto the singular point; the sliver below covers the rest
        if a == from {
            break;
        }
        total += gauss10().nodes_on(a, b).map(|(t, w)| w * f(t) * log_at(t)).sum::<f64>();
        outer = inner;
    }
    let eps = (span * outer).abs();
    let sign = span.signum();
    if singular {
        // log|z(θ) − x| ≈ log(|z'(θx)| u) on the last sliver of width eps
        let slope = (piece.half() * from.sin()).abs();
        let fx = f(from);
        if fx != 0.0 && slope > 0.0 {
            total += sign * fx * eps * ((slope * eps).ln() - 1.0);
        }
    } else {
        let t = from + 0.5 * span * outer;
        let l = log_at(t);
        if l.is_finite() {
            total += sign * eps * f(t) * l;
        }
    }
    sign * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig1(x1: f64) -> SpectralParams {
        SpectralParams::new(1.0, 1.0, 0.9, x1).unwrap()
    }

    #[test]
    fn semicircle_fallback() {
        let sp = SpectralParams::new(1.5, 0.0, 0.4, 0.0).unwrap();
        let g = density_grid(&sp, 128).unwrap();
        assert_eq!(g.support.len(), 1);
        let r = SQRT_2 * 1.5;
        assert!((g.support[0].0 + r).abs() < 1e-4 && (g.support[0].1 - r).abs() < 1e-4);
        assert_relative_eq!(g.mass, 1.0, epsilon = 1e-10);
        for z in [-2.0, -0.3, 0.0, 1.1, 2.1] {
            assert!((g.rho_at(z) - semicircle(z, 1.5)).abs() < 1e-9);
        }
        assert!(density_at(0.0, &sp.with_x1(0.5)).is_err());
    }

    #[test]
    fn semicircle_potential_at_centre() {
        // ∫ log|z| dμ_sc = log(R/2) − 1/2 for radius R
        for b in [0.3, 1.0, 4.0] {
            let sp = SpectralParams::new(b, 0.0, 0.5, 0.0).unwrap();
            let g = density_grid(&sp, 128).unwrap();
            let r = SQRT_2 * b;
            assert_relative_eq!(g.log_potential(0.0), (r / 2.0).ln() - 0.5, epsilon = 1e-10);
            // outside the support, integrating the Stieltjes transform from the edge
            let x = 2.5 * r;
            let s = (x * x - r * r).sqrt();
            let want = (x * x - x * s) / (r * r) - 0.5 + ((x + s) / 2.0).ln();
            assert_relative_eq!(g.log_potential(x), want, epsilon = 1e-10);
        }
    }

    #[test]
    fn potential_is_continuous_across_panel_breaks() {
        // the centre of a symmetric support is a forced break
        let sp = SpectralParams::new(43.8, 2.3, 0.9, 0.0).unwrap();
        let g = density_grid(&sp, 128).unwrap();
        let at0 = g.log_potential(0.0);
        assert!(at0.is_finite());
        for dx in [1e-13, -1e-13, 1e-9, -1e-9, 1e-6] {
            let v = g.log_potential(dx);
            assert!((v - at0).abs() < 1e-8, "{dx}: {v} vs {at0}");
        }
    }

    #[test]
    fn density_is_normalised_and_symmetric() {
        let sp = fig1(0.0);
        let g = density_grid(&sp, 128).unwrap();
        assert!((g.mass - 1.0).abs() < 1e-8, "{}", g.mass);
        assert!((g.trapezoid_mass() - 1.0).abs() < 1e-3);
        for i in 0..200 {
            let z = -2.5 + 5.0 * i as f64 / 199.0;
            let (a, b) = (density_at(z, &sp).unwrap(), density_at(-z, &sp).unwrap());
            assert!((a - b).abs() <= 1e-8, "z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn density_vanishes_far_away() {
        let sp = fig1(1.7);
        let bound = SQRT_2 * 2.0 + 1.7 + 1.0;
        for z in [-bound - 0.1, -bound - 5.0, bound + 0.1, 40.0] {
            assert_eq!(density_at(z, &sp).unwrap(), 0.0, "z={z}");
        }
    }

    #[test]
    fn separate_regime_has_two_bulks() {
        let g = density_grid(&fig1(3.0), 128).unwrap();
        assert_eq!(g.support.len(), 2);
        assert_eq!(g.shape(1e-2), SupportShape::Separate);
        assert_eq!(density_grid(&fig1(0.5), 128).unwrap().shape(1e-2), SupportShape::Merged);
    }

    #[test]
    fn interpolant_matches_direct_density() {
        let sp = fig1(1.2);
        let g = density_grid(&sp, 64).unwrap();
        for i in 0..97 {
            let z = -3.5 + 5.0 * i as f64 / 96.0;
            let d = density_at(z, &sp).unwrap();
            assert!((g.rho_at(z) - d).abs() < 1e-8, "z={z}: {} vs {d}", g.rho_at(z));
        }
    }

    #[test]
    fn potential_far_field() {
        let g = density_grid(&fig1(0.0), 128).unwrap();
        let r = g.support.iter().fold(0.0f64, |m, s| m.max(s.0.abs()).max(s.1.abs()));
        for x in [100.0 * r, -100.0 * r] {
            assert!((g.log_potential(x) - x.abs().ln()).abs() < 1e-3);
        }
        // off-centre density: log|x| − m1/x − m2/(2x²) with the block shift −κ·x1
        let sp = fig1(0.8);
        let g = density_grid(&sp, 128).unwrap();
        let m1 = -0.9 * 0.8;
        let m2 = 0.5 + 0.9 * (0.5 + 0.64);
        for x in [60.0, -75.0] {
            let want = f64::ln(f64::abs(x)) - m1 / x - m2 / (2.0 * x * x);
            assert!((g.log_potential(x) - want).abs() < 1e-5, "{} vs {want}", g.log_potential(x));
        }
    }

    #[test]
    fn potential_is_continuous_across_edges() {
        let g = density_grid(&fig1(2.2), 128).unwrap();
        for &(a, c) in &g.support {
            for e in [a, c] {
                let d = 1e-7;
                let jump = (g.log_potential(e - d) - g.log_potential(e + d)).abs();
                assert!(jump < 1e-4, "edge {e}: {jump}");
            }
        }
    }

    #[test]
    fn potential_converges_under_refinement() {
        let sp = fig1(1.4);
        let coarse = density_grid_with(&sp, &GridConfig { panel_tol: 1e-9, ..Default::default() }).unwrap();
        let fine = density_grid_with(&sp, &GridConfig { panel_tol: 1e-13, scan_points: 2048, ..Default::default() }).unwrap();
        for x in [-3.0, -1.7, -0.2, 0.0, 0.3, 0.9, 2.0] {
            let (a, b) = (coarse.log_potential(x), fine.log_potential(x));
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn potential_matches_brute_force_quadrature() {
        let sp = fig1(0.6);
        let g = density_grid(&sp, 128).unwrap();
        // midpoint rule on a fine uniform grid, x placed between grid points
        for x in [-1.234_567, 0.456_789] {
            let (a, c) = (g.support[0].0, g.support.last().unwrap().1);
            let n = 400_000;
            let h = (c - a) / n as f64;
            let brute: f64 = (0..n)
                .map(|i| {
                    let z = a + (i as f64 + 0.5) * h;
                    g.rho_at(z) * (z - x).abs().ln() * h
                })
                .sum();
            assert!((g.log_potential(x) - brute).abs() < 1e-4, "{} {}", g.log_potential(x), brute);
        }
    }

    #[test]
    fn roots_satisfy_saddle_equations() {
        for (x1, z) in [(0.0, 0.3), (1.5, -1.0), (3.0, -2.5), (3.0, 0.2)] {
            let sp = fig1(x1);
            let roots = solve_quartic(&quartic_coeffs(z, &sp).unwrap()).unwrap();
            let floor = sp.kappa_prime() / 2.0;
            let mut checked = 0;
            for t in roots.iter().filter(|t| t.im.abs() > 1e-6 && t.norm_sqr() > floor) {
                let r = saddle_residual(Complex64::new(z, 0.0), *t, &sp).unwrap();
                assert!(r <= 1e-8, "x1={x1} z={z} t={t}: {r}");
                let rc = saddle_residual(Complex64::new(z, 0.0), t.conj(), &sp).unwrap();
                assert!((r - rc).abs() <= 1e-12);
                checked += 1;
            }
            assert!(checked > 0);
            let junk = saddle_residual(Complex64::new(z, 0.0), Complex64::new(0.77, 1.3), &sp).unwrap();
            assert!(junk > 1e-4);
        }
        let sp = fig1(0.0);
        assert!(matches!(
            saddle_residual(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), &sp),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn narrow_bulk_inside_wide_bulk() {
        // b ≪ b1: a spike of mass κ' sits on top of the block semicircle
        let sp = SpectralParams::new(0.003_035_8, 10f64.sqrt(), 0.5, 0.0).unwrap();
        let g = density_grid(&sp, 64).unwrap();
        assert_eq!(g.support.len(), 1);
        assert!((g.mass - 1.0).abs() < 1e-8, "{}", g.mass);
        let n = 4000;
        let h = 0.01 / n as f64;
        let spike: f64 = (0..n).map(|i| g.rho_at(-0.005 + (i as f64 + 0.5) * h) * h).sum();
        // the wide bulk contributes about ρ(0)·0.01 ≈ 1e-3
        assert!((spike - 0.5).abs() < 3e-3, "{spike}");
    }

    #[test]
    fn branch_selection_agrees_with_modulus_rule() {
        // away from clustered roots the physical root is also the largest
        // |Im t| among roots with |t|² > κ'b²/2
        for (x1, z) in [(0.0, 0.3), (1.5, -1.0), (3.0, -2.5), (3.0, 0.2), (0.7, 2.9)] {
            let sp = fig1(x1);
            let roots = solve_quartic(&quartic_coeffs(z, &sp).unwrap()).unwrap();
            let floor = sp.kappa_prime() / 2.0;
            let im = roots.iter().filter(|t| t.norm_sqr() > floor).map(|t| t.im.abs()).fold(0.0, f64::max);
            let want = 2.0 * im / PI;
            let got = density_at(z, &sp).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "x1={x1} z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let g = density_grid(&fig1(0.0), 64).unwrap();
        assert!(matches!(log_potential(0.1, &fig1(0.1), &g), Err(Error::Consistency(_))));
    }
}
