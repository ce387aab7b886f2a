//! The complexity functional `Θ(u_D, u_G)` and its index-resolved variants.
//!
//! `Φ(x, x1) = x²/(2s²) + x1²/(2s1²) − ∫ log|z − x| dμ_{x1}(z)`, and
//! `Θ = K − min_B Φ`. Index variants add the large-deviation penalties of
//! the two Hessian blocks to `Φ`.

mod cache;
mod minimize;
mod rate;

pub use cache::{quantize_x1, CacheStats, DensityCache, X1_QUANTUM};
pub use minimize::{minimize_over_b, MinimizerConfig, Minimum, Objective, Row, SearchBox, Section, Table};
pub use rate::{rate_i1, RateFunctionValue};

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::SQRT_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::{derive_constants, DerivedConstants, HalfPlaneRegion, ModelParams};
use crate::rmt::SpectralParams;
use crate::spectral::GridConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEvaluation {
    pub x: f64,
    /// The `x1` the density was built at (quantised).
    pub x1: f64,
    pub phi: f64,
    pub log_potential_part: f64,
    pub quadratic_part: f64,
}

/// `Φ(x, x1)` using `cache` for the density of `x1`.
pub fn big_phi(x: f64, x1: f64, params: &ModelParams, cache: &DensityCache) -> Result<PhiEvaluation> {
    let c = derive_constants(params)?;
    phi_with(x, x1, params, &c, cache)
}

fn phi_with(x: f64, x1: f64, params: &ModelParams, c: &DerivedConstants, cache: &DensityCache) -> Result<PhiEvaluation> {
    if !(x.is_finite() && x1.is_finite()) {
        return Err(Error::Domain("x and x1 must be finite".into()));
    }
    let grid = cache.get(&SpectralParams::from_model(params, x1)?)?;
    let x1 = grid.params.x1;
    let quadratic_part = x * x / (2.0 * c.s2) + x1 * x1 / (2.0 * c.s1_2);
    let log_potential_part = grid.log_potential(x);
    Ok(PhiEvaluation { x, x1, phi: quadratic_part - log_potential_part, log_potential_part, quadratic_part })
}

/// Options shared by every `Θ` computation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThetaConfig {
    pub grid: GridConfig,
    pub minimizer: MinimizerConfig,
}

/// `Φ` (plus index penalties) for one parameter set, with the coarse
/// minimisation table cached so that many regions share it.
pub struct Landscape {
    params: ModelParams,
    constants: DerivedConstants,
    cache: Arc<DensityCache>,
    k_d: u32,
    k_g: u32,
    tables: Mutex<HashMap<(usize, Option<u64>), Arc<Table>>>,
}

impl Landscape {
    pub fn new(params: ModelParams, cache: Arc<DensityCache>) -> Result<Self> {
        let constants = derive_constants(&params)?;
        Ok(Landscape { params, constants, cache, k_d: 0, k_g: 0, tables: Mutex::new(HashMap::new()) })
    }

    /// Same parameters and cache, with `k_d`/`k_g` negative Hessian eigenvalues
    /// forced outside the respective bulks.
    pub fn with_index(&self, k_d: u32, k_g: u32) -> Landscape {
        Landscape {
            params: self.params,
            constants: self.constants,
            cache: Arc::clone(&self.cache),
            k_d,
            k_g,
            tables: Mutex::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.constants
    }

    pub fn cache(&self) -> &Arc<DensityCache> {
        &self.cache
    }

    pub fn index(&self) -> (u32, u32) {
        (self.k_d, self.k_g)
    }

    pub fn phi(&self, x: f64, x1: f64) -> Result<PhiEvaluation> {
        phi_with(x, x1, &self.params, &self.constants, &self.cache)
    }

    /// Edges beyond which the extreme eigenvalue of each block leaves its bulk.
    fn edges(&self) -> (f64, f64) {
        let c = &self.constants;
        let e_g = (2.0 * c.kappa_prime).sqrt() * c.b;
        let e_d = (2.0 * self.params.kappa * (c.b * c.b + c.b1 * c.b1)).sqrt();
        (e_g, e_d)
    }

    fn penalty(&self, x: f64, x1: f64) -> f64 {
        let (e_g, e_d) = self.edges();
        rate::penalty(self.k_g, self.constants.kappa_prime, x, e_g)
            + rate::penalty(self.k_d, self.params.kappa, -(x + x1), e_d)
    }

    pub fn region(&self, u_d: f64, u_g: f64) -> Result<HalfPlaneRegion> {
        HalfPlaneRegion::new(&self.params, u_d, u_g)
    }

    pub fn minimize(&self, region: &HalfPlaneRegion, cfg: &MinimizerConfig) -> Result<Minimum> {
        minimize_over_b(self, region, cfg)
    }

    /// `K − min_B (Φ + penalties)`. With a nonzero index an objective that is
    /// `+∞` throughout `B` gives `−∞`.
    pub fn theta(&self, u_d: f64, u_g: f64, cfg: &MinimizerConfig) -> Result<ThetaPoint> {
        let region = self.region(u_d, u_g)?;
        match self.minimize(&region, cfg) {
            Ok(m) => Ok(ThetaPoint { theta: self.constants.k - m.value, x: m.x, x1: m.x1 }),
            Err(Error::Infeasible(_)) if (self.k_d, self.k_g) != (0, 0) => {
                Ok(ThetaPoint { theta: f64::NEG_INFINITY, x: f64::NAN, x1: f64::NAN })
            }
            Err(e) => Err(e),
        }
    }

    /// Whether `Θ(u_d, u_g) > 0`, stopping at the first witness.
    pub fn positive(&self, u_d: f64, u_g: f64, cfg: &MinimizerConfig) -> Result<bool> {
        let cfg = MinimizerConfig { stop_below: Some(self.constants.k), ..*cfg };
        Ok(self.theta(u_d, u_g, &cfg)?.theta > 0.0)
    }

    /// Lower bound of `Φ` split as `lx(x) + l1(x1)`, using
    /// `∫ log|z − x| dμ ≤ log(|x| + c) + log(1 + |x1|)`.
    fn lower_bounds(&self) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64) {
        let c = &self.constants;
        let reach = (SQRT_2 * (c.b + c.b1)).max(1.0);
        let (s2, s1_2) = (c.s2, c.s1_2);
        (
            move |x: f64| x * x / (2.0 * s2) - (x.abs() + reach).ln(),
            move |x1: f64| x1 * x1 / (2.0 * s1_2) - (1.0 + x1.abs()).ln(),
        )
    }
}

/// Smallest `r ≥ start` with `f(r) ≥ level`, for `f` increasing on `[start, ∞)`.
fn radius(f: impl Fn(f64) -> f64, start: f64, level: f64) -> f64 {
    let (mut lo, mut hi) = (start, start.max(1.0));
    while f(hi) < level {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < level { lo = mid } else { hi = mid }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

impl Objective for Landscape {
    fn section(&self, x1: f64) -> Result<Section<'_>> {
        let grid = self.cache.get(&SpectralParams::from_model(&self.params, x1)?)?;
        let x1 = grid.params.x1;
        let q1 = x1 * x1 / (2.0 * self.constants.s1_2);
        let s2 = self.constants.s2;
        let (e_g, e_d) = self.edges();
        let mut features: Vec<f64> = grid.support.iter().flat_map(|&(a, b)| [a, b]).collect();
        let (lo, hi) = (features[0], features[features.len() - 1]);
        let w = hi - lo;
        let mut dense = vec![(lo - 0.5 * w, hi + 0.5 * w)];
        if self.k_g > 0 {
            features.extend([-e_g, e_g]);
            dense.push((-1.5 * e_g, 1.5 * e_g));
        }
        if self.k_d > 0 {
            features.extend([-x1 - e_d, -x1 + e_d]);
            dense.push((-x1 - 1.5 * e_d, -x1 + 1.5 * e_d));
        }
        let eval = move |x: f64| x * x / (2.0 * s2) + q1 - grid.log_potential(x) + self.penalty(x, x1);
        Ok(Section::new(x1, eval).with_structure(dense, features))
    }

    /// Reference level from a handful of points on `x1 = 0`, raised to cover
    /// everything below `K + 1`, turned into a box via [`Self::lower_bounds`].
    fn search_box(&self) -> Result<SearchBox> {
        let c = &self.constants;
        let (s, s1) = (c.s2.sqrt(), c.s1_2.sqrt());
        let (e_g, e_d) = self.edges();
        let e = e_g.max(e_d);
        let row = self.section(0.0)?;
        let reference = [0.0, 0.5 * s, s, 2.0 * s, 1.05 * e, 2.0 * e]
            .into_iter()
            .flat_map(|x| [x, -x])
            .map(|x| row.value(x))
            .fold(f64::INFINITY, f64::min);
        if !reference.is_finite() {
            return Err(Error::Infeasible("objective is +inf at every reference point".into()));
        }
        let level = reference + 5f64.max(c.k + 1.0 - reference);
        let (lx, l1) = self.lower_bounds();
        let reach = (SQRT_2 * (c.b + c.b1)).max(1.0);
        let x_star = 0.5 * (-reach + (reach * reach + 4.0 * c.s2).sqrt());
        let x1_star = 0.5 * (-1.0 + (1.0 + 4.0 * c.s1_2).sqrt());
        let rx = radius(&lx, x_star, level - l1(x1_star));
        let r1 = radius(&l1, x1_star, level - lx(x_star));
        debug_assert!(rx >= s.min(x_star) && r1 >= s1.min(x1_star));
        Ok(SearchBox { x: (-rx, rx), x1: (-r1, r1) })
    }

    fn snap(&self, x1: f64) -> f64 {
        quantize_x1(x1)
    }

    fn table(&self, cfg: &MinimizerConfig) -> Result<Arc<Table>> {
        let key = (cfg.grid, cfg.jitter_seed);
        if let Some(t) = self.tables.lock().get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(Table::build(self, cfg)?);
        Ok(Arc::clone(self.tables.lock().entry(key).or_insert(table)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: f64,
    pub x: f64,
    pub x1: f64,
}

fn fresh_landscape(params: &ModelParams, cfg: &ThetaConfig) -> Result<Landscape> {
    Landscape::new(*params, Arc::new(DensityCache::new(cfg.grid)))
}

/// `Θ(u_D, u_G)` for one parameter set.
pub fn theta(u_d: f64, u_g: f64, params: &ModelParams, cfg: &ThetaConfig) -> Result<f64> {
    Ok(fresh_landscape(params, cfg)?.theta(u_d, u_g, &cfg.minimizer)?.theta)
}

/// `Θ_{k_D, k_G}(u_D, u_G)`; `−∞` when the penalised objective is infinite on `B`.
pub fn theta_index(u_d: f64, u_g: f64, k_d: u32, k_g: u32, params: &ModelParams, cfg: &ThetaConfig) -> Result<f64> {
    let l = fresh_landscape(params, cfg)?.with_index(k_d, k_g);
    Ok(l.theta(u_d, u_g, &cfg.minimizer)?.theta)
}

/// `Θ` on a grid; `theta[i][j]` is at `(u_d[i], u_g[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySurface {
    pub u_d: Vec<f64>,
    pub u_g: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub argmin: Vec<Vec<(f64, f64)>>,
    pub params: ModelParams,
    pub k_d: u32,
    pub k_g: u32,
    /// Cells whose minimisation failed; their `theta` is NaN.
    pub errors: Vec<Vec<Option<String>>>,
}

impl ComplexitySurface {
    /// Largest violation of monotonicity (nondecreasing in both bounds).
    pub fn monotonicity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.u_d.len() {
            for j in 0..self.u_g.len() {
                let t = self.theta[i][j];
                if i + 1 < self.u_d.len() {
                    worst = worst.max(gap(t, self.theta[i + 1][j]));
                }
                if j + 1 < self.u_g.len() {
                    worst = worst.max(gap(t, self.theta[i][j + 1]));
                }
            }
        }
        worst
    }
}

/// How much `b` falls short of `a`, treating equal infinities as equal.
fn gap(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).max(0.0) }
}

/// `Θ` (or `Θ_k` for an indexed landscape) on a grid. A cell that fails is
/// recorded with NaN and its error rather than aborting the surface.
pub fn theta_surface(landscape: &Landscape, u_d: &[f64], u_g: &[f64], cfg: &MinimizerConfig) -> Result<ComplexitySurface> {
    check_grid(u_d)?;
    check_grid(u_g)?;
    let cells = cells(u_d.len(), u_g.len());
    let points: Vec<Result<ThetaPoint>> = cells.par_iter().map(|&(i, j)| landscape.theta(u_d[i], u_g[j], cfg)).collect();
    let mut theta = vec![vec![f64::NAN; u_g.len()]; u_d.len()];
    let mut argmin = vec![vec![(f64::NAN, f64::NAN); u_g.len()]; u_d.len()];
    let mut errors = vec![vec![None; u_g.len()]; u_d.len()];
    for (&(i, j), p) in cells.iter().zip(points) {
        match p {
            Ok(p) => {
                theta[i][j] = p.theta;
                argmin[i][j] = (p.x, p.x1);
            }
            Err(e) => errors[i][j] = Some(e.to_string()),
        }
    }
    let (k_d, k_g) = landscape.index();
    Ok(ComplexitySurface {
        u_d: u_d.to_vec(),
        u_g: u_g.to_vec(),
        theta,
        argmin,
        params: landscape.params,
        k_d,
        k_g,
        errors,
    })
}

fn cells(n: usize, m: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect()
}

fn check_grid(v: &[f64]) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("grid must be nonempty, finite and strictly increasing".into()));
    }
    Ok(())
}

/// Largest index with positive complexity per cell, `−1` when none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMaps {
    pub u_d: Vec<f64>,
    pub u_g: Vec<f64>,
    pub k_max: u32,
    pub k_d_max: Vec<Vec<i32>>,
    pub k_g_max: Vec<Vec<i32>>,
    /// Cells where some `Θ_k` failed; both entries there are `−1`.
    pub errors: Vec<Vec<Option<String>>>,
}

pub fn max_index_map(landscape: &Landscape, u_d: &[f64], u_g: &[f64], k_max: u32, cfg: &MinimizerConfig) -> Result<IndexMaps> {
    check_grid(u_d)?;
    check_grid(u_g)?;
    let d: Vec<Landscape> = (0..=k_max).map(|k| landscape.with_index(k, 0)).collect();
    let g: Vec<Landscape> = (0..=k_max).map(|k| landscape.with_index(0, k)).collect();
    // Θ_k is nonincreasing in k, so scan upward and stop at the first k with Θ ≤ 0.
    let largest = |family: &[Landscape], ud: f64, ug: f64| -> Result<i32> {
        let mut best = -1;
        for (k, l) in family.iter().enumerate() {
            if !l.positive(ud, ug, cfg)? {
                break;
            }
            best = k as i32;
        }
        Ok(best)
    };
    let cells = cells(u_d.len(), u_g.len());
    let values: Vec<Result<(i32, i32)>> = cells
        .par_iter()
        .map(|&(i, j)| Ok((largest(&d, u_d[i], u_g[j])?, largest(&g, u_d[i], u_g[j])?)))
        .collect();
    let mut k_d_max = vec![vec![-1; u_g.len()]; u_d.len()];
    let mut k_g_max = k_d_max.clone();
    let mut errors = vec![vec![None; u_g.len()]; u_d.len()];
    for (&(i, j), v) in cells.iter().zip(values) {
        match v {
            Ok((a, b)) => {
                k_d_max[i][j] = a;
                k_g_max[i][j] = b;
            }
            Err(e) => errors[i][j] = Some(e.to_string()),
        }
    }
    Ok(IndexMaps { u_d: u_d.to_vec(), u_g: u_g.to_vec(), k_max, k_d_max, k_g_max, errors })
}

/// Which loss bound a threshold refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Discriminator,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarthetaConfig {
    /// Value of the other bound while one is varied.
    pub cap: f64,
    pub tol: f64,
    /// Initial bracket; expanded by doubling until it brackets the sign change.
    pub bracket: (f64, f64),
    pub max_expansions: u32,
}

impl Default for VarthetaConfig {
    fn default() -> Self {
        VarthetaConfig { cap: 10.0, tol: 1e-3, bracket: (-1.0, 1.0), max_expansions: 40 }
    }
}

/// Smallest bound at which `Θ` turns positive, with the other bound at the cap.
pub fn vartheta(landscape: &Landscape, player: Player, vc: &VarthetaConfig, cfg: &MinimizerConfig) -> Result<f64> {
    if !(vc.tol > 0.0 && vc.cap.is_finite() && vc.bracket.0 < vc.bracket.1) {
        return Err(Error::Domain("vartheta needs tol > 0, a finite cap and lo < hi".into()));
    }
    let pred = |u: f64| match player {
        Player::Discriminator => landscape.positive(u, vc.cap, cfg),
        Player::Generator => landscape.positive(vc.cap, u, cfg),
    };
    let (mut lo, mut hi) = vc.bracket;
    let mut expansions = 0;
    while pred(lo)? {
        if expansions == vc.max_expansions {
            return Err(Error::Bracket(format!("Θ > 0 down to u = {lo}")));
        }
        let w = hi - lo;
        hi = lo;
        lo -= 2.0 * w;
        expansions += 1;
    }
    while !pred(hi)? {
        if expansions == vc.max_expansions {
            return Err(Error::Bracket(format!("Θ <= 0 up to u = {hi}")));
        }
        let w = hi - lo;
        lo = hi;
        hi += 2.0 * w;
        expansions += 1;
    }
    while hi - lo > vc.tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? { hi = mid } else { lo = mid }
    }
    Ok(0.5 * (lo + hi))
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    SigmaZ,
    Kappa,
}

impl SweepParam {
    pub fn apply(self, base: &ModelParams, value: f64) -> Result<ModelParams> {
        let p = match self {
            SweepParam::SigmaZ => ModelParams { sigma_z: value, ..*base },
            SweepParam::Kappa => ModelParams { kappa: value, ..*base },
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub vartheta_d: Option<f64>,
    pub vartheta_g: Option<f64>,
    pub error: Option<String>,
}

/// `ϑ_D` and `ϑ_G` across values of one parameter. Failures are reported
/// per row; each row depends only on its own value.
pub fn sweep(
    base: &ModelParams,
    param: SweepParam,
    values: &[f64],
    cache: &Arc<DensityCache>,
    vc: &VarthetaConfig,
    cfg: &MinimizerConfig,
) -> Vec<SweepRow> {
    values
        .par_iter()
        .map(|&value| {
            let run = || -> Result<(f64, f64)> {
                let l = Landscape::new(param.apply(base, value)?, Arc::clone(cache))?;
                Ok((vartheta(&l, Player::Discriminator, vc, cfg)?, vartheta(&l, Player::Generator, vc, cfg)?))
            };
            match run() {
                Ok((d, g)) => SweepRow { value, vartheta_d: Some(d), vartheta_g: Some(g), error: None },
                Err(e) => SweepRow { value, vartheta_d: None, vartheta_g: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}
