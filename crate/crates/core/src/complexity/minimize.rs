//! Minimisation of a 2-D objective over the half-plane region `B`.
//!
//! The objective is queried one `x1` row at a time ([`Section`]), because
//! for the landscape the expensive part (the density grid) depends only on
//! `x1`. The search has two stages:
//!
//! 1. a coarse table of rows over a box that provably contains every point
//!    that could beat the reference level, reused across regions, plus the
//!    two `∂B` endpoints of every row;
//! 2. restarts from the best rows, each polishing the profile
//!    `x1 ↦ min_x f(x, x1)` with Brent's method in `x1` and a sampled-then-
//!    Brent inner minimisation in `x`.
//!
//! Infeasible points carry `+∞`.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::HalfPlaneRegion;
use crate::quad::{brent_min, brent_min_abs};

/// Axis-aligned box in the `(x, x1)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub x: (f64, f64),
    pub x1: (f64, f64),
}

/// The objective restricted to one `x1`.
pub struct Section<'a> {
    pub x1: f64,
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
    /// Intervals where the objective has fine structure and needs dense sampling.
    pub dense: Vec<(f64, f64)>,
    /// Kinks and barrier edges.
    pub features: Vec<f64>,
}

impl<'a> Section<'a> {
    pub fn new(x1: f64, eval: impl Fn(f64) -> f64 + Send + Sync + 'a) -> Self {
        Section { x1, eval: Box::new(eval), dense: Vec::new(), features: Vec::new() }
    }

    pub fn with_structure(mut self, dense: Vec<(f64, f64)>, features: Vec<f64>) -> Self {
        self.dense = dense;
        self.features = features;
        self
    }

    /// Value at `x`; NaN is reported as `+∞`.
    pub fn value(&self, x: f64) -> f64 {
        let v = (self.eval)(x);
        if v.is_nan() { f64::INFINITY } else { v }
    }
}

pub trait Objective: Sync {
    fn section(&self, x1: f64) -> Result<Section<'_>>;

    /// A box outside of which the objective cannot beat the values that
    /// matter to the caller.
    fn search_box(&self) -> Result<SearchBox>;

    /// Lattice the objective is evaluated on in `x1`.
    fn snap(&self, x1: f64) -> f64 {
        x1
    }

    /// Coarse table for `cfg`; implementors may cache it.
    fn table(&self, cfg: &MinimizerConfig) -> Result<Arc<Table>> {
        Table::build(self, cfg).map(Arc::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerConfig {
    /// Rows and columns of the coarse table.
    pub grid: usize,
    pub restarts: usize,
    /// Uniform samples per inner minimisation.
    pub inner_samples: usize,
    /// Absolute tolerance on `x1` in the profile polish.
    pub x1_tol: f64,
    /// Stop as soon as a feasible value below this is found.
    pub stop_below: Option<f64>,
    /// Randomise the coarse grid offsets with this seed.
    pub jitter_seed: Option<u64>,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            grid: 200,
            restarts: 5,
            inner_samples: 64,
            x1_tol: 1e-5,
            stop_below: None,
            jitter_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: f64,
    pub x1: f64,
    pub value: f64,
    pub evaluations: u64,
    /// Set when the search stopped at `stop_below`.
    pub early_exit: bool,
}

pub struct Row {
    pub x1: f64,
    /// `(x, value)` sorted by `x`.
    pub samples: Vec<(f64, f64)>,
}

pub struct Table {
    pub search_box: SearchBox,
    pub rows: Vec<Row>,
}

fn offsets(cfg: &MinimizerConfig) -> (f64, f64) {
    match cfg.jitter_seed {
        Some(seed) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (rng.random::<f64>(), rng.random::<f64>())
        }
        None => (0.0, 0.0),
    }
}

/// `n` points spanning `[lo, hi]`; with a jitter `u ∈ (0, 1)` the lattice is
/// shifted by `u` of a spacing and the two ends are kept.
fn lattice(lo: f64, hi: f64, n: usize, u: f64) -> Vec<f64> {
    let n = n.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * (i as f64 + u)).filter(|&x| x <= hi).collect();
    if u > 0.0 {
        v.insert(0, lo);
    }
    v
}

/// Sample locations for one section on `[lo, hi]`.
fn sample_xs(section: &Section, lo: f64, hi: f64, n: usize, u: f64) -> Vec<f64> {
    let mut xs = lattice(lo, hi, n, u);
    xs.push(hi);
    let span = section.dense.iter().fold(0.0f64, |m, d| m.max(d.1 - d.0));
    for &(a, b) in &section.dense {
        let (a, b) = (a.max(lo), b.min(hi));
        if a < b {
            xs.extend(lattice(a, b, 33, 0.0));
        }
    }
    for &f in &section.features {
        for d in [0.0, 1e-8, 1e-5, 1e-3, 1e-2] {
            for x in [f - d * span, f + d * span] {
                if x >= lo && x <= hi {
                    xs.push(x);
                }
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

impl Table {
    pub fn build<O: Objective + ?Sized>(obj: &O, cfg: &MinimizerConfig) -> Result<Table> {
        use rayon::prelude::*;
        let search_box = obj.search_box()?;
        let (ux, u1) = offsets(cfg);
        let x1s: Vec<f64> = lattice(search_box.x1.0, search_box.x1.1, cfg.grid, u1)
            .into_iter()
            .map(|x1| obj.snap(x1))
            .collect();
        let rows = x1s
            .par_iter()
            .map(|&x1| {
                let section = obj.section(x1)?;
                let xs = sample_xs(&section, search_box.x.0, search_box.x.1, cfg.grid, ux);
                let samples = xs.into_iter().map(|x| (x, section.value(x))).collect();
                Ok(Row { x1: section.x1, samples })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { search_box, rows })
    }
}

struct Search<'a, O: Objective + ?Sized> {
    obj: &'a O,
    region: &'a HalfPlaneRegion,
    cfg: &'a MinimizerConfig,
    /// x-limits used for the inner minimisation
    x_lim: (f64, f64),
    evaluations: AtomicU64,
}

/// Early-exit signal carried through the search.
enum Stop {
    Found(Minimum),
    Failed(Error),
}

impl From<Error> for Stop {
    fn from(e: Error) -> Self {
        Stop::Failed(e)
    }
}

impl<O: Objective + ?Sized> Search<'_, O> {
    fn count(&self, n: usize) {
        self.evaluations.fetch_add(n as u64, Ordering::Relaxed);
    }

    fn minimum(&self, x: f64, x1: f64, value: f64, early_exit: bool) -> Minimum {
        Minimum { x, x1, value, evaluations: self.evaluations.load(Ordering::Relaxed), early_exit }
    }

    fn check(&self, x: f64, x1: f64, value: f64) -> std::result::Result<(), Stop> {
        match self.cfg.stop_below {
            Some(level) if value < level => Err(Stop::Found(self.minimum(x, x1, value, true))),
            _ => Ok(()),
        }
    }

    /// Feasible `x` for a row, clipped to the search limits.
    fn row_range(&self, x1: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.region.x_range(x1)?;
        let (lo, hi) = (lo.max(self.x_lim.0), hi.min(self.x_lim.1));
        (lo <= hi).then_some((lo, hi))
    }

    /// `min_x f(x, x1)` over the feasible row.
    fn inner(&self, x1: f64) -> std::result::Result<(f64, f64, f64), Stop> {
        let x1 = self.obj.snap(x1);
        let Some((lo, hi)) = self.row_range(x1) else {
            return Ok((f64::NAN, x1, f64::INFINITY));
        };
        let section = self.obj.section(x1)?;
        let x1 = section.x1;
        let xs = sample_xs(&section, lo, hi, self.cfg.inner_samples, 0.0);
        let mut vals = Vec::with_capacity(xs.len());
        for &x in &xs {
            let v = section.value(x);
            self.check(x, x1, v)?;
            vals.push(v);
        }
        self.count(xs.len());
        let mut best = (xs[0], vals[0]);
        for (&x, &v) in xs.iter().zip(&vals) {
            if v < best.1 {
                best = (x, v);
            }
        }
        // refine the two lowest local minima between their neighbours
        let mut local: Vec<usize> = (0..xs.len())
            .filter(|&i| {
                vals[i].is_finite()
                    && (i == 0 || vals[i] <= vals[i - 1])
                    && (i + 1 == xs.len() || vals[i] <= vals[i + 1])
            })
            .collect();
        local.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        for &i in local.iter().take(2) {
            let (a, b) = (xs[i.saturating_sub(1)], xs[(i + 1).min(xs.len() - 1)]);
            if b <= a {
                continue;
            }
            let mut n = 0;
            let tol = 1e-10;
            let (x, v) = brent_min(
                |x| {
                    n += 1;
                    section.value(x)
                },
                a,
                b,
                tol,
                100,
            );
            self.count(n);
            if v < best.1 && x >= lo && x <= hi {
                best = (x, v);
                self.check(x, x1, v)?;
            }
        }
        Ok((best.0, x1, best.1))
    }

    /// Profile polish around a starting row.
    fn polish(&self, start: f64, half_width: f64, limits: (f64, f64)) -> std::result::Result<(f64, f64, f64), Stop> {
        let mut best = self.inner(start)?;
        if limits.0 >= limits.1 {
            return Ok(best);
        }
        // the lower limit is a genuine corner of B; look at it directly
        let corner = self.inner(limits.0)?;
        if corner.2 < best.2 {
            best = corner;
        }
        let mut centre = start;
        for _ in 0..8 {
            let a = (centre - half_width).max(limits.0);
            let b = (centre + half_width).min(limits.1);
            if b <= a {
                break;
            }
            let mut failure = None;
            let mut seen: Option<(f64, f64, f64)> = None;
            let (x1, _) = brent_min_abs(
                |x1| {
                    if failure.is_some() {
                        return f64::INFINITY;
                    }
                    match self.inner(x1) {
                        Ok(r) => {
                            if seen.is_none_or(|s| r.2 < s.2) {
                                seen = Some(r);
                            }
                            r.2
                        }
                        Err(s) => {
                            failure = Some(s);
                            f64::INFINITY
                        }
                    }
                },
                a,
                b,
                0.0,
                self.cfg.x1_tol,
                60,
            );
            if let Some(s) = failure {
                return Err(s);
            }
            if let Some(r) = seen {
                if r.2 < best.2 {
                    best = r;
                }
            }
            // re-centre when the minimum sits on a soft edge of the bracket
            let tol = 4.0 * self.cfg.x1_tol;
            let soft_lo = a > limits.0 && x1 - a < tol;
            let soft_hi = b < limits.1 && b - x1 < tol;
            if !(soft_lo || soft_hi) {
                break;
            }
            centre = x1;
        }
        Ok(best)
    }
}

/// Minimum of `obj` over `region`.
pub fn minimize_over_b<O: Objective + ?Sized>(obj: &O, region: &HalfPlaneRegion, cfg: &MinimizerConfig) -> Result<Minimum> {
    let table = obj.table(cfg)?;
    let sbox = table.search_box;
    match search(obj, region, cfg, &table, sbox) {
        Ok(m) => Ok(m),
        Err(Stop::Found(m)) => Ok(m),
        Err(Stop::Failed(e)) => Err(e),
    }
}

fn search<O: Objective + ?Sized>(
    obj: &O,
    region: &HalfPlaneRegion,
    cfg: &MinimizerConfig,
    table: &Table,
    sbox: SearchBox,
) -> std::result::Result<Minimum, Stop> {
    let mut s = Search { obj, region, cfg, x_lim: sbox.x, evaluations: AtomicU64::new(0) };

    // stage 1: table rows restricted to B, plus both row endpoints
    let mut rows: Vec<(f64, f64, f64, usize)> = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let Some((lo, hi)) = s.row_range(row.x1) else { continue };
        let mut best = (f64::NAN, f64::INFINITY);
        for &(x, v) in &row.samples {
            if x >= lo && x <= hi && v < best.1 {
                best = (x, v);
            }
        }
        let section = obj.section(row.x1)?;
        for x in [lo, hi] {
            let v = section.value(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        s.count(2);
        s.check(best.0, row.x1, best.1)?;
        rows.push((best.1, best.0, row.x1, i));
    }
    let spacing = if table.rows.len() > 1 {
        (sbox.x1.1 - sbox.x1.0) / (table.rows.len() - 1) as f64
    } else {
        1.0
    };

    let mut limits = (region.x1_floor(region.x_max.min(sbox.x.1)).max(sbox.x1.0), sbox.x1.1);
    if !rows.iter().any(|r| r.0.is_finite()) {
        // B misses the box: search a box-sized window at the corner of B instead
        let width = sbox.x.1 - sbox.x.0;
        let height = sbox.x1.1 - sbox.x1.0;
        s.x_lim = (region.x_max - width, region.x_max);
        let base = region.x1_floor(region.x_max);
        limits = (base, base + height);
        rows.clear();
        for (i, x1) in lattice(limits.0, limits.1, cfg.grid.min(50), 0.0).into_iter().enumerate() {
            let (x, x1, v) = s.inner(x1)?;
            rows.push((v, x, x1, i));
        }
    }
    let Some(first) = rows.iter().filter(|r| r.0.is_finite()).min_by(|a, b| a.0.total_cmp(&b.0)).copied() else {
        return Err(Stop::Failed(Error::Infeasible("objective is +inf at every sampled point of B".into())));
    };
    let mut best = (first.1, first.2, first.0);

    // stage 2: one restart per basin of the row profile, best basins first
    let mut basins: Vec<(f64, f64)> = (0..rows.len())
        .filter(|&i| {
            let v = rows[i].0;
            v.is_finite() && (i == 0 || v <= rows[i - 1].0) && (i + 1 == rows.len() || v <= rows[i + 1].0)
        })
        .map(|i| (rows[i].0, rows[i].2))
        .collect();
    basins.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(_, x1) in basins.iter().take(cfg.restarts) {
        let (x, x1, v) = s.polish(x1, spacing, limits)?;
        if v < best.2 {
            best = (x, x1, v);
        }
    }
    Ok(s.minimum(best.0, best.1, best.2, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `x²/(2a) + x1²/(2c)` on a fixed box.
    struct Quadratic {
        a: f64,
        c: f64,
    }

    impl Objective for Quadratic {
        fn section(&self, x1: f64) -> Result<Section<'_>> {
            let q = x1 * x1 / (2.0 * self.c);
            Ok(Section::new(x1, move |x| x * x / (2.0 * self.a) + q))
        }
        fn search_box(&self) -> Result<SearchBox> {
            Ok(SearchBox { x: (-20.0, 20.0), x1: (-20.0, 20.0) })
        }
    }

    fn cfg() -> MinimizerConfig {
        MinimizerConfig { grid: 60, ..Default::default() }
    }

    #[test]
    fn unconstrained_quadratic() {
        let q = Quadratic { a: 2.0, c: 0.5 };
        let region = HalfPlaneRegion::from_constraints(5.0, 0.3, 5.0).unwrap();
        let m = minimize_over_b(&q, &region, &cfg()).unwrap();
        assert!(m.value.abs() < 1e-12 && m.x.abs() < 1e-5 && m.x1.abs() < 1e-5, "{m:?}");
    }

    /// Weighted projection of the origin onto `{x ≤ xm} ∩ {x1 ≥ −σx − o}`.
    fn projection(a: f64, c: f64, xm: f64, sl: f64, o: f64) -> (f64, f64, f64) {
        let f = |x: f64, x1: f64| x * x / (2.0 * a) + x1 * x1 / (2.0 * c);
        let mut cands = Vec::new();
        if 0.0 <= xm && 0.0 >= -o {
            cands.push((0.0, 0.0));
        }
        // on the sloped line: x1 = −σx − o, minimise x²/a + (σx + o)²/c
        let x = -(sl * o / c) / (1.0 / a + sl * sl / c);
        if x <= xm {
            cands.push((x, -sl * x - o));
        }
        // on x = xm with x1 free (x1 = 0 if feasible, else the corner)
        let x1 = 0f64.max(-sl * xm - o);
        cands.push((xm, x1));
        cands
            .into_iter()
            .map(|(x, x1)| (x, x1, f(x, x1)))
            .min_by(|p, q| p.2.total_cmp(&q.2))
            .unwrap()
    }

    #[test]
    fn constrained_minimum_is_the_projection() {
        for &(xm, sl, o) in &[(-2.0, 0.5, 1.0), (3.0, 0.7, -2.5), (-1.5, 2.0, -4.0), (4.0, 0.1, -0.3)] {
            let (a, c) = (1.5, 0.8);
            let region = HalfPlaneRegion::from_constraints(xm, sl, o).unwrap();
            let m = minimize_over_b(&Quadratic { a, c }, &region, &cfg()).unwrap();
            let (px, px1, pv) = projection(a, c, xm, sl, o);
            assert!(region.contains(m.x, m.x1), "{m:?}");
            assert!((m.value - pv).abs() < 1e-8, "{m:?} vs ({px}, {px1}, {pv})");
            assert!((m.x - px).abs() < 1e-3 && (m.x1 - px1).abs() < 1e-3, "{m:?} vs ({px}, {px1})");
        }
    }

    #[test]
    fn stop_below_exits_early() {
        let region = HalfPlaneRegion::from_constraints(5.0, 0.3, 5.0).unwrap();
        let q = Quadratic { a: 1.0, c: 1.0 };
        let m = minimize_over_b(&q, &region, &MinimizerConfig { stop_below: Some(50.0), ..cfg() }).unwrap();
        assert!(m.early_exit && m.value < 50.0);
    }

    struct Barrier;
    impl Objective for Barrier {
        fn section(&self, x1: f64) -> Result<Section<'_>> {
            Ok(Section::new(x1, |x| if x.abs() < 1e3 { f64::INFINITY } else { 0.0 }))
        }
        fn search_box(&self) -> Result<SearchBox> {
            Ok(SearchBox { x: (-10.0, 10.0), x1: (-10.0, 10.0) })
        }
    }

    #[test]
    fn all_infinite_is_infeasible() {
        let region = HalfPlaneRegion::from_constraints(5.0, 0.3, 5.0).unwrap();
        assert!(matches!(minimize_over_b(&Barrier, &region, &cfg()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn region_outside_the_box_still_solved() {
        // the whole of B lies at x ≤ −30 (box is ±20)
        let region = HalfPlaneRegion::from_constraints(-30.0, 0.5, 0.0).unwrap();
        let q = Quadratic { a: 1.0, c: 1.0 };
        let m = minimize_over_b(&q, &region, &cfg()).unwrap();
        let (_, _, pv) = projection(1.0, 1.0, -30.0, 0.5, 0.0);
        assert!((m.value - pv).abs() < 1e-6 * pv, "{m:?} {pv}");
    }
}
