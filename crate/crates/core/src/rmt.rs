//! Random-matrix and spin-glass samplers used as Monte-Carlo oracles.
//!
//! GOE convention: off-diagonal entries have variance `1/(2n)` and diagonal
//! entries variance `1/n`, so the limiting spectrum is the semicircle on
//! `[-√2, √2]`.
//!
//! All randomness is counter based: a sample is a pure function of
//! `(master seed, stream, sample index)`, which keeps parallel batches
//! reproducible regardless of scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::params::{derive_constants, ModelParams};

/// Parameters of the deformed block ensemble
/// `H' = bM + b1·diag(M1, 0) − x1·diag(I, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub b: f64,
    pub b1: f64,
    pub kappa: f64,
    pub x1: f64,
}

impl SpectralParams {
    pub fn new(b: f64, b1: f64, kappa: f64, x1: f64) -> Result<Self> {
        let sp = SpectralParams { b, b1, kappa, x1 };
        sp.validate()?;
        Ok(sp)
    }

    /// Ensemble parameters implied by the model at block shift `x1`.
    pub fn from_model(params: &ModelParams, x1: f64) -> Result<Self> {
        let c = derive_constants(params)?;
        SpectralParams::new(c.b, c.b1, params.kappa, x1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return domain(format!("b must be positive and finite, got {}", self.b));
        }
        if !(self.b1.is_finite() && self.b1 >= 0.0) {
            return domain(format!("b1 must be nonnegative and finite, got {}", self.b1));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return domain(format!("kappa must lie in (0, 1), got {}", self.kappa));
        }
        if !self.x1.is_finite() {
            return domain("x1 must be finite");
        }
        Ok(())
    }

    pub fn with_x1(&self, x1: f64) -> Self {
        SpectralParams { x1, ..*self }
    }

    pub fn kappa_prime(&self) -> f64 {
        1.0 - self.kappa
    }
}

/// Seed record identifying one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub stream: u64,
    pub index: u64,
}

impl SeedRecord {
    pub fn new(master: u64, stream: u64) -> Self {
        SeedRecord { master, stream, index: 0 }
    }

    /// The record of the `index`-th sample of this stream.
    pub fn sample(&self, index: u64) -> Self {
        SeedRecord { index, ..*self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master;
        let mut seed = [0u8; 32];
        let words = [self.stream, self.index, 0x6a09_e667_f3bc_c909, 0xbb67_ae85_84ca_a73b];
        for (chunk, w) in seed.chunks_mut(8).zip(words) {
            state = splitmix64(state ^ splitmix64(w));
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A dense symmetric sample together with the seed that regenerates it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrixSample {
    pub n: usize,
    pub matrix: DMatrix<f64>,
    pub seed: SeedRecord,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn goe_into(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let off = (0.5 / n as f64).sqrt();
    let diag = (1.0 / n as f64).sqrt();
    for i in 0..n {
        m[(i, i)] = diag * normal(rng);
        for j in i + 1..n {
            let v = off * normal(rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn sample_goe(n: usize, seed: SeedRecord) -> Result<SymmetricMatrixSample> {
    if n == 0 {
        return domain("GOE dimension must be >= 1");
    }
    let matrix = goe_into(&mut seed.rng(), n);
    Ok(SymmetricMatrixSample { n, matrix, seed })
}

pub fn sample_ginibre(rows: usize, cols: usize, seed: SeedRecord) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return domain("Ginibre dimensions must be >= 1");
    }
    let mut rng = seed.rng();
    Ok(DMatrix::from_fn(rows, cols, |_, _| normal(&mut rng)))
}

fn block_size(sp: &SpectralParams, n: usize) -> usize {
    (sp.kappa * n as f64).floor() as usize
}

/// Block ensemble without the dimension preconditions; a zero-sized block
/// simply drops the deformation.
fn block_matrix(sp: &SpectralParams, n: usize, seed: SeedRecord) -> DMatrix<f64> {
    let mut rng = seed.rng();
    let mut h = goe_into(&mut rng, n) * sp.b;
    let nb = block_size(sp, n);
    if nb > 0 {
        let m1 = goe_into(&mut rng, nb);
        for i in 0..nb {
            for j in 0..nb {
                h[(i, j)] += sp.b1 * m1[(i, j)];
            }
            h[(i, i)] -= sp.x1;
        }
    }
    h
}

pub fn sample_block_ensemble(
    sp: &SpectralParams,
    n: usize,
    seed: SeedRecord,
) -> Result<SymmetricMatrixSample> {
    sp.validate()?;
    if n < 4 {
        return domain(format!("block ensemble needs N >= 4, got {n}"));
    }
    if block_size(sp, n) == 0 {
        return domain(format!("floor(kappa*N) must be >= 1 (kappa={}, N={n})", sp.kappa));
    }
    Ok(SymmetricMatrixSample { n, matrix: block_matrix(sp, n, seed), seed })
}

fn eigenvalues_sorted(m: DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("matrix has non-finite entries".into()));
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// All eigenvalues in ascending order.
pub fn empirical_spectrum(m: &SymmetricMatrixSample) -> Result<Vec<f64>> {
    eigenvalues_sorted(m.matrix.clone())
}

/// Eigenvalues of `count` independent block-ensemble samples, in index order.
pub fn sample_spectra(
    sp: &SpectralParams,
    n: usize,
    count: usize,
    seed: SeedRecord,
) -> Result<Vec<Vec<f64>>> {
    sp.validate()?;
    if n == 0 || count == 0 {
        return domain("spectra batch needs N >= 1 and at least one sample");
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| eigenvalues_sorted(block_matrix(sp, n, seed.sample(i))))
        .collect()
}

/// Monte-Carlo estimate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub stream: u64,
}

/// Smallest distance `|λ − x|` entering a log-determinant.
pub const DET_CLAMP: f64 = 1e-12;

fn log_abs_det_shift(ev: &[f64], x: f64) -> f64 {
    ev.iter().map(|&l| (l - x).abs().max(DET_CLAMP).ln()).sum()
}

/// Combine per-sample log-values `l_i` into `(1/n) log mean exp(l_i)`
/// scaled by `1/dim`, with a delta-method standard error.
fn log_mean_exp(logs: &[f64], dim: f64) -> (f64, f64) {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let value = (m + mean.ln()) / dim;
    if w.len() < 2 {
        // A single draw carries no spread information; report a deliberately
        // loose bound on the scale of the estimate itself.
        return (value, value.abs() + 1.0);
    }
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (value, var.sqrt() / (n.sqrt() * mean) / dim)
}

/// `(1/N) log E|det(H' − x)|` for each `x` in `xs`, sharing one batch of
/// sampled spectra across all `x`.
pub fn mc_log_abs_det_many(
    sp: &SpectralParams,
    xs: &[f64],
    n: usize,
    n_samples: usize,
    seed: SeedRecord,
) -> Result<Vec<McEstimate>> {
    if n_samples == 0 {
        return domain("n_samples must be >= 1");
    }
    let spectra = sample_spectra(sp, n, n_samples, seed)?;
    Ok(xs
        .iter()
        .map(|&x| {
            let logs: Vec<f64> = spectra.iter().map(|ev| log_abs_det_shift(ev, x)).collect();
            let (value, std_error) = log_mean_exp(&logs, n as f64);
            McEstimate { value, std_error, n_samples, seed: seed.master, stream: seed.stream }
        })
        .collect())
}

pub fn mc_log_abs_det(
    sp: &SpectralParams,
    x: f64,
    n: usize,
    n_samples: usize,
    seed: SeedRecord,
) -> Result<McEstimate> {
    Ok(mc_log_abs_det_many(sp, &[x], n, n_samples, seed)?[0])
}

/// Gaussian kernel density estimate with the normal-reference bandwidth
/// `0.9 · min(sd, IQR/1.34) · n^{-1/5}`.
pub fn kernel_density(samples: &[f64], at: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::Data("kernel density needs at least two samples".into()));
    }
    let h = reference_bandwidth(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(at
        .par_iter()
        .map(|&z| {
            // Gaussian tails beyond 9h are below f64 resolution relative to the peak.
            let lo = sorted.partition_point(|&s| s < z - 9.0 * h);
            let hi = sorted.partition_point(|&s| s <= z + 9.0 * h);
            sorted[lo..hi].iter().map(|&s| (-0.5 * ((z - s) / h).powi(2)).exp()).sum::<f64>()
                * norm
        })
        .collect())
}

pub fn reference_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |f: f64| {
        let pos = f * (n - 1.0);
        let (i, t) = (pos.floor() as usize, pos.fract());
        let j = (i + 1).min(sorted.len() - 1);
        sorted[i] * (1.0 - t) + sorted[j] * t
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Header of a binary spectra dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectraHeader {
    pub n: u64,
    pub kappa: f64,
    pub b: f64,
    pub b1: f64,
    pub x1: f64,
    pub seed: u64,
}

const HEADER_BYTES: usize = 48;

/// Writes the header followed by each sample's ascending eigenvalues, all
/// little-endian.
pub fn write_spectra(path: &Path, header: &SpectraHeader, spectra: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + 8 * spectra.iter().map(Vec::len).sum::<usize>());
    buf.extend_from_slice(&header.n.to_le_bytes());
    for v in [header.kappa, header.b, header.b1, header.x1] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&header.seed.to_le_bytes());
    for ev in spectra {
        if ev.len() as u64 != header.n {
            return Err(Error::Data(format!("spectrum of length {} under header N={}", ev.len(), header.n)));
        }
        for v in ev {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_spectra(path: &Path) -> Result<(SpectraHeader, Vec<Vec<f64>>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < HEADER_BYTES {
        return Err(Error::Data("spectra file shorter than its header".into()));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&buf[8 * i..8 * i + 8]).unwrap();
    let header = SpectraHeader {
        n: u64::from_le_bytes(word(0)),
        kappa: f64::from_le_bytes(word(1)),
        b: f64::from_le_bytes(word(2)),
        b1: f64::from_le_bytes(word(3)),
        x1: f64::from_le_bytes(word(4)),
        seed: u64::from_le_bytes(word(5)),
    };
    let body = &buf[HEADER_BYTES..];
    let n = header.n as usize;
    if n == 0 || body.len() % (8 * n) != 0 {
        return Err(Error::Data("spectra payload is not a whole number of samples".into()));
    }
    let spectra = body
        .chunks(8 * n)
        .map(|c| c.chunks(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect();
    Ok((header, spectra))
}

/// Settings for [`covariance_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Tangent directions kept per sphere besides the pole.
    pub tangent_dirs: usize,
    /// Refuse to materialise coupling tensors with more entries than this.
    pub element_budget: usize,
    /// Chart step for the central finite differences.
    pub fd_step: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { tangent_dirs: 1, element_budget: 1 << 24, fd_step: 1e-4 }
    }
}

/// An empirical second moment with its Monte-Carlo error and the exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub expected: f64,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.expected) / self.std_error
    }

    fn from_pairs(x: &[f64], y: &[f64], expected: f64) -> Self {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
        let mean = prods.iter().sum::<f64>() / n;
        let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MomentCheck { estimate: mean * n / (n - 1.0), std_error: (var / n).sqrt(), expected }
    }
}

/// Field moments at the north poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub n_samples: usize,
    pub seed: SeedRecord,
    /// `Var ℓ_D`, exact value 1.
    pub var_d: MomentCheck,
    /// `Var ℓ_G`, exact value `2^{p+q}`.
    pub var_g: MomentCheck,
    /// `Cov(∂ℓ_G, ℓ_G)` along a generator tangent direction, exact value 0.
    pub cov_grad_g: MomentCheck,
    /// `Cov(∂²ℓ_G, ℓ_G)` along the same direction, exact value `−(p+q)2^{p+q−1}`.
    pub cov_hess_g: MomentCheck,
    /// Largest disagreement between analytic and finite-difference derivatives,
    /// relative to the field's standard deviation.
    pub fd_max_rel_diff: f64,
}

/// Contract a symmetric-free coupling tensor with a vector polynomial
/// `w0 + s·w1 + s²·w2`, returning the Taylor coefficients of order 0..=2.
fn contract_taylor(z: &[f64], dim: usize, w: [&[f64]; 3]) -> [f64; 3] {
    let mut cur: Vec<[f64; 3]> = z.iter().map(|&c| [c, 0.0, 0.0]).collect();
    while cur.len() > 1 {
        let next: Vec<[f64; 3]> = cur
            .chunks(dim)
            .map(|row| {
                let mut acc = [0.0; 3];
                for (i, t) in row.iter().enumerate() {
                    let (a0, a1, a2) = (w[0][i], w[1][i], w[2][i]);
                    acc[0] += t[0] * a0;
                    acc[1] += t[1] * a0 + t[0] * a1;
                    acc[2] += t[2] * a0 + t[1] * a1 + t[0] * a2;
                }
                acc
            })
            .collect();
        cur = next;
    }
    cur[0]
}

fn contract(z: &[f64], dim: usize, w: &[f64]) -> f64 {
    let zero = vec![0.0; dim];
    contract_taylor(z, dim, [w, &zero, &zero])[0]
}

/// Sample the discriminator field (a `p`-spin glass on its sphere) and the
/// generator field (a `(p+q)`-spin glass on the product of both spheres, so
/// its covariance is `(w_D·w_D' + w_G·w_G')^{p+q}`) and report their
/// moments at the north poles.
///
/// Only the coordinates spanned by each pole and `tangent_dirs` tangent
/// directions are materialised; the restriction of an isotropic field to a
/// coordinate subspace has the same law as the full field there.
pub fn covariance_probe(
    params: &ModelParams,
    n: usize,
    n_samples: usize,
    seed: SeedRecord,
    config: &ProbeConfig,
) -> Result<CovarianceReport> {
    params.validate()?;
    if n < 2 {
        return domain(format!("probe needs N >= 2 per sphere, got {n}"));
    }
    if n_samples < 100 {
        return domain(format!("probe needs at least 100 samples, got {n_samples}"));
    }
    if config.tangent_dirs == 0 || config.tangent_dirs >= n {
        return domain("tangent_dirs must lie in 1..N");
    }
    let (p, m) = (params.p as usize, (params.p + params.q) as usize);
    let dd = 1 + config.tangent_dirs;
    let dg = 2 * dd;
    let size_d = dd.checked_pow(p as u32);
    let size_g = dg.checked_pow(m as u32);
    let (size_d, size_g) = match (size_d, size_g) {
        (Some(a), Some(b)) if a + b <= config.element_budget => (a, b),
        _ => {
            return Err(Error::Budget(format!(
                "coupling tensors of degree {p} and {m} over {dd}/{dg} coordinates exceed {} elements",
                config.element_budget
            )))
        }
    };
    // pole of both spheres, and the chart s -> sqrt(1-s²) e0 + s e1 on the generator sphere
    let mut pole_d = vec![0.0; dd];
    pole_d[0] = 1.0;
    let mut w0 = vec![0.0; dg];
    w0[0] = 1.0;
    w0[dd] = 1.0;
    let mut w1 = vec![0.0; dg];
    w1[dd + 1] = 1.0;
    let mut w2 = vec![0.0; dg];
    w2[dd] = -0.5;
    let h = config.fd_step;
    let chart = |s: f64| {
        let mut w = w0.clone();
        w[dd] = (1.0 - s * s).sqrt();
        w[dd + 1] = s;
        w
    };
    let (wp, wm) = (chart(h), chart(-h));

    let rows: Vec<[f64; 5]> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.sample(i).rng();
            let xd: Vec<f64> = (0..size_d).map(|_| normal(&mut rng)).collect();
            let zg: Vec<f64> = (0..size_g).map(|_| normal(&mut rng)).collect();
            let ld = contract(&xd, dd, &pole_d);
            let t = contract_taylor(&zg, dg, [&w0, &w1, &w2]);
            let (fp, fm) = (contract(&zg, dg, &wp), contract(&zg, dg, &wm));
            let fd1 = (fp - fm) / (2.0 * h);
            let fd2 = (fp - 2.0 * t[0] + fm) / (h * h);
            let diff = (fd1 - t[1]).abs().max((fd2 - 2.0 * t[2]).abs());
            [ld, t[0], t[1], 2.0 * t[2], diff]
        })
        .collect();

    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let (ld, lg, d1, d2) = (col(0), col(1), col(2), col(3));
    let pow = 2f64.powi(m as i32);
    let fd_max = rows.iter().map(|r| r[4]).fold(0.0, f64::max) / pow.sqrt();
    Ok(CovarianceReport {
        n,
        n_samples,
        seed,
        var_d: MomentCheck::from_pairs(&ld, &ld, 1.0),
        var_g: MomentCheck::from_pairs(&lg, &lg, pow),
        cov_grad_g: MomentCheck::from_pairs(&d1, &lg, 0.0),
        cov_hess_g: MomentCheck::from_pairs(&d2, &lg, -(m as f64) * pow / 2.0),
        fd_max_rel_diff: fd_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn semicircle_cdf(x: f64, r: f64) -> f64 {
        let t = (x / r).clamp(-1.0, 1.0);
        0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / std::f64::consts::PI
    }

    fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = sorted.len() as f64;
        sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn goe_spectrum_is_semicircular() {
        let s = sample_goe(1000, SeedRecord::new(7, 0)).unwrap();
        let ev = empirical_spectrum(&s).unwrap();
        let d = ks_distance(&ev, |x| semicircle_cdf(x, 2f64.sqrt()));
        assert!(d < 0.05, "KS {d}");
    }

    #[test]
    fn goe_is_exactly_symmetric_and_reproducible() {
        let a = sample_goe(40, SeedRecord::new(1, 2)).unwrap();
        let b = sample_goe(40, SeedRecord::new(1, 2)).unwrap();
        assert_eq!(a, b);
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(a.matrix[(i, j)].to_bits(), a.matrix[(j, i)].to_bits());
            }
        }
        assert!(sample_goe(0, SeedRecord::new(0, 0)).is_err());
    }

    #[test]
    fn one_by_one_goe_has_unit_variance() {
        let xs: Vec<f64> = (0..20_000)
            .map(|i| sample_goe(1, SeedRecord::new(3, 0).sample(i)).unwrap().matrix[(0, 0)])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 1.0).abs() < 0.04, "{var}");
    }

    #[test]
    fn ginibre_moments_and_stream_independence() {
        let a = sample_ginibre(100, 50, SeedRecord::new(5, 0)).unwrap();
        let var = a.iter().map(|x| x * x).sum::<f64>() / 5000.0;
        assert!((0.9..=1.1).contains(&var), "{var}");
        let x = sample_ginibre(100, 100, SeedRecord::new(5, 1)).unwrap();
        let y = sample_ginibre(100, 100, SeedRecord::new(5, 2)).unwrap();
        let corr = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>()
            / (x.norm() * y.norm());
        assert!(corr.abs() < 0.05, "{corr}");
        assert!(sample_ginibre(0, 3, SeedRecord::new(0, 0)).is_err());
    }

    #[test]
    fn spectrum_of_simple_matrices() {
        let eye = SymmetricMatrixSample { n: 5, matrix: DMatrix::identity(5, 5), seed: SeedRecord::new(0, 0) };
        assert_eq!(empirical_spectrum(&eye).unwrap(), vec![1.0; 5]);
        let d = SymmetricMatrixSample {
            n: 3,
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0])),
            seed: SeedRecord::new(0, 0),
        };
        let ev = empirical_spectrum(&d).unwrap();
        for (a, b) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        let mut bad = d.clone();
        bad.matrix[(0, 0)] = f64::NAN;
        assert!(matches!(empirical_spectrum(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn spectrum_trace_and_residuals() {
        let sp = SpectralParams::new(1.0, 1.0, 0.9, 1.5).unwrap();
        let s = sample_block_ensemble(&sp, 60, SeedRecord::new(11, 0)).unwrap();
        let ev = empirical_spectrum(&s).unwrap();
        let tr = s.matrix.trace();
        assert!((ev.iter().sum::<f64>() - tr).abs() <= 1e-8 * tr.abs().max(1.0));
        let eig = s.matrix.clone().symmetric_eigen();
        let norm = s.matrix.norm();
        for (k, l) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            assert!((&s.matrix * v - v * *l).norm() <= 1e-8 * norm);
        }
    }

    #[test]
    fn block_ensemble_layout() {
        let sp = SpectralParams::new(0.0001, 1.0, 0.5, 2.0).unwrap();
        let s = sample_block_ensemble(&sp, 8, SeedRecord::new(2, 0)).unwrap();
        // upper-left diagonal carries the −x1 shift, lower-right does not
        let shifted = (0..4).map(|i| s.matrix[(i, i)]).sum::<f64>() / 4.0;
        assert!(shifted < -1.0, "{shifted}");
        assert!(s.matrix[(7, 7)].abs() < 0.01);
        assert!(sample_block_ensemble(&sp, 3, SeedRecord::new(2, 0)).is_err());
        let tiny = SpectralParams::new(1.0, 1.0, 0.1, 0.0).unwrap();
        assert!(sample_block_ensemble(&tiny, 5, SeedRecord::new(2, 0)).is_err());
    }

    #[test]
    fn pure_goe_limit_radius() {
        let sp = SpectralParams::new(2.0, 0.0, 0.5, 0.0).unwrap();
        let s = sample_block_ensemble(&sp, 1000, SeedRecord::new(9, 0)).unwrap();
        let ev = empirical_spectrum(&s).unwrap();
        let d = ks_distance(&ev, |x| semicircle_cdf(x, 2.0 * 2f64.sqrt()));
        assert!(d < 0.05, "KS {d}");
    }

    #[test]
    fn scalar_log_det_matches_gaussian_moment() {
        let sp = SpectralParams::new(1.0, 0.0, 0.5, 0.0).unwrap();
        let est = mc_log_abs_det(&sp, 0.0, 1, 200_000, SeedRecord::new(4, 0)).unwrap();
        let want = (2.0 / std::f64::consts::PI).sqrt().ln();
        assert!((est.value - want).abs() < 4.0 * est.std_error, "{est:?} vs {want}");
        assert!(est.std_error < 0.01);
    }

    #[test]
    fn single_sample_error_is_large_but_finite() {
        let sp = SpectralParams::new(1.0, 1.0, 0.9, 0.0).unwrap();
        let est = mc_log_abs_det(&sp, 0.3, 10, 1, SeedRecord::new(4, 0)).unwrap();
        assert!(est.std_error.is_finite() && est.std_error >= 1.0);
    }

    #[test]
    fn mc_is_independent_of_thread_count() {
        let sp = SpectralParams::new(1.0, 1.0, 0.9, 0.5).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_log_abs_det(&sp, 0.2, 30, 40, SeedRecord::new(8, 1)).unwrap())
        };
        let (a, b) = (run(1), run(8));
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn log_mean_exp_is_stable() {
        let (v, _) = log_mean_exp(&[1000.0, 1000.0], 1.0);
        assert_relative_eq!(v, 1000.0, epsilon = 1e-12);
        let (v, se) = log_mean_exp(&[0.0, 2f64.ln()], 2.0);
        assert_relative_eq!(v, 1.5f64.ln() / 2.0, epsilon = 1e-14);
        assert!(se > 0.0);
    }

    #[test]
    fn spectra_roundtrip_through_binary_dump() {
        let sp = SpectralParams::new(1.0, 1.0, 0.9, 0.5).unwrap();
        let spectra = sample_spectra(&sp, 12, 3, SeedRecord::new(1, 0)).unwrap();
        let header = SpectraHeader { n: 12, kappa: 0.9, b: 1.0, b1: 1.0, x1: 0.5, seed: 1 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_spectra(&path, &header, &spectra).unwrap();
        let (h, back) = read_spectra(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, spectra);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 48 + 3 * 12 * 8);
    }

    #[test]
    fn taylor_contraction_matches_direct_polynomial() {
        // f(w) = sum_ij z_ij w_i w_j on 2 coordinates, along w(s) = (1, s)
        let z = [1.0, 2.0, 3.0, 4.0];
        let t = contract_taylor(&z, 2, [&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(t, [1.0, 5.0, 4.0]);
    }

    #[test]
    fn probe_refuses_oversized_tensors() {
        let p = ModelParams::new(10, 10, 1.0, 0.5).unwrap();
        let cfg = ProbeConfig { element_budget: 1_000_000, ..Default::default() };
        assert!(matches!(
            covariance_probe(&p, 8, 100, SeedRecord::new(0, 0), &cfg),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn probe_derivatives_agree_with_finite_differences() {
        let p = ModelParams::new(3, 2, 1.0, 0.5).unwrap();
        let r = covariance_probe(&p, 4, 200, SeedRecord::new(6, 0), &ProbeConfig::default()).unwrap();
        assert!(r.fd_max_rel_diff < 1e-5, "{}", r.fd_max_rel_diff);
    }
}
