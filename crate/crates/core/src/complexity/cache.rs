//! Density grids keyed by spectral parameters and quantised `x1`.
//!
//! Every `Φ` evaluation at a given `x1` shares one grid, and the minimiser
//! asks for the same rows over and over, so grids are kept in memory and
//! optionally mirrored to disk. Reads take a shared lock; a miss builds the
//! grid outside the lock and inserts it under a short exclusive one.

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::Result;
use crate::rmt::SpectralParams;
use crate::spectral::{density_grid_with, DensityGrid, GridConfig};

/// Grid spacing of cached `x1` values.
pub const X1_QUANTUM: f64 = 1e-6;

/// Bumped whenever a change alters cached grid contents.
const CACHE_VERSION: &str = "density-v4";

/// Nearest multiple of [`X1_QUANTUM`].
pub fn quantize_x1(x1: f64) -> f64 {
    (x1 / X1_QUANTUM).round() * X1_QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    b: u64,
    b1: u64,
    kappa: u64,
    x1: i64,
}

impl Key {
    fn new(sp: &SpectralParams) -> Self {
        Key {
            b: sp.b.to_bits(),
            b1: sp.b1.to_bits(),
            kappa: sp.kappa.to_bits(),
            x1: (sp.x1 / X1_QUANTUM).round() as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub disk_hits: u64,
    pub entries: u64,
}

pub struct DensityCache {
    grids: RwLock<HashMap<Key, Arc<DensityGrid>>>,
    config: GridConfig,
    dir: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
    disk_hits: AtomicU64,
}

impl DensityCache {
    pub fn new(config: GridConfig) -> Self {
        DensityCache {
            grids: RwLock::new(HashMap::new()),
            config,
            dir: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            disk_hits: AtomicU64::new(0),
        }
    }

    /// Also persist grids as JSON files under `dir`.
    pub fn with_dir(config: GridConfig, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(DensityCache { dir: Some(dir), ..DensityCache::new(config) })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            disk_hits: self.disk_hits.load(Ordering::Relaxed),
            entries: self.grids.read().len() as u64,
        }
    }

    /// Grid for `sp` with `x1` rounded to [`X1_QUANTUM`]; the grid is built at
    /// the rounded value, so its `params.x1` may differ from `sp.x1`.
    pub fn get(&self, sp: &SpectralParams) -> Result<Arc<DensityGrid>> {
        let sp = sp.with_x1(quantize_x1(sp.x1));
        let key = Key::new(&sp);
        if let Some(g) = self.grids.read().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(g));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let grid = match self.load(&sp) {
            Some(g) => {
                self.disk_hits.fetch_add(1, Ordering::Relaxed);
                g
            }
            None => {
                let g = density_grid_with(&sp, &self.config)?;
                self.store(&g);
                g
            }
        };
        let grid = Arc::new(grid);
        // another thread may have won the race; keep whichever is there
        Ok(Arc::clone(self.grids.write().entry(key).or_insert(grid)))
    }

    fn file_for(&self, sp: &SpectralParams) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let key = Key::new(sp);
        let mut h = Sha256::new();
        h.update(CACHE_VERSION.as_bytes());
        for v in [key.b, key.b1, key.kappa, key.x1 as u64] {
            h.update(v.to_le_bytes());
        }
        h.update(serde_json::to_vec(&self.config).unwrap_or_default());
        Some(dir.join(format!("{}.json", hex::encode(h.finalize()))))
    }

    fn load(&self, sp: &SpectralParams) -> Option<DensityGrid> {
        let path = self.file_for(sp)?;
        let bytes = std::fs::read(&path).ok()?;
        let grid: DensityGrid = serde_json::from_slice(&bytes).ok()?;
        (grid.params == *sp && grid.config == self.config).then_some(grid)
    }

    /// Best effort: a failed write only costs a rebuild later.
    fn store(&self, grid: &DensityGrid) {
        let Some(path) = self.file_for(&grid.params) else { return };
        let _ = write_atomically(&path, grid);
    }
}

fn write_atomically(path: &Path, grid: &DensityGrid) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer(std::io::BufWriter::new(tmp.as_file()), grid)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(x1: f64) -> SpectralParams {
        SpectralParams::new(1.0, 1.0, 0.9, x1).unwrap()
    }

    #[test]
    fn nearby_x1_share_a_grid() {
        let cache = DensityCache::new(GridConfig { n_points: 64, ..Default::default() });
        let a = cache.get(&sp(0.300_000_1)).unwrap();
        let b = cache.get(&sp(0.299_999_9)).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.params.x1, quantize_x1(0.3));
        assert_eq!(cache.stats(), CacheStats { hits: 1, misses: 1, disk_hits: 0, entries: 1 });
    }

    #[test]
    fn disk_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GridConfig { n_points: 64, ..Default::default() };
        let first = DensityCache::with_dir(cfg, dir.path()).unwrap();
        let a = first.get(&sp(1.1)).unwrap();
        let second = DensityCache::with_dir(cfg, dir.path()).unwrap();
        let b = second.get(&sp(1.1)).unwrap();
        assert_eq!(second.stats().disk_hits, 1);
        assert_eq!(*a, *b);
        for x in [-3.0, -0.5, 0.7, 4.0] {
            assert_eq!(a.log_potential(x).to_bits(), b.log_potential(x).to_bits());
        }
    }
}
