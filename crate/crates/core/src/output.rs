//! CSV tables and their JSON sidecars.
//!
//! Floats are written as the shortest decimal that parses back to the same
//! value; failed cells are left empty with the reason in an `error` column.

use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::complexity::{ComplexitySurface, IndexMaps, SweepRow};
use crate::error::Result;
use crate::spectral::DensityGrid;

/// Shortest round-trip decimal, switching to exponent form for very large
/// or very small magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomically(path, &self.to_bytes()?)
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e.to_string()))
}

/// Write through a temporary file in the target directory, so readers never
/// see a partial file.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `out.csv` → `out.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn write_sidecar(csv: &Path, meta: &impl Serialize) -> Result<PathBuf> {
    let path = sidecar_path(csv);
    let mut bytes = serde_json::to_vec_pretty(meta)?;
    bytes.push(b'\n');
    write_atomically(&path, &bytes)?;
    Ok(path)
}

/// Path next to `csv` with `tag` inserted before the extension.
pub fn companion_path(csv: &Path, tag: &str) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    csv.with_file_name(format!("{stem}.{tag}.csv"))
}

pub fn density_table(grid: &DensityGrid) -> Table {
    let mut t = Table::new(&["z", "rho"]);
    for (z, r) in grid.z_values.iter().zip(&grid.rho_values) {
        t.push(vec![format_float(*z), format_float(*r)]);
    }
    t
}

pub fn surface_table(s: &ComplexitySurface) -> Table {
    let mut t = Table::new(&["uD", "uG", "theta", "x_star", "x1_star", "error"]);
    for (i, ud) in s.u_d.iter().enumerate() {
        for (j, ug) in s.u_g.iter().enumerate() {
            let err = s.errors[i][j].clone();
            let ok = err.is_none();
            let (x, x1) = s.argmin[i][j];
            let cell = |v: f64| if ok { format_float(v) } else { String::new() };
            t.push(vec![format_float(*ud), format_float(*ug), cell(s.theta[i][j]), cell(x), cell(x1), err.unwrap_or_default()]);
        }
    }
    t
}

pub fn index_table(m: &IndexMaps) -> Table {
    let mut t = Table::new(&["uD", "uG", "kD_max", "kG_max", "error"]);
    for (i, ud) in m.u_d.iter().enumerate() {
        for (j, ug) in m.u_g.iter().enumerate() {
            let err = m.errors[i][j].clone();
            let (a, b) = if err.is_none() {
                (m.k_d_max[i][j].to_string(), m.k_g_max[i][j].to_string())
            } else {
                (String::new(), String::new())
            };
            t.push(vec![format_float(*ud), format_float(*ug), a, b, err.unwrap_or_default()]);
        }
    }
    t
}

pub fn sweep_table(param: &str, rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&[param, "vartheta_D", "vartheta_G", "error"]);
    for r in rows {
        t.push(vec![format_float(r.value), opt(r.vartheta_d), opt(r.vartheta_g), r.error.clone().unwrap_or_default()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -2.5, 1e-7, 123456.789, 3e20, f64::MIN_POSITIVE, -0.0, 1.0 / 3.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_quotes_messages() {
        let mut t = Table::new(&["a", "error"]);
        t.push(vec!["1".into(), "bad, \"really\"".into()]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "a,error\n1,\"bad, \"\"really\"\"\"\n");
    }

    #[test]
    fn sidecar_sits_next_to_csv() {
        assert_eq!(sidecar_path(Path::new("out/theta.csv")), PathBuf::from("out/theta.meta.json"));
        assert_eq!(companion_path(Path::new("d/rho.csv"), "hist"), PathBuf::from("d/rho.hist.csv"));
    }
}
