//! CSV tables, metadata sidecars and atomic file output.

use crate::enhanced::TableEntry;
use crate::error::{Error, Result};
use crate::grid::{Field1D, Field2D};
use crate::illposed::DivergenceRow;
use crate::randomdata::{BrownianPath, VelocityField, RNG_CONTRACT};
use crate::solver::{CartesianSlice, ConvergenceTable, WaveMapState};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Version string recorded in every metadata file.
pub const CODE_VERSION: &str = concat!("wavemaps-core ", env!("CARGO_PKG_VERSION"));

/// Metadata schema version.
pub const METADATA_SCHEMA: u32 = 1;

/// Fixed 17-significant-digit float format; NaN marks a missing value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    fmt_f64(v.unwrap_or(f64::NAN))
}

/// A header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Invalid(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .filter(|h| !h.is_empty())
            .ok_or_else(|| Error::Invalid("empty CSV".into()))?;
        let mut t = Self::new(header.split(','));
        for line in lines.filter(|l| !l.is_empty()) {
            t.push(line.split(',').map(str::to_string).collect())?;
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect())
    }
}

fn numbered(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |k| format!("{prefix}{k}"))
}

/// `x,value`
pub fn field1d_table(f: &Field1D) -> CsvTable {
    let mut t = CsvTable::new(["x", "value"]);
    for (x, v) in f.grid.points().into_iter().zip(f.samples.iter()) {
        t.rows.push(vec![fmt_f64(x), fmt_f64(*v)]);
    }
    t
}

/// `u,v,value`, row-major in u.
pub fn field2d_table(f: &Field2D) -> CsvTable {
    let mut t = CsvTable::new(["u", "v", "value"]);
    for (i, u) in f.grid_u.points().into_iter().enumerate() {
        for (j, v) in f.grid_v.points().into_iter().enumerate() {
            t.rows.push(vec![fmt_f64(u), fmt_f64(v), fmt_f64(f.samples[[i, j]])]);
        }
    }
    t
}

/// `x,B1,...,BD,V1,...,VD`
pub fn path_table(path: &BrownianPath, velocity: &VelocityField) -> Result<CsvTable> {
    if !path.grid.same_as(&velocity.grid) || path.dim() != velocity.v.nrows() {
        return Err(Error::GridMismatch("path and velocity differ in grid or dimension".into()));
    }
    let d = path.dim();
    let mut t = CsvTable::new(std::iter::once("x".to_string()).chain(numbered("B", d)).chain(numbered("V", d)));
    for (j, x) in path.grid.points().into_iter().enumerate() {
        let mut row = vec![fmt_f64(x)];
        row.extend((0..d).map(|k| fmt_f64(path.samples[[k, j]])));
        row.extend((0..d).map(|k| fmt_f64(velocity.v[[k, j]])));
        t.rows.push(row);
    }
    Ok(t)
}

/// `u,v,phi1..phiD` on every `stride`-th node in each direction.
pub fn solution_table(state: &WaveMapState, stride: usize) -> Result<CsvTable> {
    if stride == 0 {
        return Err(Error::Invalid("stride must be positive".into()));
    }
    let d = state.dim();
    let g = state.grid;
    let mut t = CsvTable::new(["u".to_string(), "v".to_string()].into_iter().chain(numbered("phi", d)));
    for i in (0..g.num_points).step_by(stride) {
        for j in (0..g.num_points).step_by(stride) {
            let mut row = vec![fmt_f64(g.x(i)), fmt_f64(g.x(j))];
            row.extend((0..d).map(|k| fmt_f64(state.phi[k].samples[[i, j]])));
            t.rows.push(row);
        }
    }
    Ok(t)
}

/// `t,x,phi1..phiD,dtphi1..dtphiD`
pub fn slices_table(slices: &[CartesianSlice]) -> Result<CsvTable> {
    let d = slices.first().map(|s| s.position.len()).unwrap_or(0);
    let mut t = CsvTable::new(
        ["t".to_string(), "x".to_string()]
            .into_iter()
            .chain(numbered("phi", d))
            .chain(numbered("dtphi", d)),
    );
    for s in slices {
        if s.position.len() != d || s.velocity.len() != d {
            return Err(Error::Invalid("slices disagree in dimension".into()));
        }
        for (j, &x) in s.x.iter().enumerate() {
            let mut row = vec![fmt_f64(s.t), fmt_f64(x)];
            row.extend(s.position.iter().map(|p| fmt_f64(p[j])));
            row.extend(s.velocity.iter().map(|p| fmt_f64(p[j])));
            t.rows.push(row);
        }
    }
    Ok(t)
}

/// `eps,d_c0cs,d_c1cs1,data_diff`
pub fn convergence_csv(table: &ConvergenceTable) -> CsvTable {
    let mut t = CsvTable::new(["eps", "d_c0cs", "d_c1cs1", "data_diff"]);
    for r in &table.rows {
        t.rows.push(vec![fmt_f64(r.eps), fmt_opt(r.d_c0cs), fmt_opt(r.d_c1cs1), fmt_opt(r.data_diff)]);
    }
    t
}

/// `sign1,sign2,m,n,M,N,t,norm`
pub fn hhl_table(entries: &[TableEntry]) -> CsvTable {
    let mut t = CsvTable::new(["sign1", "sign2", "m", "n", "M", "N", "t", "norm"]);
    for e in entries {
        t.rows.push(vec![
            e.sign1.symbol().to_string(),
            e.sign2.symbol().to_string(),
            e.m.to_string(),
            e.n.to_string(),
            e.big_m.to_string(),
            e.big_n.to_string(),
            fmt_f64(e.t),
            fmt_f64(e.norm),
        ]);
    }
    t
}

/// `kappa,J,predicted,residual,psi1_norm,psi2_norm`
pub fn scan_table(rows: &[DivergenceRow]) -> CsvTable {
    let mut t = CsvTable::new(["kappa", "J", "predicted", "residual", "psi1_norm", "psi2_norm"]);
    for r in rows {
        t.rows.push(vec![
            r.kappa.to_string(),
            fmt_f64(r.j),
            fmt_f64(r.predicted),
            fmt_f64(r.residual),
            fmt_f64(r.psi1_norm),
            fmt_f64(r.psi2_norm),
        ]);
    }
    t
}

/// Sidecar record written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema: u32,
    pub code_version: String,
    pub rng_contract: String,
    pub command: String,
    /// the artifact file name this record describes
    pub artifact: String,
    /// the complete effective configuration
    pub config: serde_json::Value,
    /// run results: norms, fits, iteration counts, diagnostics
    pub summary: serde_json::Value,
}

impl Metadata {
    pub fn new(command: &str, artifact: &str, config: serde_json::Value, summary: serde_json::Value) -> Self {
        Self {
            schema: METADATA_SCHEMA,
            code_version: CODE_VERSION.to_string(),
            rng_contract: RNG_CONTRACT.to_string(),
            command: command.to_string(),
            artifact: artifact.to_string(),
            config,
            summary,
        }
    }
}

/// `name.csv` → `name.meta.json`
pub fn metadata_path(artifact: &Path) -> PathBuf {
    let stem = artifact.file_stem().and_then(|s| s.to_str()).unwrap_or("artifact");
    artifact.with_file_name(format!("{stem}.meta.json"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn write_csv(path: &Path, table: &CsvTable) -> Result<()> {
    write_atomic(path, table.to_csv().as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Write `table` to `path` and its metadata to the sidecar; returns the sidecar path.
pub fn write_artifact(path: &Path, table: &CsvTable, meta: &Metadata) -> Result<PathBuf> {
    write_csv(path, table)?;
    let side = metadata_path(path);
    write_json(&side, meta)?;
    Ok(side)
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    CsvTable::parse(&text)
}
