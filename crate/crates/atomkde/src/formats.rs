//! Output documents: JSON reports, grid and atom CSV, experiment tables.
//!
//! Floats are written in Rust's shortest round-trip form, so identical values
//! always produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use atomkde_core::simlab::{ExperimentSpec, SummaryTable};
use atomkde_core::{AtomTable, DensityGrid, EstimateReport};
use serde::Serialize;

/// Version stamped into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct AtomJson {
    pub value: Vec<f64>,
    pub count: usize,
    pub mass: f64,
    pub combined_mass: f64,
}

/// Partition summary and estimated atoms.
#[derive(Debug, Clone, Serialize)]
pub struct AtomReport {
    pub schema_version: u32,
    pub n: usize,
    pub n_unique: usize,
    pub pi_hat: f64,
    pub atoms: Vec<AtomJson>,
}

impl AtomReport {
    pub fn new(table: &AtomTable) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n: table.n(),
            n_unique: table.n_unique(),
            pi_hat: table.pi_hat(),
            atoms: table
                .entries()
                .iter()
                .map(|e| AtomJson {
                    value: e.value.clone(),
                    count: e.count,
                    mass: e.mass,
                    combined_mass: table.combined_mass(e),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateJson<'a> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: &'a EstimateReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow<'a> {
    pub x: &'a [f64],
    pub density: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridJson<'a> {
    pub schema_version: u32,
    pub dim: usize,
    pub points_per_dim: usize,
    pub rows: Vec<GridRow<'a>>,
}

impl<'a> GridJson<'a> {
    pub fn new(grid: &'a DensityGrid) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dim: grid.dim,
            points_per_dim: grid.points_per_dim,
            rows: grid.rows().map(|(x, density)| GridRow { x, density }).collect(),
        }
    }
}

/// Metadata written next to an experiment table.
#[derive(Debug, Clone, Serialize)]
pub struct SummarySidecar<'a> {
    pub schema_version: u32,
    pub name: &'a str,
    pub target: &'a str,
    pub true_value: Option<f64>,
    pub warnings: usize,
    /// Log-log slope of MAE against `n`, per method.
    pub slopes: BTreeMap<&'a str, f64>,
    pub spec: &'a ExperimentSpec,
}

impl<'a> SummarySidecar<'a> {
    pub fn new(table: &'a SummaryTable, spec: &'a ExperimentSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: &table.name,
            target: &table.target,
            true_value: table.true_value,
            warnings: table.warnings,
            slopes: table.slopes.iter().map(|(m, s)| (m.as_str(), *s)).collect(),
            spec,
        }
    }
}

fn coord_header(out: &mut String, dim: usize) {
    for k in 1..=dim {
        let _ = write!(out, "x{k},");
    }
}

/// `x1,…,xd,density`, one row per grid node.
pub fn grid_csv(grid: &DensityGrid) -> String {
    let mut out = String::new();
    coord_header(&mut out, grid.dim);
    out.push_str("density\n");
    for (x, v) in grid.rows() {
        for c in x {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{v}");
    }
    out
}

/// `x1,…,xd,count,mass,combined_mass`, one row per atom.
pub fn atoms_csv(table: &AtomTable, dim: usize) -> String {
    let mut out = String::new();
    coord_header(&mut out, dim);
    out.push_str("count,mass,combined_mass\n");
    for e in table.entries() {
        for c in &e.value {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{},{},{}", e.count, e.mass, table.combined_mass(e));
    }
    out
}

/// `method,n,mae,sd,reps`.
pub fn summary_csv(table: &SummaryTable) -> String {
    let mut out = String::from("method,n,mae,sd,reps\n");
    for r in &table.rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.method, r.n, r.mae, r.sd, r.reps);
    }
    out
}

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// The sidecar path for a table: same stem, `.json` extension.
pub fn sidecar_path(table: &Path) -> std::path::PathBuf {
    table.with_extension("json")
}
