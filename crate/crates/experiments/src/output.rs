//! Binary snapshots, CSV tables with the config-hash column, and the schema.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use qvlasov::hartree::WaveFunction;
use qvlasov::phase_space::WignerField;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{ExpError, ExpResult};

pub const SCHEMA_VERSION: u32 = 1;

/// First 16 hex digits of the SHA-256 of the canonical config JSON.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Header `n: u64, L, h, t: f64`, then `n` interleaved `(re, im)` pairs.
pub fn write_snapshot(path: &Path, psi: &WaveFunction) -> ExpResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u64::<LittleEndian>(psi.grid.n() as u64)?;
    w.write_f64::<LittleEndian>(psi.grid.length())?;
    w.write_f64::<LittleEndian>(psi.hbar)?;
    w.write_f64::<LittleEndian>(psi.t)?;
    for z in &psi.psi {
        w.write_f64::<LittleEndian>(z.re)?;
        w.write_f64::<LittleEndian>(z.im)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotFile {
    pub n: u64,
    pub length: f64,
    pub hbar: f64,
    pub t: f64,
    pub psi: Vec<(f64, f64)>,
}

pub fn read_snapshot(path: &Path) -> ExpResult<SnapshotFile> {
    let mut r = BufReader::new(File::open(path)?);
    let n = r.read_u64::<LittleEndian>()?;
    let length = r.read_f64::<LittleEndian>()?;
    let hbar = r.read_f64::<LittleEndian>()?;
    let t = r.read_f64::<LittleEndian>()?;
    let mut psi = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        psi.push((re, im));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(ExpError::Numerics(format!("{} trailing bytes in snapshot", rest.len())));
    }
    Ok(SnapshotFile { n, length, hbar, t, psi })
}

/// Snapshot header with `n` the number of rows, then `n_xi: u64` and the
/// `xi` axis, then the row-major real values.
pub fn write_wigner(path: &Path, w: &WignerField) -> ExpResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_u64::<LittleEndian>(w.grid.rows() as u64)?;
    f.write_f64::<LittleEndian>(w.grid.spatial.length())?;
    f.write_f64::<LittleEndian>(w.hbar)?;
    f.write_f64::<LittleEndian>(w.t)?;
    f.write_u64::<LittleEndian>(w.grid.xi.len() as u64)?;
    for xi in &w.grid.xi {
        f.write_f64::<LittleEndian>(*xi)?;
    }
    for v in w.values.iter() {
        f.write_f64::<LittleEndian>(*v)?;
    }
    f.flush()?;
    Ok(())
}

/// CSV writer that prepends the config hash to every row.
pub struct HashedCsv {
    hash: String,
    inner: csv::Writer<File>,
}

impl HashedCsv {
    pub fn create(path: &Path, hash: &str, columns: &[&str]) -> ExpResult<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        let mut header = vec!["config_hash"];
        header.extend_from_slice(columns);
        inner.write_record(&header)?;
        Ok(Self {
            hash: hash.to_string(),
            inner,
        })
    }

    pub fn row(&mut self, cells: &[String]) -> ExpResult<()> {
        let mut rec = Vec::with_capacity(cells.len() + 1);
        rec.push(self.hash.clone());
        rec.extend(cells.iter().cloned());
        self.inner.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> ExpResult<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal; NaN marks a metric that was not computed.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub const NLS_LEDGER_COLUMNS: &[&str] =
    &["t", "mass", "momentum", "kinetic", "interaction", "total_energy", "weighted_x_norm"];
pub const VLASOV_LEDGER_COLUMNS: &[&str] = &["t", "mass", "momentum", "kinetic", "interaction", "total"];
pub const POINT_COLUMNS: &[&str] = &[
    "point",
    "hbar_requested",
    "hbar",
    "epsilon",
    "n_x",
    "status",
    "weak_error",
    "mass_drift",
    "energy_drift",
    "reference_mass_drift",
    "reference_energy_drift",
    "husimi_min",
    "wigner_min",
    "error",
];
pub const RESIDUAL_COLUMNS: &[&str] = &["point", "kind", "k", "value"];
pub const FIT_COLUMNS: &[&str] = &["quantity", "axis", "group", "slope", "stderr", "intercept", "points"];
pub const NBODY_COLUMNS: &[&str] = &[
    "point",
    "particles",
    "t",
    "trace_distance",
    "wigner_gap_direct",
    "wigner_gap_plancherel",
];

#[derive(Serialize)]
struct TableSchema {
    file: &'static str,
    columns: Vec<&'static str>,
}

#[derive(Serialize)]
struct Schema {
    schema_version: u32,
    snapshot_layout: &'static str,
    wigner_layout: &'static str,
    tables: Vec<TableSchema>,
}

pub fn write_schema(dir: &Path, moments_k: usize) -> ExpResult<()> {
    let with_hash = |cols: &[&'static str]| {
        let mut v = vec!["config_hash"];
        v.extend_from_slice(cols);
        v
    };
    let moment_cols: Vec<&'static str> = ["x", "M0", "M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8"]
        [..moments_k + 2]
        .to_vec();
    let schema = Schema {
        schema_version: SCHEMA_VERSION,
        snapshot_layout: "little-endian; u64 n, f64 L, f64 hbar, f64 t; n x (f64 re, f64 im)",
        wigner_layout: "little-endian; u64 rows, f64 L, f64 hbar, f64 t; u64 n_xi, n_xi x f64 xi; rows x n_xi f64 values",
        tables: vec![
            TableSchema { file: "points.csv", columns: with_hash(POINT_COLUMNS) },
            TableSchema { file: "residuals.csv", columns: with_hash(RESIDUAL_COLUMNS) },
            TableSchema { file: "fits.csv", columns: with_hash(FIT_COLUMNS) },
            TableSchema { file: "nbody.csv", columns: with_hash(NBODY_COLUMNS) },
            TableSchema { file: "<point>/ledger.csv", columns: with_hash(NLS_LEDGER_COLUMNS) },
            TableSchema { file: "<point>/moments.csv", columns: with_hash(&moment_cols) },
            TableSchema { file: "reference_<key>/ledger.csv", columns: with_hash(VLASOV_LEDGER_COLUMNS) },
            TableSchema { file: "reference_<key>/moments.csv", columns: with_hash(&moment_cols[..4]) },
        ],
    };
    write_json(&dir.join("schema.json"), &schema)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> ExpResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
