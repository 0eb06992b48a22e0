//! `run` and `sweep`: reference construction, point execution, tables,
//! rate fits and the manifest.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{HbarSnap, ResolvedConfig, SweepPoint};
use crate::error::{ExpError, ExpResult};
use crate::fit::{fit_rate, RateFit};
use crate::output::{
    config_hash, num, write_json, write_schema, HashedCsv, FIT_COLUMNS, NBODY_COLUMNS,
    POINT_COLUMNS, RESIDUAL_COLUMNS, SCHEMA_VERSION,
};
use crate::pipeline::{build_reference, reference_key_for, reference_keys, run_point, write_reference, PointResult, Reference};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Sweep,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitRow {
    pub quantity: String,
    pub axis: String,
    pub group: String,
    pub fit: Option<RateFit>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointStatus {
    pub id: String,
    pub status: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub mode: Mode,
    pub scenario: String,
    pub config_hash: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub seed: u64,
    pub limit_label: String,
    pub hbar_snaps: Vec<HbarSnap>,
    pub warnings: Vec<String>,
    pub references: Vec<ReferenceInfo>,
    pub points: Vec<PointStatus>,
    pub config: crate::config::ExperimentConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferenceInfo {
    pub key: String,
    pub epsilon: Option<f64>,
    pub matched_hbar: f64,
    pub status: String,
}

#[derive(Debug)]
pub struct Summary {
    pub output_dir: std::path::PathBuf,
    pub results: Vec<PointResult>,
    pub fits: Vec<FitRow>,
    pub manifest: Manifest,
}

impl Summary {
    /// 0 when every point finished, 3 when any point blew up or failed numerically.
    pub fn exit_code(&self) -> i32 {
        if self.results.iter().all(|r| r.status == "ok") {
            0
        } else {
            3
        }
    }
}

/// Sweeps need three distinct values on `h` and on every other axis that
/// varies at all.
pub fn check_sweep_axes(rc: &ResolvedConfig) -> ExpResult<()> {
    let h = rc.axis_len(|p| p.hbar);
    if h < 3 {
        return Err(ExpError::Config(format!("a sweep needs at least three hbar values, got {h}")));
    }
    for (name, len) in [("epsilon", rc.axis_len(|p| p.epsilon)), ("n_x", rc.axis_len(|p| p.n_x as f64))] {
        let coupled = name == "epsilon" && matches!(rc.config.kernel.epsilon, crate::config::EpsilonRule::Coupled { .. });
        if len > 1 && len < 3 && !coupled {
            return Err(ExpError::Config(format!("swept axis {name} needs at least three values, got {len}")));
        }
    }
    Ok(())
}

fn guarded<T>(f: impl FnOnce() -> ExpResult<T>) -> ExpResult<T> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(ExpError::Numerics(format!("panic: {msg}")))
        }
    }
}

fn status_of(e: &ExpError) -> &'static str {
    match e {
        ExpError::Blowup(_) => "blowup",
        ExpError::Config(_) => "config_error",
        _ => "failed",
    }
}

/// Executes a resolved configuration. `run` is sequential and stops at the
/// first blowup; `sweep` runs points on a pool of `workers` threads and
/// records failures without stopping.
pub fn execute(rc: &ResolvedConfig, mode: Mode, workers: usize) -> ExpResult<Summary> {
    if mode == Mode::Sweep {
        check_sweep_axes(rc)?;
    }
    let started = Instant::now();
    let dir = rc.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let hash = config_hash(&rc.config);
    write_schema(&dir, rc.config.diagnostics.moments_k)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExpError::Config(format!("cannot start worker pool: {e}")))?;

    let keys = reference_keys(rc);
    let refs: Vec<(String, Option<f64>, ExpResult<Reference>)> = pool.install(|| {
        keys.par_iter()
            .map(|(k, e)| (k.clone(), *e, guarded(|| build_reference(rc, k, *e))))
            .collect()
    });
    let mut ref_infos = Vec::new();
    for (k, e, r) in &refs {
        let status = match r {
            Ok(r) => {
                write_reference(&dir, &hash, r)?;
                "ok".to_string()
            }
            Err(err) => {
                if mode == Mode::Run {
                    return Err(clone_error(err));
                }
                format!("{}: {err}", status_of(err))
            }
        };
        let matched_hbar = rc.points.iter().map(|p| p.hbar).fold(f64::INFINITY, f64::min);
        ref_infos.push(ReferenceInfo {
            key: k.clone(),
            epsilon: *e,
            matched_hbar,
            status,
        });
    }
    let find_ref = |p: &SweepPoint| -> Result<&Reference, String> {
        let key = reference_key_for(rc, p);
        match refs.iter().find(|(k, _, _)| *k == key) {
            Some((_, _, Ok(r))) => Ok(r),
            Some((_, _, Err(e))) => Err(format!("reference {key} failed: {e}")),
            None => Err(format!("missing reference {key}")),
        }
    };

    let one = |p: &SweepPoint| -> PointResult {
        let r = match find_ref(p) {
            Ok(r) => r,
            Err(msg) => return PointResult::failed(p, "failed", msg),
        };
        match guarded(|| pool.install(|| run_point(rc, p, r, &hash, &dir))) {
            Ok(res) => res,
            Err(e) => {
                log::error!("point {} failed: {e}", p.id);
                PointResult::failed(p, status_of(&e), e.to_string())
            }
        }
    };
    let mut results: Vec<PointResult> = Vec::new();
    let mut fatal: Option<ExpError> = None;
    match mode {
        Mode::Run => {
            for p in &rc.points {
                let r = one(p);
                let stop = r.status != "ok";
                if stop {
                    fatal = Some(match r.status.as_str() {
                        "blowup" => ExpError::Blowup(r.error.clone()),
                        "config_error" => ExpError::Config(r.error.clone()),
                        _ => ExpError::Numerics(r.error.clone()),
                    });
                }
                results.push(r);
                if stop {
                    break;
                }
            }
        }
        Mode::Sweep => {
            results = pool.install(|| rc.points.par_iter().map(one).collect());
        }
    }

    write_tables(&dir, &hash, &results)?;
    let fits = if mode == Mode::Sweep { fit_all(rc, &results) } else { Vec::new() };
    if mode == Mode::Sweep {
        let mut f = HashedCsv::create(&dir.join("fits.csv"), &hash, FIT_COLUMNS)?;
        for row in &fits {
            let (s, e, i, n) = match &row.fit {
                Some(fit) => (fit.slope, fit.stderr, fit.intercept, fit.points as f64),
                None => (f64::NAN, f64::NAN, f64::NAN, 0.0),
            };
            f.row(&[
                row.quantity.clone(),
                row.axis.clone(),
                row.group.clone(),
                num(s),
                num(e),
                num(i),
                num(n),
            ])?;
        }
        f.finish()?;
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        mode,
        scenario: rc.config.scenario.clone(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
        seed: rc.config.seed,
        limit_label: rc.limit_label.clone(),
        hbar_snaps: rc.snaps.clone(),
        warnings: rc.warnings.clone(),
        references: ref_infos,
        points: results
            .iter()
            .map(|r| PointStatus {
                id: r.point.id.clone(),
                status: r.status.clone(),
                error: r.error.clone(),
            })
            .collect(),
        config: rc.config.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    if let Some(e) = fatal {
        return Err(e);
    }
    Ok(Summary {
        output_dir: dir,
        results,
        fits,
        manifest,
    })
}

fn clone_error(e: &ExpError) -> ExpError {
    match e {
        ExpError::Config(m) => ExpError::Config(m.clone()),
        ExpError::Blowup(m) => ExpError::Blowup(m.clone()),
        other => ExpError::Numerics(other.to_string()),
    }
}

fn write_tables(dir: &Path, hash: &str, results: &[PointResult]) -> ExpResult<()> {
    let mut points = HashedCsv::create(&dir.join("points.csv"), hash, POINT_COLUMNS)?;
    let mut residuals = HashedCsv::create(&dir.join("residuals.csv"), hash, RESIDUAL_COLUMNS)?;
    let mut nbody = HashedCsv::create(&dir.join("nbody.csv"), hash, NBODY_COLUMNS)?;
    for r in results {
        let p = &r.point;
        points.row(&[
            p.id.clone(),
            num(p.hbar_requested),
            num(p.hbar),
            num(p.epsilon),
            p.n_x.to_string(),
            r.status.clone(),
            num(r.weak_error),
            num(r.mass_drift),
            num(r.energy_drift),
            num(r.reference_mass_drift),
            num(r.reference_energy_drift),
            num(r.husimi_min),
            num(r.wigner_min),
            r.error.clone(),
        ])?;
        for m in &r.metrics {
            residuals.row(&[p.id.clone(), m.kind.clone(), m.k.to_string(), num(m.value)])?;
        }
        for b in &r.nbody {
            nbody.row(&[
                p.id.clone(),
                b.particles.to_string(),
                num(b.t),
                num(b.trace_distance),
                num(b.gap_direct),
                num(b.gap_plancherel),
            ])?;
        }
    }
    points.finish()?;
    residuals.finish()?;
    nbody.finish()
}

/// Log-log slopes against `h` within each `(eps rule, n_x)` group, and
/// against `dx` within each `h` group when the resolution is swept.
fn fit_all(rc: &ResolvedConfig, results: &[PointResult]) -> Vec<FitRow> {
    let ok: Vec<&PointResult> = results.iter().filter(|r| r.status == "ok").collect();
    let mut quantities: Vec<(String, Box<dyn Fn(&PointResult) -> Option<f64>>)> =
        vec![("weak_error".into(), Box::new(|r: &PointResult| Some(r.weak_error)))];
    for &k in &rc.config.diagnostics.remainder_k {
        quantities.push((
            format!("remainder_pairing_{k}"),
            Box::new(move |r: &PointResult| r.metric("remainder_pairing", k)),
        ));
    }
    let residual_quantities: Vec<(String, usize)> = rc
        .config
        .diagnostics
        .residual_k
        .iter()
        .map(|&k| (format!("moment_residual_{k}"), k))
        .collect();

    let mut groups: Vec<(String, Vec<&PointResult>)> = Vec::new();
    let coupled = matches!(rc.config.kernel.epsilon, crate::config::EpsilonRule::Coupled { .. });
    for r in &ok {
        let g = if coupled {
            format!("coupled,n_x={}", r.point.n_x)
        } else {
            format!("eps={},n_x={}", r.point.epsilon, r.point.n_x)
        };
        match groups.iter_mut().find(|(k, _)| *k == g) {
            Some((_, v)) => v.push(r),
            None => groups.push((g, vec![r])),
        }
    }
    let mut rows = Vec::new();
    for (g, members) in &groups {
        for (name, get) in &quantities {
            let pairs: Vec<(f64, f64)> = members.iter().filter_map(|r| get(r).map(|v| (r.point.hbar, v))).collect();
            rows.push(fit_row(name, "hbar", g, &pairs));
        }
    }
    if rc.axis_len(|p| p.n_x as f64) >= 3 {
        let mut by_h: Vec<(String, Vec<&PointResult>)> = Vec::new();
        for r in &ok {
            let g = format!("hbar={},eps={}", r.point.hbar, r.point.epsilon);
            match by_h.iter_mut().find(|(k, _)| *k == g) {
                Some((_, v)) => v.push(r),
                None => by_h.push((g, vec![r])),
            }
        }
        for (g, members) in &by_h {
            for (name, k) in &residual_quantities {
                let pairs: Vec<(f64, f64)> = members
                    .iter()
                    .filter_map(|r| {
                        r.metric("moment_residual", *k)
                            .map(|v| (rc.config.grid.length / r.point.n_x as f64, v))
                    })
                    .collect();
                rows.push(fit_row(name, "dx", g, &pairs));
            }
        }
    }
    rows
}

fn fit_row(quantity: &str, axis: &str, group: &str, pairs: &[(f64, f64)]) -> FitRow {
    let (fit, note) = match fit_rate(pairs) {
        Ok(f) => (Some(f), String::new()),
        Err(e) => (None, e.to_string()),
    };
    if !note.is_empty() {
        log::warn!("fit of {quantity} against {axis} in {group}: {note}");
    }
    FitRow {
        quantity: quantity.into(),
        axis: axis.into(),
        group: group.into(),
        fit,
        note,
    }
}

/// Whether `values` (ordered by decreasing `h`) strictly decrease.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Weak errors of successful points ordered by decreasing `h`.
pub fn weak_errors_by_hbar(results: &[PointResult]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.status == "ok")
        .map(|r| (r.point.hbar, r.weak_error))
        .collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Worker count: explicit flag, then `QVLASOV_WORKERS`, then all cores.
pub fn default_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("QVLASOV_WORKERS").ok().and_then(|v| v.parse().ok()))
        .filter(|w| *w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
