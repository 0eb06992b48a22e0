//! Per-point execution: NLS run, phase-space diagnostics, comparison with
//! the matched Vlasov reference, optional N-body gap.

use std::fs;
use std::path::Path;

use qvlasov::grid::{make_grid, SpatialGrid};
use qvlasov::hartree::{
    evolve, evolve_with, gaussian_density, init_mollified, init_wkb, snapshot_steps, step_plan,
    uniform_times, WaveFunction, DEFAULT_MONITOR_ORDER,
};
use qvlasov::moments::{moment_residual, remainder, remainder_pairing, RemainderPrefactor, SpaceTimeBump};
use qvlasov::nbody::{marginal, nbody_evolve, trace_distance, wigner_gap, DEFAULT_MEMORY_CAP};
use qvlasov::phase_space::{
    correlation_stride, husimi, husimi_coherent, moments_closed_form, weak_error, wigner, MomentSet,
    TestFunctionFamily,
};
use qvlasov::potential::KernelParams;
use qvlasov::vlasov::{vp_evolve, FieldMode, VlasovGrid, VlasovSolver, VlasovState, VlasovTrajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{EpsilonRule, InitialData, ResolvedConfig, SweepPoint};
use crate::error::{ExpError, ExpResult};
use crate::output::{num, write_snapshot, write_wigner, HashedCsv, NLS_LEDGER_COLUMNS, VLASOV_LEDGER_COLUMNS};

pub fn initial_state(init: &InitialData, grid: &SpatialGrid, hbar: f64) -> ExpResult<WaveFunction> {
    Ok(match *init {
        InitialData::Mollified { center, sigma } => {
            init_mollified(grid, &gaussian_density(grid, center, sigma), hbar)?
        }
        InitialData::Wkb {
            center,
            sigma,
            compression,
            width,
            boost,
        } => {
            let phase: Vec<f64> = grid
                .points()
                .iter()
                .map(|x| -compression * ((x - center) / width).tanh() + boost * x)
                .collect();
            init_wkb(grid, &gaussian_density(grid, center, sigma), &phase, hbar)?
        }
    })
}

fn initial_center(init: &InitialData) -> f64 {
    match *init {
        InitialData::Mollified { center, .. } | InitialData::Wkb { center, .. } => center,
    }
}

/// Space-time weight for residuals: centered in the run, three units wide,
/// and clear of the first and last step. `None` when fewer than four steps
/// fall inside it.
pub fn residual_weight(rc: &ResolvedConfig, dt: f64) -> Option<SpaceTimeBump> {
    let t = rc.config.time.t_final;
    let t_radius = (0.4 * t).min(0.5 * t - dt);
    (t_radius >= 2.0 * dt).then(|| SpaceTimeBump {
        t_center: 0.5 * t,
        t_radius,
        x_center: initial_center(&rc.config.initial),
        x_radius: 3.0,
    })
}

/// Vlasov run from the renormalized Husimi function of the initial state.
pub struct Reference {
    pub key: String,
    /// `None` for the unscreened limit field.
    pub epsilon: Option<f64>,
    pub hbar: f64,
    pub trajectory: VlasovTrajectory,
    pub moments: MomentSet,
}

/// Reference keys of a configuration with the screening they use.
pub fn reference_keys(rc: &ResolvedConfig) -> Vec<(String, Option<f64>)> {
    match &rc.config.kernel.epsilon {
        EpsilonRule::Coupled { .. } => vec![("vp".into(), None)],
        EpsilonRule::Fixed { values } => {
            let mut v: Vec<(String, Option<f64>)> = Vec::new();
            for e in values {
                let key = format!("eps_{e}");
                if !v.iter().any(|(k, _)| *k == key) {
                    v.push((key, Some(*e)));
                }
            }
            v
        }
    }
}

pub fn reference_key_for(rc: &ResolvedConfig, point: &SweepPoint) -> String {
    match rc.config.kernel.epsilon {
        EpsilonRule::Coupled { .. } => "vp".into(),
        EpsilonRule::Fixed { .. } => format!("eps_{}", point.epsilon),
    }
}

pub fn build_reference(rc: &ResolvedConfig, key: &str, epsilon: Option<f64>) -> ExpResult<Reference> {
    let cfg = &rc.config;
    let source = rc
        .points
        .iter()
        .min_by(|a, b| a.hbar.total_cmp(&b.hbar).then(b.n_x.cmp(&a.n_x)))
        .ok_or_else(|| ExpError::Config("no sweep points".into()))?;
    let g = make_grid(cfg.grid.length, source.n_x)?;
    let psi0 = initial_state(&cfg.initial, &g, source.hbar)?;
    let v = &cfg.vlasov;
    let vg = VlasovGrid::new(make_grid(v.length, v.n_x)?, v.n_xi, v.xi_max)?;
    let mut f0 = VlasovState::from_fn(vg.clone(), |_, _| 0.0);
    f0.f = husimi_coherent(&psi0, &vg.x.points(), &vg.xi());
    let mass = f0.mass();
    if !(mass > 0.0) {
        return Err(ExpError::Numerics("matched Husimi datum has no mass on the Vlasov grid".into()));
    }
    f0.f.mapv_inplace(|x| x / mass);
    let mode = match epsilon {
        None => FieldMode::SelfConsistent,
        Some(e) => FieldMode::Screened { epsilon: e },
    };
    let solver = VlasovSolver::new(vg.clone(), rc.sign(), mode);
    let t = cfg.time.t_final;
    let trajectory = vp_evolve(&solver, &f0, t, v.dt, &uniform_times(t, cfg.time.snapshots))?;
    let end = trajectory.snapshots.last().expect("final snapshot");
    let moments = MomentSet {
        x: vg.x.points(),
        dx: vg.x.dx(),
        profiles: end.moment_profiles(2),
        hbar: source.hbar,
        t: end.t,
        imag_residue: 0.0,
    };
    Ok(Reference {
        key: key.to_string(),
        epsilon,
        hbar: source.hbar,
        trajectory,
        moments,
    })
}

pub fn write_reference(dir: &Path, hash: &str, r: &Reference) -> ExpResult<()> {
    let sub = dir.join(format!("reference_{}", r.key));
    fs::create_dir_all(&sub)?;
    let mut ledger = HashedCsv::create(&sub.join("ledger.csv"), hash, VLASOV_LEDGER_COLUMNS)?;
    for row in &r.trajectory.ledger {
        ledger.row(&[row.t, row.mass, row.momentum, row.kinetic, row.interaction, row.total].map(num))?;
    }
    ledger.finish()?;
    let mut m = HashedCsv::create(&sub.join("moments.csv"), hash, &["x", "M0", "M1", "M2"])?;
    for (j, x) in r.moments.x.iter().enumerate() {
        m.row(&[*x, r.moments.profiles[0][j], r.moments.profiles[1][j], r.moments.profiles[2][j]].map(num))?;
    }
    m.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub kind: String,
    pub k: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NBodyRow {
    pub particles: usize,
    pub t: f64,
    pub trace_distance: f64,
    pub gap_direct: f64,
    pub gap_plancherel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub point: SweepPoint,
    pub status: String,
    pub weak_error: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub reference_mass_drift: f64,
    pub reference_energy_drift: f64,
    pub husimi_min: f64,
    pub wigner_min: f64,
    pub metrics: Vec<MetricRow>,
    pub nbody: Vec<NBodyRow>,
    pub error: String,
}

impl PointResult {
    pub fn failed(point: &SweepPoint, status: &str, error: String) -> Self {
        Self {
            point: point.clone(),
            status: status.into(),
            weak_error: f64::NAN,
            mass_drift: f64::NAN,
            energy_drift: f64::NAN,
            reference_mass_drift: f64::NAN,
            reference_energy_drift: f64::NAN,
            husimi_min: f64::NAN,
            wigner_min: f64::NAN,
            metrics: Vec::new(),
            nbody: Vec::new(),
            error,
        }
    }

    pub fn metric(&self, kind: &str, k: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.kind == kind && m.k == k).map(|m| m.value)
    }
}

/// Runs one sweep point, writing its ledger, moments and snapshots under
/// `dir/<point id>/`.
pub fn run_point(
    rc: &ResolvedConfig,
    point: &SweepPoint,
    reference: &Reference,
    hash: &str,
    dir: &Path,
) -> ExpResult<PointResult> {
    let cfg = &rc.config;
    let sub = dir.join(&point.id);
    let snap_dir = sub.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let g = make_grid(cfg.grid.length, point.n_x)?;
    let p = KernelParams::new(point.epsilon, rc.sign())?;
    let psi0 = initial_state(&cfg.initial, &g, point.hbar)?;
    let t_final = cfg.time.t_final;
    let (steps, dt) = step_plan(t_final, cfg.time.dt_factor * point.hbar)?;
    let marks = snapshot_steps(&uniform_times(t_final, cfg.time.snapshots), t_final, steps, dt)?;
    let keep_dense = t_final > 0.0 && !(cfg.diagnostics.residual_k.is_empty() && cfg.diagnostics.remainder_k.is_empty());

    let mut ledger = HashedCsv::create(&sub.join("ledger.csv"), hash, NLS_LEDGER_COLUMNS)?;
    let mut dense: Vec<WaveFunction> = Vec::new();
    let mut rows = Vec::new();
    let mut step = 0usize;
    let mut last: Option<WaveFunction> = None;
    let mut io_error: Option<ExpError> = None;
    let outcome = evolve_with(
        &psi0,
        t_final,
        dt,
        p,
        &uniform_times(t_final, steps.max(1)),
        DEFAULT_MONITOR_ORDER,
        &mut |s, row| {
            if marks.contains(&step) {
                let cells = [row.t, row.mass, row.momentum, row.kinetic, row.interaction, row.total_energy, row.weighted_x_norm];
                let written = ledger
                    .row(&cells.map(num))
                    .and_then(|_| write_snapshot(&snap_dir.join(format!("psi_{step:06}.bin")), s));
                if let Err(e) = written {
                    io_error = Some(e);
                    return Err(qvlasov::Error::Domain("output failure".into()));
                }
                rows.push(row.clone());
            }
            if keep_dense {
                dense.push(s.clone());
            }
            last = Some(s.clone());
            step += 1;
            Ok(())
        },
    );
    ledger.finish()?;
    if let Some(e) = io_error {
        return Err(e);
    }
    outcome?;
    let end = last.expect("evolution emits the final state");

    let m0 = rows[0].mass;
    let e0 = rows[0].total_energy;
    let mass_drift = rows.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max);
    let energy_drift = rows
        .iter()
        .map(|r| (r.total_energy - e0).abs() / e0.abs().max(1e-300))
        .fold(0.0, f64::max);

    let k_max = cfg.diagnostics.moments_k;
    let moments = moments_closed_form(&end, k_max)?;
    let cols: Vec<String> = std::iter::once("x".to_string())
        .chain((0..=k_max).map(|k| format!("M{k}")))
        .collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut mcsv = HashedCsv::create(&sub.join("moments.csv"), hash, &col_refs)?;
    for (j, x) in moments.x.iter().enumerate() {
        let mut cells = vec![num(*x)];
        cells.extend(moments.profiles.iter().map(|m| num(m[j])));
        mcsv.row(&cells)?;
    }
    mcsv.finish()?;

    let family = TestFunctionFamily::standard();
    let weak = weak_error(&moments, &reference.moments, &family)?;

    let w = wigner(&end)?;
    if cfg.diagnostics.write_wigner {
        write_wigner(&sub.join("wigner.bin"), &w)?;
    }
    let husimi_min = husimi(&w).min();
    let wigner_min = w.min();

    let pref = RemainderPrefactor::parse(&cfg.diagnostics.remainder_prefactor)?;
    let mut metrics = Vec::new();
    let phi = residual_weight(rc, dt).filter(|_| keep_dense && dense.len() >= 3);
    if let Some(phi) = phi {
        for &k in &cfg.diagnostics.residual_k {
            let v = moment_residual(&dense, p, k, &phi, pref, true)?;
            metrics.push(MetricRow { kind: "moment_residual".into(), k, value: v });
        }
        for &k in &cfg.diagnostics.remainder_k {
            let v = remainder_pairing(&dense, p, k, &phi, pref)?;
            metrics.push(MetricRow { kind: "remainder_pairing".into(), k, value: v });
        }
    }
    for &k in &cfg.diagnostics.remainder_k {
        let r = remainder(&end, p, k, pref)?;
        let sup = r.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        metrics.push(MetricRow { kind: "remainder_sup".into(), k, value: sup });
        metrics.push(MetricRow { kind: "remainder_imag_residue".into(), k, value: r.imag_residue });
    }
    metrics.extend(positivity_probes(rc, point, &g)?);

    let nbody = match &cfg.nbody {
        Some(nb) => nbody_rows(rc, point, nb, p)?,
        None => Vec::new(),
    };

    Ok(PointResult {
        point: point.clone(),
        status: "ok".into(),
        weak_error: weak,
        mass_drift,
        energy_drift,
        reference_mass_drift: reference.trajectory.max_mass_drift(),
        reference_energy_drift: reference.trajectory.max_relative_energy_drift(),
        husimi_min,
        wigner_min,
        metrics,
        nbody,
        error: String::new(),
    })
}

/// Husimi minima of seeded random superpositions under a Gaussian envelope.
fn positivity_probes(rc: &ResolvedConfig, point: &SweepPoint, g: &SpatialGrid) -> ExpResult<Vec<MetricRow>> {
    let count = rc.config.diagnostics.positivity_probes;
    if count == 0 {
        return Ok(Vec::new());
    }
    let seed = rc.config.seed ^ (point.hbar.to_bits().rotate_left(17)) ^ point.n_x as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..count {
        let modes: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)))
            .collect();
        let psi: Vec<_> = g
            .points()
            .iter()
            .map(|&x| {
                let env = (-x * x / 4.0).exp();
                modes
                    .iter()
                    .map(|&(a, b, k)| num_complex::Complex64::new(a, b) * num_complex::Complex64::from_polar(env, k * x / point.hbar))
                    .sum::<num_complex::Complex64>()
            })
            .collect();
        let state = WaveFunction::normalized(*g, point.hbar, psi)?;
        let m = husimi(&wigner(&state)?).min();
        out.push(MetricRow { kind: "husimi_probe_min".into(), k: i, value: m });
    }
    Ok(out)
}

fn nbody_rows(
    rc: &ResolvedConfig,
    point: &SweepPoint,
    nb: &crate::config::NBodyConfig,
    p: KernelParams,
) -> ExpResult<Vec<NBodyRow>> {
    let g = make_grid(nb.length, nb.n_x)?;
    let psi0 = initial_state(&rc.config.initial, &g, point.hbar)?;
    let hartree = evolve(&psi0, nb.t_final, nb.dt, p, &[0.0, nb.t_final])?;
    let admissible = correlation_stride(&g, point.hbar).is_ok();
    let mut out = Vec::new();
    for &n in &nb.particles {
        let states = nbody_evolve(&psi0, n, nb.t_final, nb.dt, p, &[0.0, nb.t_final], DEFAULT_MEMORY_CAP)?;
        for (s, target) in states.iter().zip(&hartree.snapshots) {
            let gamma = marginal(s);
            let td = trace_distance(&gamma, target)?;
            let (direct, planch) = if admissible {
                let gap = wigner_gap(&gamma, target)?;
                (gap.direct, gap.plancherel)
            } else {
                (f64::NAN, f64::NAN)
            };
            out.push(NBodyRow {
                particles: n,
                t: s.t,
                trace_distance: td,
                gap_direct: direct,
                gap_plancherel: planch,
            });
        }
    }
    Ok(out)
}
