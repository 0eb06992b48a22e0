//! One-body Hartree equation `i h psi_t = -h^2/2 psi'' + (V * |psi|^2) psi`
//! on the periodic box, integrated by Strang splitting.

use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::grid::{l2_norm, SpatialGrid, Spectral};
use crate::potential::{Convolver, KernelParams, Sign};

#[derive(Clone, Debug)]
pub struct WaveFunction {
    pub grid: SpatialGrid,
    pub hbar: f64,
    pub t: f64,
    pub psi: Vec<C64>,
}

impl WaveFunction {
    pub fn new(grid: SpatialGrid, hbar: f64, psi: Vec<C64>) -> Result<Self> {
        check_len(grid.n(), psi.len())?;
        if !(hbar > 0.0) {
            return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self {
            grid,
            hbar,
            t: 0.0,
            psi,
        })
    }

    /// Builds from samples and rescales to unit L2 norm.
    pub fn normalized(grid: SpatialGrid, hbar: f64, psi: Vec<C64>) -> Result<Self> {
        let mut w = Self::new(grid, hbar, psi)?;
        let norm = l2_norm(&grid, &w.psi);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("cannot normalize a zero wave function".into()));
        }
        w.psi.iter_mut().for_each(|v| *v /= norm);
        Ok(w)
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.density())
    }

    /// `||h^k d^k psi||_2`.
    pub fn scaled_derivative_norm(&self, k: u32) -> f64 {
        if k == 0 {
            return l2_norm(&self.grid, &self.psi);
        }
        let d = Spectral::new(self.grid).derivative(&self.psi, k).expect("grid length");
        self.hbar.powi(k as i32) * l2_norm(&self.grid, &d)
    }
}

/// Normalized Gaussian density with the given center and standard deviation.
pub fn gaussian_density(grid: &SpatialGrid, center: f64, sigma: f64) -> Vec<f64> {
    let c = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    grid.points()
        .iter()
        .map(|&x| c * (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// `psi = sqrt(base * j_h)` with `j_h(x) = (h sqrt(pi))^{-1} exp(-x^2/h^2)`,
/// normalized. The convolution is summed directly so the result stays
/// strictly nonnegative without FFT roundoff in the tails.
pub fn init_mollified(grid: &SpatialGrid, base: &[f64], hbar: f64) -> Result<WaveFunction> {
    check_len(grid.n(), base.len())?;
    if base.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("base profile must be finite and nonnegative".into()));
    }
    if !(grid.integrate(base) > 0.0) {
        return Err(Error::Domain("base profile has zero mass".into()));
    }
    if !(hbar > 0.0) {
        return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
    }
    let n = grid.n();
    let dx = grid.dx();
    let reach = ((12.0 * hbar / dx).ceil() as usize).min(n / 2);
    let norm = 1.0 / (hbar * std::f64::consts::PI.sqrt());
    let taps: Vec<f64> = (0..=reach)
        .map(|d| norm * (-(d as f64 * dx / hbar).powi(2)).exp() * dx)
        .collect();
    let rho: Vec<f64> = (0..n)
        .map(|j| {
            let mut acc = base[j] * taps[0];
            for (d, &w) in taps.iter().enumerate().skip(1) {
                acc += w * (base[(j + d) % n] + base[(j + n - d) % n]);
            }
            acc
        })
        .collect();
    WaveFunction::normalized(
        *grid,
        hbar,
        rho.into_iter().map(|r| C64::new(r.sqrt(), 0.0)).collect(),
    )
}

/// `psi = sqrt(rho0) exp(i S / h)`, normalized.
pub fn init_wkb(grid: &SpatialGrid, rho0: &[f64], phase: &[f64], hbar: f64) -> Result<WaveFunction> {
    check_len(grid.n(), rho0.len())?;
    check_len(grid.n(), phase.len())?;
    if rho0.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("WKB amplitude density must be nonnegative".into()));
    }
    let psi = rho0
        .iter()
        .zip(phase)
        .map(|(&r, &s)| C64::from_polar(r.sqrt(), s / hbar))
        .collect();
    WaveFunction::normalized(*grid, hbar, psi)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub total_energy: f64,
    pub weighted_x_norm: f64,
    /// `||<x>^{1/2} h^k d^k psi||` for `k = 1..`.
    pub weighted_derivative_norms: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ConservationLedger {
    pub rows: Vec<LedgerRow>,
}

impl ConservationLedger {
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.rows.first().map(|r| r.mass).unwrap_or(0.0);
        self.rows.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max)
    }

    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.rows.first().map(|r| r.total_energy).unwrap_or(0.0);
        self.rows
            .iter()
            .map(|r| (r.total_energy - e0).abs() / e0.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

pub const DEFAULT_MONITOR_ORDER: u32 = 3;

/// Diagnostics for one state. Interaction is `1/2 sum V(x-y) rho rho`.
pub fn ledger_row(psi: &WaveFunction, conv: &Convolver, monitor_order: u32) -> Result<LedgerRow> {
    let g = psi.grid;
    let sp = conv.spectral();
    let h = psi.hbar;
    let rho = psi.density();
    let d1 = sp.derivative(&psi.psi, 1)?;
    let momentum = g.dx() * h * psi.psi.iter().zip(&d1).map(|(p, d)| (p.conj() * d).im).sum::<f64>();
    let kinetic = 0.5 * h * h * d1.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx();
    let interaction = conv.interaction_energy(&rho)?;
    let bracket: Vec<f64> = g.points().iter().map(|x| (1.0 + x * x).sqrt()).collect();
    let weighted_x_norm =
        (g.dx() * rho.iter().zip(&bracket).map(|(r, b)| r * b * b).sum::<f64>()).sqrt();
    let mut weighted_derivative_norms = Vec::new();
    for k in 1..=monitor_order {
        let d = sp.derivative(&psi.psi, k)?;
        let s = h.powi(k as i32);
        let v = g.dx() * d.iter().zip(&bracket).map(|(d, b)| b * (s * d).norm_sqr()).sum::<f64>();
        weighted_derivative_norms.push(v.sqrt());
    }
    Ok(LedgerRow {
        t: psi.t,
        mass: g.integrate(&rho),
        momentum,
        kinetic,
        interaction,
        total_energy: kinetic + interaction,
        weighted_x_norm,
        weighted_derivative_norms,
    })
}

pub fn energy(psi: &WaveFunction, p: KernelParams) -> Result<f64> {
    let conv = Convolver::new(psi.grid, p);
    let r = ledger_row(psi, &conv, 0)?;
    Ok(r.total_energy)
}

/// Growth factor of `||h psi'||` that aborts a focusing run.
pub const WATCHDOG_GROWTH: f64 = 1e3;

/// Strang propagator for a fixed `(grid, h, dt, kernel)`.
pub struct NlsPropagator {
    conv: Convolver,
    hbar: f64,
    dt: f64,
    kinetic: Vec<C64>,
}

impl NlsPropagator {
    pub fn new(grid: SpatialGrid, hbar: f64, dt: f64, params: KernelParams) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if !(hbar > 0.0) {
            return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
        }
        let conv = Convolver::new(grid, params);
        let kinetic = conv
            .spectral()
            .k()
            .iter()
            .map(|&k| C64::from_polar(1.0, -0.5 * dt * hbar * k * k))
            .collect();
        Ok(Self {
            conv,
            hbar,
            dt,
            kinetic,
        })
    }

    pub fn convolver(&self) -> &Convolver {
        &self.conv
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn potential(&self, psi: &[C64]) -> Result<Vec<f64>> {
        if self.conv.params().sign == Sign::Off {
            return Ok(vec![0.0; psi.len()]);
        }
        let rho: Vec<f64> = psi.iter().map(|v| v.norm_sqr()).collect();
        self.conv.convolve(&rho)
    }

    fn kick(&self, psi: &mut [C64], v: &[f64]) {
        let a = -0.5 * self.dt / self.hbar;
        for (p, &vj) in psi.iter_mut().zip(v) {
            *p *= C64::from_polar(1.0, a * vj);
        }
    }

    /// One step; `v` must hold the potential of `psi` on entry and holds the
    /// potential of the updated state on exit.
    pub fn advance(&self, psi: &mut [C64], v: &mut Vec<f64>) -> Result<()> {
        self.kick(psi, v);
        let sp = self.conv.spectral();
        sp.forward_in_place(psi);
        for (p, m) in psi.iter_mut().zip(&self.kinetic) {
            *p *= m;
        }
        sp.inverse_in_place(psi);
        *v = self.potential(psi)?;
        self.kick(psi, v);
        Ok(())
    }
}

/// Single Strang step of the state.
pub fn step(psi: &WaveFunction, dt: f64, p: KernelParams) -> Result<WaveFunction> {
    let prop = NlsPropagator::new(psi.grid, psi.hbar, dt, p)?;
    let mut out = psi.clone();
    let mut v = prop.potential(&out.psi)?;
    prop.advance(&mut out.psi, &mut v)?;
    out.t += dt;
    check_finite(&out.psi, out.t)?;
    Ok(out)
}

fn check_finite(psi: &[C64], t: f64) -> Result<()> {
    if psi.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Blowup {
            t,
            detail: "non-finite amplitude".into(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<WaveFunction>,
    pub ledger: ConservationLedger,
    /// Step actually used: `T / ceil(T / dt)`.
    pub dt: f64,
}

/// Step count and effective step so that `T` is hit exactly.
pub fn step_plan(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_final >= 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!("invalid time plan T = {t_final}, dt = {dt}")));
    }
    if t_final == 0.0 {
        return Ok((0, dt));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

/// Maps requested times to step indices on the effective step.
pub fn snapshot_steps(times: &[f64], t_final: f64, steps: usize, dt: f64) -> Result<Vec<usize>> {
    let mut idx = Vec::new();
    for &t in times {
        if t < -1e-12 || t > t_final + 1e-9 {
            return Err(Error::Config(format!("snapshot time {t} outside [0, {t_final}]")));
        }
        let s = ((t / dt).round() as usize).min(steps);
        if (s as f64 * dt - t).abs() > 1e-9 * t_final.max(1.0) {
            log::warn!("snapshot time {t} moved to {} to land on a step", s as f64 * dt);
        }
        idx.push(s);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Runs to `T`, handing every snapshot and its ledger row to `sink`.
pub fn evolve_with(
    psi0: &WaveFunction,
    t_final: f64,
    dt: f64,
    p: KernelParams,
    snapshot_times: &[f64],
    monitor_order: u32,
    sink: &mut dyn FnMut(&WaveFunction, &LedgerRow) -> Result<()>,
) -> Result<f64> {
    let (steps, dt) = step_plan(t_final, dt)?;
    let times: Vec<f64> = if snapshot_times.is_empty() {
        vec![0.0, t_final]
    } else {
        snapshot_times.to_vec()
    };
    let marks = snapshot_steps(&times, t_final, steps, dt)?;
    let prop = NlsPropagator::new(psi0.grid, psi0.hbar, dt, p)?;
    let mut state = psi0.clone();
    let t0 = psi0.t;
    let mut v = prop.potential(&state.psi)?;
    let grad0 = state.scaled_derivative_norm(1).max(1e-12);
    let watch = p.sign == Sign::Focusing;
    let mut next = 0;
    for s in 0..=steps {
        if s > 0 {
            prop.advance(&mut state.psi, &mut v)?;
            state.t = t0 + s as f64 * dt;
            if s % 64 == 0 || s == steps {
                check_finite(&state.psi, state.t)?;
                if watch {
                    let g = state.scaled_derivative_norm(1);
                    if g > WATCHDOG_GROWTH * grad0 {
                        return Err(Error::Blowup {
                            t: state.t,
                            detail: format!("gradient norm grew from {grad0:.3e} to {g:.3e}"),
                        });
                    }
                }
            }
        }
        if next < marks.len() && marks[next] == s {
            check_finite(&state.psi, state.t)?;
            let row = ledger_row(&state, prop.convolver(), monitor_order)?;
            sink(&state, &row)?;
            next += 1;
        }
    }
    Ok(dt)
}

pub fn evolve(
    psi0: &WaveFunction,
    t_final: f64,
    dt: f64,
    p: KernelParams,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    let mut ledger = ConservationLedger::default();
    let dt = evolve_with(
        psi0,
        t_final,
        dt,
        p,
        snapshot_times,
        DEFAULT_MONITOR_ORDER,
        &mut |s, r| {
            snapshots.push(s.clone());
            ledger.rows.push(r.clone());
            Ok(())
        },
    )?;
    Ok(Trajectory {
        snapshots,
        ledger,
        dt,
    })
}

/// Evenly spaced snapshot times `0, T/m, ..., T`.
pub fn uniform_times(t_final: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| t_final * i as f64 / intervals as f64)
        .collect()
}
