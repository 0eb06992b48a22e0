//! Reference solver for `f_t + xi f_x - E f_xi = 0` with the cumulative field
//! `E = 1/2 sgn * rho`.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::grid::{SpatialGrid, Spectral};
use crate::potential::{default_jump_threshold, limit_field, volpert_average, Convolver, KernelParams, Sign};

/// Periodic `x` grid tensored with cell-centered `xi` on `[-xi_max, xi_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VlasovGrid {
    pub x: SpatialGrid,
    pub n_xi: usize,
    pub xi_max: f64,
}

impl VlasovGrid {
    pub fn new(x: SpatialGrid, n_xi: usize, xi_max: f64) -> Result<Self> {
        if n_xi < 4 || !(xi_max > 0.0) {
            return Err(Error::Config(format!(
                "velocity axis needs n_xi >= 4 and xi_max > 0, got {n_xi}, {xi_max}"
            )));
        }
        Ok(Self { x, n_xi, xi_max })
    }

    pub fn dxi(&self) -> f64 {
        2.0 * self.xi_max / self.n_xi as f64
    }

    pub fn xi(&self) -> Vec<f64> {
        (0..self.n_xi)
            .map(|l| -self.xi_max + (l as f64 + 0.5) * self.dxi())
            .collect()
    }

    pub fn cell(&self) -> f64 {
        self.x.dx() * self.dxi()
    }
}

#[derive(Clone, Debug)]
pub struct VlasovState {
    pub grid: VlasovGrid,
    /// Rows indexed by `x`, columns by `xi`.
    pub f: Array2<f64>,
    pub t: f64,
}

impl VlasovState {
    pub fn from_fn(grid: VlasovGrid, f0: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.x.points();
        let xis = grid.xi();
        let f = Array2::from_shape_fn((grid.x.n(), grid.n_xi), |(j, l)| f0(xs[j], xis[l]));
        Self { grid, f, t: 0.0 }
    }

    pub fn density(&self) -> Vec<f64> {
        let d = self.grid.dxi();
        self.f.rows().into_iter().map(|r| r.sum() * d).collect()
    }

    pub fn mass(&self) -> f64 {
        self.f.sum() * self.grid.cell()
    }

    /// `sum xi^p f dx dxi`.
    pub fn velocity_moment(&self, p: i32) -> f64 {
        let xi = self.grid.xi();
        let mut acc = 0.0;
        for row in self.f.rows() {
            acc += row.iter().zip(&xi).map(|(f, v)| f * v.powi(p)).sum::<f64>();
        }
        acc * self.grid.cell()
    }

    /// `M_k(x) = sum_l xi_l^k f dxi`.
    pub fn moment_profiles(&self, k_max: usize) -> Vec<Vec<f64>> {
        let xi = self.grid.xi();
        let d = self.grid.dxi();
        (0..=k_max)
            .map(|k| {
                self.f
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().zip(&xi).map(|(f, v)| f * v.powi(k as i32)).sum::<f64>() * d)
                    .collect()
            })
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `sum_ij |x_i - x_j| rho_i rho_j dx^2`.
pub fn interaction_energy_direct(grid: &SpatialGrid, rho: &[f64]) -> f64 {
    let xs = grid.points();
    let mut acc = 0.0;
    for i in 0..xs.len() {
        if rho[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..xs.len() {
            row += (xs[i] - xs[j]).abs() * rho[j];
        }
        acc += rho[i] * row;
    }
    acc * grid.dx() * grid.dx()
}

/// `sum_ij |x_i - x_j| rho_i rho_j dx^2` through the weighted transforms
/// `F = <x>^{-(1+d)} (|.| * rho)` and `G = cumsum <x>^{1+d} rho dx`, summed by
/// parts. The first term is the boundary contribution at the right box edge.
pub fn interaction_energy_weighted(grid: &SpatialGrid, rho: &[f64], delta: f64) -> Result<f64> {
    check_len(grid.n(), rho.len())?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("weight exponent must lie in (0, 1), got {delta}")));
    }
    let bm = grid.boundary_mass(rho);
    if bm > 1e-8 {
        log::warn!("boundary mass {bm:.3e}; the weighted identity assumes decay");
    }
    let xs = grid.points();
    let dx = grid.dx();
    let w: Vec<f64> = xs.iter().map(|x| (1.0 + x * x).sqrt().powf(1.0 + delta)).collect();
    let f: Vec<f64> = xs
        .iter()
        .zip(&w)
        .map(|(&x, wi)| xs.iter().zip(rho).map(|(y, r)| (x - y).abs() * r).sum::<f64>() * dx / wi)
        .collect();
    let mut g = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (wi, r) in w.iter().zip(rho) {
        acc += wi * r * dx;
        g.push(acc);
    }
    let n = xs.len();
    let mut sum = g[n - 1] * f[n - 1];
    for i in 0..n - 1 {
        sum -= g[i] * (f[i + 1] - f[i]);
    }
    Ok(sum)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VlasovLedgerRow {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub total: f64,
}

/// Mass, momentum, `sum xi^2 f` and `1/2 s sum |x-y| rho rho`.
pub fn vp_conservation(state: &VlasovState, sign: Sign) -> VlasovLedgerRow {
    let rho = state.density();
    let kinetic = state.velocity_moment(2);
    let interaction = 0.5 * sign.value() * interaction_energy_direct(&state.grid.x, &rho);
    VlasovLedgerRow {
        t: state.t,
        mass: state.mass(),
        momentum: state.velocity_moment(1),
        kinetic,
        interaction,
        total: kinetic + interaction,
    }
}

/// Cell-average shift `out(xi) = f(xi + a)` through a monotone Hermite cubic
/// of the cumulative distribution. Values beyond the axis are zero.
pub fn shift_cells(f: &[f64], dxi: f64, a: f64, out: &mut [f64]) {
    let n = f.len() as i64;
    let at = |i: i64| if i < 0 || i >= n { 0.0 } else { f[i as usize] };
    // Interface slopes of the cumulative distribution, limited so that each
    // Hermite piece stays monotone.
    let slope = |i: i64| -> f64 {
        if i <= 0 || i >= n {
            return 0.0;
        }
        let raw = (-at(i - 2) + 7.0 * at(i - 1) + 7.0 * at(i) - at(i + 1)) / 12.0;
        let cap = 3.0 * at(i - 1).min(at(i));
        if cap <= 0.0 {
            0.0
        } else {
            raw.clamp(0.0, cap)
        }
    };
    let q = (a / dxi).floor();
    let s = a / dxi - q;
    let q = q as i64;
    let s2 = s * s;
    let s3 = s2 * s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h10 = s3 - 2.0 * s2 + s;
    let h11 = s3 - s2;
    // Fraction of cell i lying below b_i + s dxi, divided by dxi.
    let partial = |i: i64| -> f64 {
        if i < 0 || i >= n {
            return 0.0;
        }
        at(i) * h01 + slope(i) * h10 + slope(i + 1) * h11
    };
    for (l, o) in out.iter_mut().enumerate() {
        let i = l as i64 + q;
        *o = at(i) - partial(i) + partial(i + 1);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldMode {
    /// `E = s (M0 - m/2)` with the jump average.
    SelfConsistent,
    /// Smooth field `s d/dx (K_eps * rho)` of a fixed screening length.
    Screened { epsilon: f64 },
    /// Field forced to zero.
    Neutral,
}

#[derive(Clone)]
pub struct VlasovSolver {
    pub grid: VlasovGrid,
    pub sign: Sign,
    pub mode: FieldMode,
    /// Jump threshold for the symmetric average; `None` uses the default rule.
    pub jump_threshold: Option<f64>,
    spectral: Spectral,
    xi: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct StepReport {
    /// Most negative value after the step, relative to the maximum.
    pub relative_undershoot: f64,
}

impl VlasovSolver {
    pub fn new(grid: VlasovGrid, sign: Sign, mode: FieldMode) -> Self {
        let spectral = Spectral::new(grid.x);
        let xi = grid.xi();
        Self {
            grid,
            sign,
            mode,
            jump_threshold: None,
            spectral,
            xi,
        }
    }

    /// Field used by the velocity shift.
    pub fn field(&self, rho: &[f64]) -> Result<Vec<f64>> {
        if self.sign == Sign::Off {
            return Ok(vec![0.0; rho.len()]);
        }
        match self.mode {
            FieldMode::Neutral => Ok(vec![0.0; rho.len()]),
            FieldMode::Screened { epsilon } => {
                let p = KernelParams::new(epsilon, self.sign)?;
                Ok(Convolver::new(self.grid.x, p).field(rho)?.values)
            }
            FieldMode::SelfConsistent => {
                let e = limit_field(&self.grid.x, rho)?;
                let thr = match self.jump_threshold {
                    Some(t) => t,
                    None => default_jump_threshold(&self.grid.x, &e.values)?,
                };
                let s = self.sign.value();
                Ok(volpert_average(&e.values, thr).into_iter().map(|v| s * v).collect())
            }
        }
    }

    /// Ledger row with the interaction energy matching the field mode.
    pub fn ledger_row(&self, state: &VlasovState) -> Result<VlasovLedgerRow> {
        match self.mode {
            FieldMode::Screened { epsilon } => {
                let p = KernelParams::new(epsilon, self.sign)?;
                let interaction = 2.0 * Convolver::new(self.grid.x, p).interaction_energy(&state.density())?;
                let kinetic = state.velocity_moment(2);
                Ok(VlasovLedgerRow {
                    t: state.t,
                    mass: state.mass(),
                    momentum: state.velocity_moment(1),
                    kinetic,
                    interaction,
                    total: kinetic + interaction,
                })
            }
            _ => Ok(vp_conservation(state, self.sign)),
        }
    }

    fn advect_x(&self, f: &mut Array2<f64>, dt: f64) {
        let sp = &self.spectral;
        Zip::from(f.axis_iter_mut(Axis(1)))
            .and(&ndarray::ArrayView1::from(&self.xi[..]))
            .par_for_each(|mut col, &xi| {
                let mut buf: Vec<C64> = col.iter().map(|&v| C64::new(v, 0.0)).collect();
                sp.forward_in_place(&mut buf);
                let nyquist = buf.len() / 2;
                for (i, (b, &k)) in buf.iter_mut().zip(sp.k()).enumerate() {
                    // the unpaired Nyquist mode takes the real part of its phase
                    *b *= if i == nyquist {
                        C64::new((k * xi * dt).cos(), 0.0)
                    } else {
                        C64::from_polar(1.0, -k * xi * dt)
                    };
                }
                sp.inverse_in_place(&mut buf);
                col.iter_mut().zip(&buf).for_each(|(c, b)| *c = b.re);
            });
    }

    fn advect_xi(&self, f: &mut Array2<f64>, e: &[f64], dt: f64) {
        let dxi = self.grid.dxi();
        Zip::from(f.axis_iter_mut(Axis(0)))
            .and(&ndarray::ArrayView1::from(e))
            .par_for_each(|mut row, &ej| {
                if ej == 0.0 {
                    return;
                }
                let src: Vec<f64> = row.to_vec();
                let mut out = vec![0.0; src.len()];
                shift_cells(&src, dxi, ej * dt, &mut out);
                row.iter_mut().zip(&out).for_each(|(r, o)| *r = *o);
            });
    }

    pub fn vp_step(&self, state: &mut VlasovState, dt: f64) -> Result<StepReport> {
        if dt * self.grid.xi_max > 0.25 * self.grid.x.length() {
            return Err(Error::Config(format!(
                "time step {dt} moves the fastest cell beyond a quarter box"
            )));
        }
        self.advect_x(&mut state.f, 0.5 * dt);
        let e = self.field(&state.density())?;
        self.advect_xi(&mut state.f, &e, dt);
        self.advect_x(&mut state.f, 0.5 * dt);
        state.t += dt;
        let max = state.max();
        let min = state.min();
        if !max.is_finite() || !min.is_finite() {
            return Err(Error::Blowup {
                t: state.t,
                detail: "non-finite phase-space density".into(),
            });
        }
        let rel = if max > 0.0 { (-min / max).max(0.0) } else { 0.0 };
        if rel > 1e-6 {
            log::warn!("negative overshoot {:.3e} of the maximum at t = {}", rel, state.t);
        }
        Ok(StepReport {
            relative_undershoot: rel,
        })
    }
}

#[derive(Clone, Debug)]
pub struct VlasovTrajectory {
    pub snapshots: Vec<VlasovState>,
    pub ledger: Vec<VlasovLedgerRow>,
    pub dt: f64,
    pub worst_undershoot: f64,
}

impl VlasovTrajectory {
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.ledger[0].mass;
        self.ledger.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max)
    }

    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.ledger[0].total;
        self.ledger
            .iter()
            .map(|r| (r.total - e0).abs() / e0.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

pub fn vp_evolve(
    solver: &VlasovSolver,
    f0: &VlasovState,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<VlasovTrajectory> {
    let (steps, dt) = crate::hartree::step_plan(t_final, dt)?;
    let times: Vec<f64> = if snapshot_times.is_empty() {
        vec![0.0, t_final]
    } else {
        snapshot_times.to_vec()
    };
    let marks = crate::hartree::snapshot_steps(&times, t_final, steps, dt)?;
    let mut state = f0.clone();
    let t0 = f0.t;
    let mut out = VlasovTrajectory {
        snapshots: Vec::new(),
        ledger: Vec::new(),
        dt,
        worst_undershoot: 0.0,
    };
    let mut next = 0;
    for s in 0..=steps {
        if s > 0 {
            let r = solver.vp_step(&mut state, dt)?;
            state.t = t0 + s as f64 * dt;
            out.worst_undershoot = out.worst_undershoot.max(r.relative_undershoot);
        }
        if next < marks.len() && marks[next] == s {
            out.ledger.push(solver.ledger_row(&state)?);
            out.snapshots.push(state.clone());
            next += 1;
        }
    }
    Ok(out)
}

/// Smooth test function on `(t, x, xi)` with analytic partial derivatives.
pub trait SpaceTimeTest: Sync {
    fn value(&self, t: f64, x: f64, xi: f64) -> f64;
    fn d_t(&self, t: f64, x: f64, xi: f64) -> f64;
    fn d_x(&self, t: f64, x: f64, xi: f64) -> f64;
    fn d_xi(&self, t: f64, x: f64, xi: f64) -> f64;
    /// `[(t0, t1), (x0, x1), (xi0, xi1)]` outside of which the function vanishes.
    fn support(&self) -> [(f64, f64); 3];
}

/// `exp(-1/(1-s^2))` and its derivative in `s`.
pub fn bump(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let v = (-1.0 / q).exp();
    (v, v * (-2.0 * s / (q * q)))
}

/// Product of three bumps centered at `c` with half-widths `r`.
#[derive(Clone, Copy, Debug)]
pub struct BumpTest {
    pub center: [f64; 3],
    pub radius: [f64; 3],
    pub amplitude: f64,
}

impl BumpTest {
    fn parts(&self, t: f64, x: f64, xi: f64) -> [(f64, f64); 3] {
        let v = [t, x, xi];
        let mut out = [(0.0, 0.0); 3];
        for i in 0..3 {
            let (b, db) = bump((v[i] - self.center[i]) / self.radius[i]);
            out[i] = (b, db / self.radius[i]);
        }
        out
    }
}

impl SpaceTimeTest for BumpTest {
    fn value(&self, t: f64, x: f64, xi: f64) -> f64 {
        let p = self.parts(t, x, xi);
        self.amplitude * p[0].0 * p[1].0 * p[2].0
    }
    fn d_t(&self, t: f64, x: f64, xi: f64) -> f64 {
        let p = self.parts(t, x, xi);
        self.amplitude * p[0].1 * p[1].0 * p[2].0
    }
    fn d_x(&self, t: f64, x: f64, xi: f64) -> f64 {
        let p = self.parts(t, x, xi);
        self.amplitude * p[0].0 * p[1].1 * p[2].0
    }
    fn d_xi(&self, t: f64, x: f64, xi: f64) -> f64 {
        let p = self.parts(t, x, xi);
        self.amplitude * p[0].0 * p[1].0 * p[2].1
    }
    fn support(&self) -> [(f64, f64); 3] {
        let mut s = [(0.0, 0.0); 3];
        for i in 0..3 {
            s[i] = (self.center[i] - self.radius[i], self.center[i] + self.radius[i]);
        }
        s
    }
}

/// Trapezoid weights for samples at `times`.
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let m = times.len();
    let mut w = vec![0.0; m];
    for i in 0..m.saturating_sub(1) {
        let h = times[i + 1] - times[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// `int int int (phi_t + xi phi_x - E phi_xi) f` over the stored snapshots.
pub fn weak_solution_residual(
    solver: &VlasovSolver,
    snapshots: &[VlasovState],
    phi: &dyn SpaceTimeTest,
) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::Config("weak residual needs at least two snapshots".into()));
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let g = &solver.grid;
    let sup = phi.support();
    let half = 0.5 * g.x.length();
    let inside = sup[0].0 >= times[0] - 1e-12
        && sup[0].1 <= times[times.len() - 1] + 1e-12
        && sup[1].0 >= -half
        && sup[1].1 <= half - g.x.dx()
        && sup[2].0 >= -g.xi_max
        && sup[2].1 <= g.xi_max;
    if !inside {
        return Err(Error::Domain("test function support leaves the space-time box".into()));
    }
    let w = trapezoid_weights(&times);
    let xs = g.x.points();
    let xis = g.xi();
    let mut total = 0.0;
    for (snap, wt) in snapshots.iter().zip(&w) {
        let e = solver.field(&snap.density())?;
        let t = snap.t;
        let mut acc = 0.0;
        for (j, &x) in xs.iter().enumerate() {
            if x <= sup[1].0 || x >= sup[1].1 {
                continue;
            }
            for (l, &xi) in xis.iter().enumerate() {
                if xi <= sup[2].0 || xi >= sup[2].1 {
                    continue;
                }
                let integrand =
                    phi.d_t(t, x, xi) + xi * phi.d_x(t, x, xi) - e[j] * phi.d_xi(t, x, xi);
                acc += integrand * snap.f[[j, l]];
            }
        }
        total += wt * acc * g.cell();
    }
    Ok(total)
}
