//! Exact few-body dynamics on a tensor grid and mean-field gap metrics.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{ArrayD, Axis, IxDyn, Zip};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{check_len, Error, Result};
use crate::grid::SpatialGrid;
use crate::hartree::{snapshot_steps, step_plan, WaveFunction};
use crate::phase_space::{wigner_from_kernel, wigner_midpoints_from_kernel};
use crate::potential::{kernel_eval, KernelParams};

pub const DEFAULT_MEMORY_CAP: usize = 512 << 20;

/// Bytes held while propagating `n^N` amplitudes (state, phase and FFT lanes).
pub fn memory_estimate(n: usize, particles: usize) -> usize {
    n.pow(particles as u32) * 16 * 3
}

#[derive(Clone, Debug)]
pub struct NBodyWaveFunction {
    pub grid: SpatialGrid,
    pub particles: usize,
    pub hbar: f64,
    pub params: KernelParams,
    pub t: f64,
    /// Shape `[n; N]`, first coordinate slowest.
    pub psi: ArrayD<C64>,
}

impl NBodyWaveFunction {
    /// `psi (x) psi (x) ...`.
    pub fn product(psi: &WaveFunction, particles: usize, params: KernelParams) -> Result<Self> {
        if !(2..=3).contains(&particles) {
            return Err(Error::Config(format!("particle number must be 2 or 3, got {particles}")));
        }
        let n = psi.grid.n();
        let shape = vec![n; particles];
        let data = ArrayD::from_shape_fn(IxDyn(&shape), |ix| {
            (0..particles).map(|a| psi.psi[ix[a]]).product::<C64>()
        });
        Ok(Self {
            grid: psi.grid,
            particles,
            hbar: psi.hbar,
            params,
            t: psi.t,
            psi: data,
        })
    }

    pub fn norm(&self) -> f64 {
        let dv = self.grid.dx().powi(self.particles as i32);
        (self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv).sqrt()
    }

    /// Largest deviation under exchange of the first two coordinates.
    pub fn exchange_asymmetry(&self) -> f64 {
        let mut swapped = self.psi.view();
        swapped.swap_axes(0, 1);
        let dv = self.grid.dx().powi(self.particles as i32);
        (Zip::from(&self.psi)
            .and(&swapped)
            .fold(0.0, |acc, a, b| acc + (a - b).norm_sqr())
            * dv)
            .sqrt()
    }
}

/// `(1/N) sum_{j<k} V(x_j - x_k)` on the grid.
fn pair_potential(grid: &SpatialGrid, particles: usize, params: KernelParams) -> ArrayD<f64> {
    let n = grid.n();
    let table: Vec<f64> = (0..n).map(|d| kernel_eval(grid.offset(d), params)).collect();
    let shape = vec![n; particles];
    ArrayD::from_shape_fn(IxDyn(&shape), |ix| {
        let mut v = 0.0;
        for a in 0..particles {
            for b in a + 1..particles {
                v += table[(ix[a] + n - ix[b]) % n];
            }
        }
        v / particles as f64
    })
}

fn fft_all_axes(data: &mut ArrayD<C64>, inverse: bool) {
    let n = data.shape()[0];
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let scale = if inverse { 1.0 } else { 1.0 / n as f64 };
    for axis in 0..data.ndim() {
        Zip::from(data.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
            let mut buf: Vec<C64> = lane.iter().copied().collect();
            plan.process(&mut buf);
            lane.iter_mut().zip(&buf).for_each(|(l, b)| *l = b * scale);
        });
    }
}

struct NBodyPropagator {
    half_phase: ArrayD<C64>,
    kinetic: ArrayD<C64>,
}

impl NBodyPropagator {
    fn new(grid: &SpatialGrid, particles: usize, hbar: f64, dt: f64, params: KernelParams) -> Self {
        let v = pair_potential(grid, particles, params);
        let half_phase = v.mapv(|v| C64::from_polar(1.0, -0.5 * dt * v / hbar));
        let k = grid.wavenumbers();
        let shape = vec![grid.n(); particles];
        let kinetic = ArrayD::from_shape_fn(IxDyn(&shape), |ix| {
            let k2: f64 = (0..particles).map(|a| k[ix[a]] * k[ix[a]]).sum();
            C64::from_polar(1.0, -0.5 * dt * hbar * k2)
        });
        Self {
            half_phase,
            kinetic,
        }
    }

    fn advance(&self, psi: &mut ArrayD<C64>) {
        Zip::from(&mut *psi).and(&self.half_phase).par_for_each(|p, h| *p *= h);
        fft_all_axes(psi, false);
        Zip::from(&mut *psi).and(&self.kinetic).par_for_each(|p, k| *p *= k);
        fft_all_axes(psi, true);
        Zip::from(&mut *psi).and(&self.half_phase).par_for_each(|p, h| *p *= h);
    }
}

/// Evolves `psi_in^{(x) N}` with the `1/N` pair coupling and returns the
/// requested snapshots.
pub fn nbody_evolve(
    psi_in: &WaveFunction,
    particles: usize,
    t_final: f64,
    dt: f64,
    params: KernelParams,
    snapshot_times: &[f64],
    memory_cap: usize,
) -> Result<Vec<NBodyWaveFunction>> {
    let n = psi_in.grid.n();
    let needed = memory_estimate(n, particles);
    if needed > memory_cap {
        let mut suggested_n = 8;
        while memory_estimate(suggested_n * 2, particles) <= memory_cap {
            suggested_n *= 2;
        }
        return Err(Error::Memory {
            needed,
            cap: memory_cap,
            suggested_n,
        });
    }
    let mut state = NBodyWaveFunction::product(psi_in, particles, params)?;
    let (steps, dt) = step_plan(t_final, dt)?;
    let times: Vec<f64> = if snapshot_times.is_empty() {
        vec![0.0, t_final]
    } else {
        snapshot_times.to_vec()
    };
    let marks = snapshot_steps(&times, t_final, steps, dt)?;
    let prop = NBodyPropagator::new(&psi_in.grid, particles, psi_in.hbar, dt, params);
    let t0 = state.t;
    let mut out = Vec::new();
    let mut next = 0;
    for s in 0..=steps {
        if s > 0 {
            prop.advance(&mut state.psi);
            state.t = t0 + s as f64 * dt;
        }
        if next < marks.len() && marks[next] == s {
            if state.psi.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Blowup {
                    t: state.t,
                    detail: "non-finite many-body amplitude".into(),
                });
            }
            out.push(state.clone());
            next += 1;
        }
    }
    Ok(out)
}

/// `<Psi, H Psi>` with `H = sum -h^2/2 d_j^2 + (1/N) sum_{j<k} V`.
pub fn nbody_energy(state: &NBodyWaveFunction) -> f64 {
    let dv = state.grid.dx().powi(state.particles as i32);
    let v = pair_potential(&state.grid, state.particles, state.params);
    let pot: f64 = Zip::from(&state.psi).and(&v).fold(0.0, |a, p, v| a + v * p.norm_sqr()) * dv;
    let mut hat = state.psi.clone();
    fft_all_axes(&mut hat, false);
    let k = state.grid.wavenumbers();
    let mut kin = 0.0;
    for (ix, c) in hat.indexed_iter() {
        let k2: f64 = (0..state.particles).map(|a| k[ix[a]] * k[ix[a]]).sum();
        kin += 0.5 * state.hbar * state.hbar * k2 * c.norm_sqr();
    }
    kin * state.grid.length().powi(state.particles as i32) + pot
}

/// First marginal `gamma(x, x')` as an `n x n` kernel.
#[derive(Clone, Debug)]
pub struct MarginalDensity {
    pub grid: SpatialGrid,
    pub hbar: f64,
    pub gamma: DMatrix<C64>,
}

impl MarginalDensity {
    pub fn trace(&self) -> f64 {
        (0..self.gamma.nrows()).map(|i| self.gamma[(i, i)].re).sum::<f64>() * self.grid.dx()
    }

    /// Largest `|gamma - gamma^*|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = &self.gamma - self.gamma.adjoint();
        d.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Eigenvalues of the operator with kernel `gamma`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let op = hermitian_part(&self.gamma) * C64::new(self.grid.dx(), 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(op).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Partial trace over all but the first coordinate, trace-normalized.
pub fn marginal(state: &NBodyWaveFunction) -> MarginalDensity {
    let n = state.grid.n();
    let rest = state.psi.len() / n;
    let flat: Vec<C64> = state.psi.iter().copied().collect();
    let a = DMatrix::from_row_slice(n, rest, &flat);
    let dv = state.grid.dx().powi(state.particles as i32 - 1);
    let mut gamma = &a * a.adjoint() * C64::new(dv, 0.0);
    let tr: f64 = (0..n).map(|i| gamma[(i, i)].re).sum::<f64>() * state.grid.dx();
    gamma *= C64::new(1.0 / tr, 0.0);
    MarginalDensity {
        grid: state.grid,
        hbar: state.hbar,
        gamma,
    }
}

/// Marginal of an arbitrary symmetric state given as a flat row-major array.
pub fn marginal_from_amplitudes(
    grid: SpatialGrid,
    hbar: f64,
    particles: usize,
    amplitudes: Vec<C64>,
) -> Result<MarginalDensity> {
    let n = grid.n();
    check_len(n.pow(particles as u32), amplitudes.len())?;
    let psi = ArrayD::from_shape_vec(IxDyn(&vec![n; particles]), amplitudes)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(marginal(&NBodyWaveFunction {
        grid,
        particles,
        hbar,
        params: KernelParams::defocusing(0.0),
        t: 0.0,
        psi,
    }))
}

fn difference_kernel(gamma: &MarginalDensity, psi: &WaveFunction) -> Result<DMatrix<C64>> {
    let n = gamma.grid.n();
    check_len(n, psi.psi.len())?;
    if gamma.grid != psi.grid {
        return Err(Error::Config("marginal and wave function live on different grids".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| gamma.gamma[(i, j)] - psi.psi[i] * psi.psi[j].conj()))
}

/// `Tr |gamma - |psi><psi||`.
pub fn trace_distance(gamma: &MarginalDensity, psi: &WaveFunction) -> Result<f64> {
    let d = difference_kernel(gamma, psi)?;
    let scale = d.iter().fold(1.0f64, |m, v| m.max(v.norm()));
    let defect = (&d - d.adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if defect > 1e-10 * scale {
        return Err(Error::Domain(format!("difference kernel is not self-adjoint ({defect:.3e})")));
    }
    let op = hermitian_part(&d) * C64::new(gamma.grid.dx(), 0.0);
    Ok(SymmetricEigen::new(op).eigenvalues.iter().map(|v| v.abs()).sum())
}

#[derive(Clone, Copy, Debug)]
pub struct WignerGap {
    /// `||W[gamma] - W[psi]||_{L2}` over grid rows and midpoint rows.
    pub direct: f64,
    /// `(2 pi h)^{-1/2} ||gamma - |psi><psi|||_HS`.
    pub plancherel: f64,
}

pub fn wigner_gap(gamma: &MarginalDensity, psi: &WaveFunction) -> Result<WignerGap> {
    let d = difference_kernel(gamma, psi)?;
    let w = wigner_from_kernel(&psi.grid, psi.hbar, psi.t, 1, |a, b| d[(a, b)])?;
    let (mid, _) = wigner_midpoints_from_kernel(&psi.grid, psi.hbar, |a, b| d[(a, b)])?;
    // grid rows and midpoint rows together form an x quadrature of step dx/2
    let sq: f64 = w.values.iter().chain(mid.iter()).map(|v| v * v).sum();
    let direct = (sq * 0.5 * psi.grid.dx() * w.grid.dxi).sqrt();
    let hs = d.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() * psi.grid.dx();
    let plancherel = hs / (2.0 * std::f64::consts::PI * psi.hbar).sqrt();
    Ok(WignerGap { direct, plancherel })
}
