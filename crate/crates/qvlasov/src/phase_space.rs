//! Discrete Wigner and Husimi transforms, velocity moments and the weak
//! distance used to compare phase-space densities.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, Spectral};
use crate::hartree::WaveFunction;

/// `h / (2 dx)` as an integer, or a configuration error naming nearby
/// admissible values.
pub fn correlation_stride(grid: &SpatialGrid, hbar: f64) -> Result<usize> {
    let r = hbar / (2.0 * grid.dx());
    let s = r.round();
    if s >= 1.0 && (r - s).abs() <= 1e-9 * r {
        return Ok(s as usize);
    }
    let lo = (r.floor().max(1.0)) * 2.0 * grid.dx();
    let hi = (r.ceil().max(1.0)) * 2.0 * grid.dx();
    Err(Error::Config(format!(
        "hbar = {hbar} is not an integer multiple of 2 dx = {} on (L = {}, n = {}); \
         admissible neighbours are hbar = {lo} or {hi}",
        2.0 * grid.dx(),
        grid.length(),
        grid.n()
    )))
}

/// Nearest admissible `h`, never below `2 dx`.
pub fn snap_hbar(grid: &SpatialGrid, hbar: f64) -> f64 {
    let step = 2.0 * grid.dx();
    (hbar / step).round().max(1.0) * step
}

/// Rows `x_{r s}` of a spatial grid tensored with a symmetric velocity axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub spatial: SpatialGrid,
    pub row_stride: usize,
    pub xi: Vec<f64>,
    pub dxi: f64,
}

impl PhaseGrid {
    /// Velocity axis induced by the discrete Wigner construction:
    /// `xi_l = 2 pi h l / L`, `l in [-n/4, n/4)`.
    pub fn for_wigner(spatial: SpatialGrid, hbar: f64, row_stride: usize) -> Result<Self> {
        if row_stride == 0 || spatial.n() % row_stride != 0 {
            return Err(Error::Config(format!(
                "row stride {row_stride} must divide n = {}",
                spatial.n()
            )));
        }
        let half = spatial.n() as i64 / 2;
        let dxi = 2.0 * PI * hbar / spatial.length();
        Ok(Self {
            spatial,
            row_stride,
            xi: (-half / 2..half / 2).map(|l| l as f64 * dxi).collect(),
            dxi,
        })
    }

    pub fn rows(&self) -> usize {
        self.spatial.n() / self.row_stride
    }

    pub fn dx_rows(&self) -> f64 {
        self.spatial.dx() * self.row_stride as f64
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.spatial.x(r * self.row_stride)).collect()
    }

    pub fn xi_max(&self) -> f64 {
        self.xi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Real phase-space density, rows indexed by `x`, columns by ascending `xi`.
#[derive(Clone, Debug)]
pub struct WignerField {
    pub grid: PhaseGrid,
    pub hbar: f64,
    pub t: f64,
    pub values: Array2<f64>,
    /// Largest imaginary part discarded by the construction.
    pub imag_residue: f64,
}

impl WignerField {
    pub fn total_mass(&self) -> f64 {
        self.values.sum() * self.grid.dx_rows() * self.grid.dxi
    }

    /// `int f dxi` per row.
    pub fn marginal(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|r| r.sum() * self.grid.dxi)
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Wigner transform of the operator kernel `k(a, b)` sampled on grid indices.
///
/// Row `m` uses the correlation samples `k(m + j, m - j)` for
/// `j in [-n/4, n/4)`, so the separation `x_a - x_b` covers one box length
/// and periodic images of the kernel never meet.
pub fn wigner_from_kernel<K>(
    grid: &SpatialGrid,
    hbar: f64,
    t: f64,
    row_stride: usize,
    kernel: K,
) -> Result<WignerField>
where
    K: Fn(usize, usize) -> C64 + Sync,
{
    let pg = PhaseGrid::for_wigner(*grid, hbar, row_stride)?;
    let (values, imag_residue) = wigner_core(&pg, hbar, 0, kernel)?;
    Ok(WignerField {
        grid: pg,
        hbar,
        t,
        values,
        imag_residue,
    })
}

/// Rows at the midpoints `x_m + dx/2`, built from the odd separations
/// `k(m + j + 1, m - j)`. Together with the grid rows every ordered index
/// pair is used exactly once.
pub(crate) fn wigner_midpoints_from_kernel<K>(grid: &SpatialGrid, hbar: f64, kernel: K) -> Result<(Array2<f64>, f64)>
where
    K: Fn(usize, usize) -> C64 + Sync,
{
    let pg = PhaseGrid::for_wigner(*grid, hbar, 1)?;
    wigner_core(&pg, hbar, 1, kernel)
}

fn wigner_core<K>(pg: &PhaseGrid, hbar: f64, offset: i64, kernel: K) -> Result<(Array2<f64>, f64)>
where
    K: Fn(usize, usize) -> C64 + Sync,
{
    let grid = &pg.spatial;
    correlation_stride(grid, hbar)?;
    let n = grid.n() as i64;
    let nc = pg.xi.len();
    let fft = FftPlanner::new().plan_fft_forward(nc);
    let dy = 2.0 * grid.dx() / hbar;
    let scale = dy / (2.0 * PI);
    let signed = |slot: usize| -> i64 {
        if slot < nc / 2 {
            slot as i64
        } else {
            slot as i64 - nc as i64
        }
    };
    let rows: Vec<(Vec<f64>, f64)> = (0..pg.rows())
        .into_par_iter()
        .map(|r| {
            let m = (r * pg.row_stride) as i64;
            let mut g: Vec<C64> = (0..nc)
                .map(|slot| {
                    let j = signed(slot);
                    let v = kernel((m + j + offset).rem_euclid(n) as usize, (m - j).rem_euclid(n) as usize);
                    if offset == 0 && slot == nc / 2 {
                        C64::new(v.re, 0.0)
                    } else {
                        v
                    }
                })
                .collect();
            fft.process(&mut g);
            let mut out = vec![0.0; nc];
            let mut imag: f64 = 0.0;
            for (slot, v) in g.iter().enumerate() {
                let l = signed(slot);
                let phase = C64::from_polar(1.0, -2.0 * PI * (l * offset) as f64 / n as f64);
                let w = scale * v * phase;
                out[(l + nc as i64 / 2) as usize] = w.re;
                imag = imag.max(w.im.abs());
            }
            (out, imag)
        })
        .collect();
    let mut values = Array2::zeros((pg.rows(), nc));
    let mut imag_residue: f64 = 0.0;
    for (r, (row, im)) in rows.into_iter().enumerate() {
        values.row_mut(r).assign(&ndarray::Array1::from(row));
        imag_residue = imag_residue.max(im);
    }
    Ok((values, imag_residue))
}

/// Wigner transform with every spatial row.
pub fn wigner(psi: &WaveFunction) -> Result<WignerField> {
    wigner_rows(psi, 1)
}

/// Wigner transform keeping every `row_stride`-th spatial row.
pub fn wigner_rows(psi: &WaveFunction, row_stride: usize) -> Result<WignerField> {
    let p = &psi.psi;
    wigner_from_kernel(&psi.grid, psi.hbar, psi.t, row_stride, |a, b| p[a] * p[b].conj())
}

fn gaussian_smooth_axis(data: &mut Array2<f64>, axis: usize, period: f64, hbar: f64) {
    let len = data.len_of(ndarray::Axis(axis));
    let fwd = FftPlanner::new().plan_fft_forward(len);
    let inv = FftPlanner::new().plan_fft_inverse(len);
    let mult: Vec<f64> = (0..len)
        .map(|m| {
            let f = if m < len / 2 { m as i64 } else { m as i64 - len as i64 };
            let eta = 2.0 * PI * f as f64 / period;
            (-0.25 * hbar * eta * eta).exp() / len as f64
        })
        .collect();
    for mut lane in data.lanes_mut(ndarray::Axis(axis)) {
        let mut buf: Vec<C64> = lane.iter().map(|&v| C64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        buf.iter_mut().zip(&mult).for_each(|(b, m)| *b *= m);
        inv.process(&mut buf);
        lane.iter_mut().zip(&buf).for_each(|(l, b)| *l = b.re);
    }
}

/// Convolution with `(pi h)^{-1} exp(-(x^2 + xi^2)/h)`, done spectrally on
/// the periodic row and velocity axes.
pub fn husimi(f: &WignerField) -> WignerField {
    let mut values = f.values.clone();
    let g = &f.grid;
    gaussian_smooth_axis(&mut values, 0, g.spatial.length(), f.hbar);
    gaussian_smooth_axis(&mut values, 1, g.dxi * g.xi.len() as f64, f.hbar);
    WignerField {
        grid: g.clone(),
        hbar: f.hbar,
        t: f.t,
        values,
        imag_residue: f.imag_residue,
    }
}

/// Husimi density `|<phi_{x,xi}, psi>|^2 / (2 pi h)` against coherent states
/// `phi_{x,xi}(y) = (pi h)^{-1/4} exp(-(y-x)^2/(2h) + i xi y / h)`,
/// evaluated at arbitrary points.
pub fn husimi_coherent(psi: &WaveFunction, xs: &[f64], xis: &[f64]) -> Array2<f64> {
    let g = psi.grid;
    let h = psi.hbar;
    let n = g.n();
    let reach = ((10.0 * h.sqrt() / g.dx()).ceil() as usize).min(n / 2);
    let pref = (PI * h).powf(-0.25) * g.dx();
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            let c = ((x + 0.5 * g.length()) / g.dx()).round() as i64;
            let taps: Vec<(f64, C64)> = (-(reach as i64)..=reach as i64)
                .map(|d| {
                    let j = (c + d).rem_euclid(n as i64) as usize;
                    let y = x + (c + d) as f64 * g.dx() - (x + 0.5 * g.length());
                    let w = pref * (-(y - x).powi(2) / (2.0 * h)).exp();
                    (y, psi.psi[j] * w)
                })
                .collect();
            xis.iter()
                .map(|&xi| {
                    let s: C64 = taps
                        .iter()
                        .map(|(y, a)| a * C64::from_polar(1.0, -xi * y / h))
                        .sum();
                    s.norm_sqr() / (2.0 * PI * h)
                })
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((xs.len(), xis.len()));
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&ndarray::Array1::from(r));
    }
    out
}

/// Velocity moments `M_k(x) = int xi^k f dxi`, `k = 0..=K`.
#[derive(Clone, Debug)]
pub struct MomentSet {
    pub x: Vec<f64>,
    pub dx: f64,
    pub profiles: Vec<Vec<f64>>,
    pub hbar: f64,
    pub t: f64,
    pub imag_residue: f64,
}

impl MomentSet {
    pub fn order(&self) -> usize {
        self.profiles.len() - 1
    }

    pub fn integral(&self, k: usize) -> f64 {
        self.profiles[k].iter().sum::<f64>() * self.dx
    }
}

pub const MAX_CLOSED_FORM_ORDER: usize = 8;

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moments from the wave function without a velocity grid:
/// `M_k = (h/2)^k sum_a C(k,a) D^a psi conj(D^{k-a} psi)`, `D = -i d/dx`.
pub fn moments_closed_form(psi: &WaveFunction, k_max: usize) -> Result<MomentSet> {
    if k_max > MAX_CLOSED_FORM_ORDER {
        return Err(Error::Config(format!(
            "closed-form moments are limited to order {MAX_CLOSED_FORM_ORDER}, got {k_max}"
        )));
    }
    let sp = Spectral::new(psi.grid);
    let hat = sp.forward(&psi.psi)?;
    let nyq = psi.grid.n() / 2;
    let mut derivs = Vec::with_capacity(k_max + 1);
    derivs.push(psi.psi.clone());
    for a in 1..=k_max {
        let mut d = hat.clone();
        for (m, v) in d.iter_mut().enumerate() {
            if a % 2 == 1 && m == nyq {
                *v = C64::new(0.0, 0.0);
            } else {
                *v *= sp.k()[m].powi(a as i32);
            }
        }
        sp.inverse_in_place(&mut d);
        derivs.push(d);
    }
    let n = psi.grid.n();
    let mut profiles = Vec::with_capacity(k_max + 1);
    let mut imag_residue: f64 = 0.0;
    for k in 0..=k_max {
        let c = (0.5 * psi.hbar).powi(k as i32);
        let mut prof = vec![0.0; n];
        for (j, p) in prof.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..=k {
                acc += binomial(k, a) * derivs[a][j] * derivs[k - a][j].conj();
            }
            acc *= c;
            imag_residue = imag_residue.max(acc.im.abs());
            *p = acc.re;
        }
        profiles.push(prof);
    }
    Ok(MomentSet {
        x: psi.grid.points(),
        dx: psi.grid.dx(),
        profiles,
        hbar: psi.hbar,
        t: psi.t,
        imag_residue,
    })
}

/// Mass of `|f|` carried by the outer tenth of the velocity axis.
pub fn xi_tail_mass(f: &WignerField) -> f64 {
    let cut = 0.9 * f.grid.xi_max();
    let mut acc = 0.0;
    for row in f.values.rows() {
        for (v, xi) in row.iter().zip(&f.grid.xi) {
            if xi.abs() > cut {
                acc += v.abs();
            }
        }
    }
    acc * f.grid.dx_rows() * f.grid.dxi
}

/// Velocity-quadrature moments of a phase-space density.
pub fn moments_from_grid(f: &WignerField, k_max: usize) -> MomentSet {
    let tail = xi_tail_mass(f);
    if tail > 1e-8 {
        log::warn!("velocity tail mass {tail:.3e} exceeds 1e-8");
    }
    let profiles = (0..=k_max)
        .map(|k| {
            f.values
                .rows()
                .into_iter()
                .map(|r| {
                    r.iter()
                        .zip(&f.grid.xi)
                        .map(|(v, xi)| v * xi.powi(k as i32))
                        .sum::<f64>()
                        * f.grid.dxi
                })
                .collect()
        })
        .collect();
    MomentSet {
        x: f.grid.x(),
        dx: f.grid.dx_rows(),
        profiles,
        hbar: f.hbar,
        t: f.t,
        imag_residue: 0.0,
    }
}

/// Smooth cutoff equal to 1 on `|u| <= r - 2` and 0 on `|u| >= r`.
pub fn taper(u: f64, r: f64) -> f64 {
    let s = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = s(r - u.abs());
    let b = s(u.abs() - (r - 2.0));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Envelope {
    One,
    Xi,
    XiSquaredMinusOne,
    XXi,
}

/// `phi(x, xi) = A(x) B(xi)` with a tapered Gaussian in `x` and a tapered
/// polynomial in `xi`.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub center: f64,
    pub envelope: Envelope,
    pub radius: f64,
    pub a_norm: f64,
}

impl TestFunction {
    pub fn new(center: f64, envelope: Envelope, radius: f64) -> Self {
        let mut t = Self {
            center,
            envelope,
            radius,
            a_norm: 0.0,
        };
        t.a_norm = t.compute_a_norm();
        t
    }

    fn gauss(&self, x: f64) -> f64 {
        let u = x - self.center;
        (-0.5 * u * u).exp() * taper(u, self.radius)
    }

    pub fn spatial_factor(&self, x: f64) -> f64 {
        match self.envelope {
            Envelope::XXi => x * self.gauss(x),
            _ => self.gauss(x),
        }
    }

    pub fn velocity_polynomial(&self, xi: f64) -> f64 {
        match self.envelope {
            Envelope::One => 1.0,
            Envelope::Xi | Envelope::XXi => xi,
            Envelope::XiSquaredMinusOne => xi * xi - 1.0,
        }
    }

    pub fn velocity_factor(&self, xi: f64) -> f64 {
        self.velocity_polynomial(xi) * taper(xi, self.radius)
    }

    pub fn value(&self, x: f64, xi: f64) -> f64 {
        self.spatial_factor(x) * self.velocity_factor(xi)
    }

    /// Coefficients `(a0, a1, a2)` with `A(x) P(xi) = a0 + a1 xi + a2 xi^2`.
    pub fn moment_weights(&self, x: f64) -> [f64; 3] {
        let a = self.spatial_factor(x);
        match self.envelope {
            Envelope::One => [a, 0.0, 0.0],
            Envelope::Xi | Envelope::XXi => [0.0, a, 0.0],
            Envelope::XiSquaredMinusOne => [-a, 0.0, a],
        }
    }

    /// `int sup_x |F_xi phi(x, eta)| deta`.
    fn compute_a_norm(&self) -> f64 {
        let sup = (0..=8000)
            .map(|i| self.center - 10.0 + 20.0 * i as f64 / 8000.0)
            .map(|x| self.spatial_factor(x).abs())
            .fold(0.0, f64::max);
        let n = 4096;
        let span = 4.0 * self.radius;
        let d = span / n as f64;
        let mut buf: Vec<C64> = (0..n)
            .map(|i| {
                let xi = -0.5 * span + i as f64 * d;
                C64::new(self.velocity_factor(xi) * d, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let deta = 2.0 * PI / span;
        sup * buf.iter().map(|v| v.norm()).sum::<f64>() * deta
    }
}

#[derive(Clone, Debug)]
pub struct TestFunctionFamily {
    pub functions: Vec<TestFunction>,
}

impl TestFunctionFamily {
    /// Three centers times the envelopes `1, xi, xi^2 - 1, x xi`, radius 8.
    pub fn standard() -> Self {
        let mut functions = Vec::new();
        for &c in &[-1.5, 0.0, 1.5] {
            for e in [
                Envelope::One,
                Envelope::Xi,
                Envelope::XiSquaredMinusOne,
                Envelope::XXi,
            ] {
                functions.push(TestFunction::new(c, e, 8.0));
            }
        }
        Self { functions }
    }

    pub fn describe(&self) -> Vec<String> {
        self.functions
            .iter()
            .map(|f| format!("{:?}@{} r={} A={:.6}", f.envelope, f.center, f.radius, f.a_norm))
            .collect()
    }
}

/// Something that can be integrated against a test function.
pub trait Pairing {
    fn pair(&self, phi: &TestFunction) -> Result<f64>;
}

/// `sum phi(x, xi) f dx dxi` on an arbitrary tensor grid.
pub fn pair_phase_space(
    x: &[f64],
    dx: f64,
    xi: &[f64],
    dxi: f64,
    values: &Array2<f64>,
    phi: &TestFunction,
) -> f64 {
    let b: Vec<f64> = xi.iter().map(|&v| phi.velocity_factor(v)).collect();
    let mut acc = 0.0;
    for (row, &xr) in values.rows().into_iter().zip(x) {
        let a = phi.spatial_factor(xr);
        if a == 0.0 {
            continue;
        }
        acc += a * row.iter().zip(&b).map(|(f, b)| f * b).sum::<f64>();
    }
    acc * dx * dxi
}

impl Pairing for WignerField {
    fn pair(&self, phi: &TestFunction) -> Result<f64> {
        Ok(pair_phase_space(
            &self.grid.x(),
            self.grid.dx_rows(),
            &self.grid.xi,
            self.grid.dxi,
            &self.values,
            phi,
        ))
    }
}

impl Pairing for MomentSet {
    /// Uses the untapered polynomial in `xi`, i.e. `M_0`, `M_1`, `M_2`.
    fn pair(&self, phi: &TestFunction) -> Result<f64> {
        if self.order() < 2 {
            return Err(Error::Config("pairing needs moments up to order 2".into()));
        }
        let mut acc = 0.0;
        for (j, &x) in self.x.iter().enumerate() {
            let w = phi.moment_weights(x);
            acc += w[0] * self.profiles[0][j] + w[1] * self.profiles[1][j] + w[2] * self.profiles[2][j];
        }
        Ok(acc * self.dx)
    }
}

/// `max_i |<a - b, phi_i>| / ||phi_i||_A`.
pub fn weak_error<A: Pairing, B: Pairing>(a: &A, b: &B, family: &TestFunctionFamily) -> Result<f64> {
    if family.functions.is_empty() {
        return Err(Error::Config("empty test-function family".into()));
    }
    let mut worst: f64 = 0.0;
    for phi in &family.functions {
        let d = (a.pair(phi)? - b.pair(phi)?).abs() / phi.a_norm;
        worst = worst.max(d);
    }
    Ok(worst)
}
