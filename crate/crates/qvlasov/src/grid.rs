//! Uniform periodic grids and FFT-based spectral calculus.
//!
//! The forward transform carries the factor `1/n`, the inverse carries none,
//! so `inverse(forward(u)) == u` and `forward` returns Fourier coefficients:
//! `u_j = sum_m uh_m exp(i k_m x'_j)` with `x'_j = j dx` measured from the left
//! box edge.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

/// Periodic grid `x_j = -L/2 + j dx`, `dx = L/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    n: usize,
}

impl SpatialGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Config(format!("box length must be positive, got {length}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { length, n })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Signed integer frequency of FFT slot `m`, in `[-n/2, n/2)`.
    pub fn frequency_index(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Wavenumbers in FFT slot order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n)
            .map(|m| 2.0 * PI * self.frequency_index(m) as f64 / self.length)
            .collect()
    }

    /// Periodic offset of index difference `d` mapped into `[-L/2, L/2)`.
    pub fn offset(&self, d: usize) -> f64 {
        self.frequency_index(d % self.n) as f64 * self.dx()
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() * self.dx()
    }

    /// Mass carried by the outer sixteenth of the box on each side.
    pub fn boundary_mass(&self, rho: &[f64]) -> f64 {
        let w = (self.n / 16).max(1);
        let left: f64 = rho[..w].iter().map(|v| v.abs()).sum();
        let right: f64 = rho[self.n - w..].iter().map(|v| v.abs()).sum();
        (left + right) * self.dx()
    }
}

pub fn make_grid(length: f64, n: usize) -> Result<SpatialGrid> {
    SpatialGrid::new(length, n)
}

/// FFT plans and wavenumbers bound to one grid. Cheap to clone.
#[derive(Clone)]
pub struct Spectral {
    grid: SpatialGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: SpatialGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n());
        let inv = planner.plan_fft_inverse(grid.n());
        Self {
            grid,
            fwd,
            inv,
            k: grid.wavenumbers(),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn forward_in_place(&self, u: &mut [C64]) {
        self.fwd.process(u);
        let s = 1.0 / self.grid.n() as f64;
        u.iter_mut().for_each(|v| *v *= s);
    }

    pub fn inverse_in_place(&self, u: &mut [C64]) {
        self.inv.process(u);
    }

    pub fn forward(&self, u: &[C64]) -> Result<Vec<C64>> {
        check_len(self.grid.n(), u.len())?;
        let mut out = u.to_vec();
        self.forward_in_place(&mut out);
        Ok(out)
    }

    pub fn inverse(&self, uh: &[C64]) -> Result<Vec<C64>> {
        check_len(self.grid.n(), uh.len())?;
        let mut out = uh.to_vec();
        self.inverse_in_place(&mut out);
        Ok(out)
    }

    pub fn forward_real(&self, u: &[f64]) -> Result<Vec<C64>> {
        check_len(self.grid.n(), u.len())?;
        let mut out: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward_in_place(&mut out);
        Ok(out)
    }

    /// Multiplies the spectrum by `(ik)^order`. The Nyquist slot is dropped
    /// for odd orders so real input stays real.
    pub fn differentiate_spectrum(&self, uh: &mut [C64], order: u32) {
        if order == 0 {
            return;
        }
        let nyq = self.grid.n() / 2;
        for (m, v) in uh.iter_mut().enumerate() {
            if order % 2 == 1 && m == nyq {
                *v = C64::new(0.0, 0.0);
            } else {
                *v *= C64::new(0.0, self.k[m]).powu(order);
            }
        }
    }

    pub fn derivative(&self, u: &[C64], order: u32) -> Result<Vec<C64>> {
        let mut uh = self.forward(u)?;
        self.differentiate_spectrum(&mut uh, order);
        self.inverse_in_place(&mut uh);
        Ok(uh)
    }

    pub fn derivative_real(&self, u: &[f64], order: u32) -> Result<Vec<f64>> {
        let mut uh = self.forward_real(u)?;
        self.differentiate_spectrum(&mut uh, order);
        self.inverse_in_place(&mut uh);
        Ok(uh.into_iter().map(|v| v.re).collect())
    }

    /// Applies a Fourier multiplier `m(k)` to a real profile.
    pub fn filter_real(&self, u: &[f64], mult: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let mut uh = self.forward_real(u)?;
        for (v, &k) in uh.iter_mut().zip(&self.k) {
            *v *= mult(k);
        }
        self.inverse_in_place(&mut uh);
        Ok(uh.into_iter().map(|v| v.re).collect())
    }

    /// Shifts a real periodic profile: returns `u(x - s)`.
    pub fn shift_real(&self, u: &[f64], s: f64) -> Result<Vec<f64>> {
        let mut uh = self.forward_real(u)?;
        for (v, &k) in uh.iter_mut().zip(&self.k) {
            *v *= C64::from_polar(1.0, -k * s);
        }
        self.inverse_in_place(&mut uh);
        Ok(uh.into_iter().map(|v| v.re).collect())
    }
}

/// `d^order u / dx^order` by Fourier multiplication.
pub fn spectral_derivative(grid: &SpatialGrid, u: &[C64], order: u32) -> Result<Vec<C64>> {
    if order == 0 {
        return Err(Error::Domain("derivative order must be >= 1".into()));
    }
    Spectral::new(*grid).derivative(u, order)
}

pub fn l2_norm(grid: &SpatialGrid, u: &[C64]) -> f64 {
    (u.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.dx()).sqrt()
}

pub fn l2_distance(grid: &SpatialGrid, a: &[C64], b: &[C64]) -> f64 {
    (a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        * grid.dx())
    .sqrt()
}
