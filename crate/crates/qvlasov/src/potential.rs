//! Screened Coulomb kernel `V(x) = s/2 |x| exp(-eps |x|)`, its convolutions and
//! the associated force fields.

use num_complex::Complex64 as C64;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::grid::{SpatialGrid, Spectral};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Defocusing,
    Focusing,
    /// Interaction switched off.
    Off,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Defocusing => 1.0,
            Sign::Focusing => -1.0,
            Sign::Off => 0.0,
        }
    }

    pub fn from_value(s: i32) -> Result<Self> {
        match s {
            1 => Ok(Sign::Defocusing),
            -1 => Ok(Sign::Focusing),
            0 => Ok(Sign::Off),
            _ => Err(Error::Config(format!("kernel sign must be +1, -1 or 0, got {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub epsilon: f64,
    pub sign: Sign,
}

impl KernelParams {
    pub fn new(epsilon: f64, sign: Sign) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("screening must be >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon, sign })
    }

    pub fn defocusing(epsilon: f64) -> Self {
        Self {
            epsilon,
            sign: Sign::Defocusing,
        }
    }
}

pub fn kernel_eval(x: f64, p: KernelParams) -> f64 {
    let a = x.abs();
    p.sign.value() * 0.5 * a * (-p.epsilon * a).exp()
}

/// `V'(x)`, taking the symmetric value 0 at the kink.
pub fn kernel_derivative(x: f64, p: KernelParams) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let a = x.abs();
    p.sign.value() * 0.5 * x.signum() * (-p.epsilon * a).exp() * (1.0 - p.epsilon * a)
}

/// Regular part of `V''`: `V'' = s (delta + W)`.
pub fn kernel_curvature_regular(x: f64, eps: f64) -> f64 {
    let a = x.abs();
    (-eps * a).exp() * (-eps + 0.5 * eps * eps * a)
}

/// Whole-line Fourier transform of `1/2 |x| exp(-eps |x|)`.
pub fn kernel_symbol(k: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "kernel symbol is distributional at eps = {eps}"
        )));
    }
    let e2 = eps * eps;
    let k2 = k * k;
    Ok((e2 - k2) / ((e2 + k2) * (e2 + k2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    ScreenedConvolution,
    LimitCumulative,
}

#[derive(Clone, Debug)]
pub struct FieldProfile {
    pub values: Vec<f64>,
    pub kind: FieldKind,
    /// Trapezoidal antiderivative of the density from the left box edge.
    pub cumulative: Vec<f64>,
}

/// Cumulative trapezoid `C_j = sum_{i<j} (u_i + u_{i+1})/2 dx`, `C_0 = 0`.
pub fn cumulative_trapezoid(grid: &SpatialGrid, u: &[f64]) -> Vec<f64> {
    let dx = grid.dx();
    let mut out = Vec::with_capacity(u.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in u.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dx;
        out.push(acc);
    }
    out
}

/// Periodic convolutions with the sampled kernel and its derivatives.
#[derive(Clone)]
pub struct Convolver {
    spectral: Spectral,
    params: KernelParams,
    kernel_hat: Vec<C64>,
    deriv_hat: Vec<C64>,
    curvature_hat: Vec<C64>,
    warned: Arc<AtomicBool>,
}

impl Convolver {
    pub fn new(grid: SpatialGrid, params: KernelParams) -> Self {
        let spectral = Spectral::new(grid);
        let unit = KernelParams {
            epsilon: params.epsilon,
            sign: Sign::Defocusing,
        };
        let hat = |f: &dyn Fn(f64) -> f64| {
            let s: Vec<f64> = (0..grid.n()).map(|m| f(grid.offset(m))).collect();
            let mut h = spectral.forward_real(&s).expect("grid length");
            h.iter_mut().for_each(|v| *v *= grid.length());
            h
        };
        let kernel_hat = hat(&|x| kernel_eval(x, unit));
        // the half-box offset has no mirror partner; zeroing it keeps the
        // sampled derivative exactly odd
        let half = 0.5 * grid.length();
        let deriv_hat = hat(&|x| {
            if (x.abs() - half).abs() < 0.25 * grid.dx() {
                0.0
            } else {
                kernel_derivative(x, unit)
            }
        });
        let curvature_hat = hat(&|x| kernel_curvature_regular(x, params.epsilon));
        Self {
            spectral,
            params,
            kernel_hat,
            deriv_hat,
            curvature_hat,
            warned: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.spectral.grid()
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    fn apply(&self, hat: &[C64], u: &[f64]) -> Result<Vec<f64>> {
        let mut uh = self.spectral.forward_real(u)?;
        for (v, h) in uh.iter_mut().zip(hat) {
            *v *= h;
        }
        self.spectral.inverse_in_place(&mut uh);
        let s = self.params.sign.value();
        Ok(uh.into_iter().map(|v| s * v.re).collect())
    }

    /// Kernel value at the box half-width times the boundary mass.
    pub fn wrap_contamination(&self, rho: &[f64]) -> f64 {
        let g = self.grid();
        let unit = KernelParams {
            epsilon: self.params.epsilon,
            sign: Sign::Defocusing,
        };
        self.params.sign.value().abs() * kernel_eval(0.5 * g.length(), unit) * g.boundary_mass(rho)
    }

    fn check_density(&self, rho: &[f64]) -> Result<()> {
        check_len(self.grid().n(), rho.len())?;
        let c = self.wrap_contamination(rho);
        if c > 1e-6 {
            return Err(Error::Config(format!(
                "wrap-around contamination {c:.3e} exceeds 1e-6; enlarge the box"
            )));
        }
        if c > 1e-8 && !self.warned.swap(true, Ordering::Relaxed) {
            log::warn!("wrap-around contamination {c:.3e}");
        }
        Ok(())
    }

    /// `V * rho` on the periodic box.
    pub fn convolve(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check_density(rho)?;
        if rho.iter().any(|&v| v < -1e-12) {
            log::warn!("convolving a density with negative samples");
        }
        self.apply(&self.kernel_hat, rho)
    }

    /// `E = d/dx (V * rho)`.
    pub fn field(&self, rho: &[f64]) -> Result<FieldProfile> {
        self.check_density(rho)?;
        Ok(FieldProfile {
            values: self.apply(&self.deriv_hat, rho)?,
            kind: FieldKind::ScreenedConvolution,
            cumulative: cumulative_trapezoid(self.grid(), rho),
        })
    }

    /// `d^order/dx^order (V * rho)`; orders >= 2 use `V'' = s(delta + W)` so
    /// only the smooth density is differentiated.
    pub fn potential_derivative(&self, rho: &[f64], order: u32) -> Result<Vec<f64>> {
        match order {
            0 => self.convolve(rho),
            1 => Ok(self.field(rho)?.values),
            _ => {
                self.check_density(rho)?;
                let d = self.spectral.derivative_real(rho, order - 2)?;
                let w = self.apply(&self.curvature_hat, &d)?;
                let s = self.params.sign.value();
                Ok(d.iter().zip(&w).map(|(a, b)| s * a + b).collect())
            }
        }
    }

    /// `1/2 sum_ij V(x_i - x_j) rho_i rho_j dx^2`.
    pub fn interaction_energy(&self, rho: &[f64]) -> Result<f64> {
        let v = self.convolve(rho)?;
        Ok(0.5 * self.grid().integrate(&v.iter().zip(rho).map(|(a, b)| a * b).collect::<Vec<_>>()))
    }
}

pub fn convolve_kernel(grid: &SpatialGrid, rho: &[f64], p: KernelParams) -> Result<Vec<f64>> {
    Convolver::new(*grid, p).convolve(rho)
}

pub fn field(grid: &SpatialGrid, rho: &[f64], p: KernelParams) -> Result<FieldProfile> {
    Convolver::new(*grid, p).field(rho)
}

/// `E = 1/2 int sgn(x-y) rho(y) dy = M0 - m/2` with `m` the total mass.
pub fn limit_field(grid: &SpatialGrid, rho: &[f64]) -> Result<FieldProfile> {
    check_len(grid.n(), rho.len())?;
    let mass = grid.integrate(rho);
    if (mass - 1.0).abs() > 1e-8 {
        log::warn!("limit field of a density with mass {mass}");
    }
    let cumulative = cumulative_trapezoid(grid, rho);
    Ok(FieldProfile {
        values: cumulative.iter().map(|c| c - 0.5 * mass).collect(),
        kind: FieldKind::LimitCumulative,
        cumulative,
    })
}

/// Replaces each unresolved jump by the mean of the states on either side.
///
/// A point is a jump candidate when `|E_{j+1} - E_{j-1}|` exceeds the
/// threshold. Within each run of consecutive candidates the point with the
/// largest two-sided difference (rightmost on ties) receives the average of
/// the values just outside the run.
pub fn volpert_average(e: &[f64], jump_threshold: f64) -> Vec<f64> {
    let n = e.len();
    let mut out = e.to_vec();
    if n < 3 {
        return out;
    }
    let diff = |j: usize| (e[j + 1] - e[j - 1]).abs();
    let mut j = 1;
    while j < n - 1 {
        if diff(j) <= jump_threshold {
            j += 1;
            continue;
        }
        let start = j;
        while j < n - 1 && diff(j) > jump_threshold {
            j += 1;
        }
        let end = j - 1;
        let mut best = start;
        for i in start..=end {
            if diff(i) >= diff(best) {
                best = i;
            }
        }
        let left = e[start - 1];
        let right = e[(end + 1).min(n - 1)];
        out[best] = 0.5 * (left + right);
    }
    out
}

/// `10 dx max|E'|`, with `E'` taken spectrally after removing the linear ramp
/// that carries the total mass across the periodic seam.
pub fn default_jump_threshold(grid: &SpatialGrid, e: &[f64]) -> Result<f64> {
    check_len(grid.n(), e.len())?;
    let n = grid.n();
    let ramp = e[n - 1] - e[0] + (e[n - 1] - e[n - 2]);
    let slope = ramp / grid.length();
    let detrended: Vec<f64> = (0..n).map(|j| e[j] - slope * j as f64 * grid.dx()).collect();
    let d = Spectral::new(*grid).derivative_real(&detrended, 1)?;
    let m = d.iter().map(|v| (v + slope).abs()).fold(0.0, f64::max);
    Ok(10.0 * grid.dx() * m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn kernel_values() {
        let p = KernelParams::defocusing(0.0);
        assert_eq!(kernel_eval(0.0, KernelParams::defocusing(0.7)), 0.0);
        assert_eq!(kernel_eval(1.0, p), 0.5);
        let v = kernel_eval(2.0, KernelParams::defocusing(0.5));
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        let f = KernelParams::new(0.5, Sign::Focusing).unwrap();
        assert_eq!(kernel_eval(2.0, f), -v);
    }

    #[test]
    fn symbol_examples() {
        assert!((kernel_symbol(0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(kernel_symbol(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(kernel_symbol(2.3, 0.4).unwrap(), kernel_symbol(-2.3, 0.4).unwrap());
        assert!(kernel_symbol(1.0, 0.0).is_err());
    }

    #[test]
    fn point_mass_convolution() {
        let g = make_grid(40.0, 256).unwrap();
        let p = KernelParams::defocusing(0.5);
        let mut rho = vec![0.0; 256];
        rho[128] = 1.0 / g.dx();
        let v = convolve_kernel(&g, &rho, p).unwrap();
        for j in 100..156 {
            assert!((v[j] - kernel_eval(g.x(j), p)).abs() < 1e-12);
        }
        assert!(convolve_kernel(&g, &vec![0.0; 256], p).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn limit_field_of_point_mass() {
        let g = make_grid(40.0, 256).unwrap();
        let mut rho = vec![0.0; 256];
        rho[128] = 1.0 / g.dx();
        let e = limit_field(&g, &rho).unwrap();
        assert_eq!(e.values[128], 0.0);
        assert!((e.values[127] + 0.5).abs() < 1e-14);
        assert!((e.values[129] - 0.5).abs() < 1e-14);
        assert!((e.values[0] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn volpert_examples() {
        let smooth: Vec<f64> = (0..50).map(|j| (j as f64 * 0.1).sin()).collect();
        assert_eq!(volpert_average(&smooth, 0.5), smooth);
        let mut step = vec![-0.5; 20];
        step.extend(vec![0.5; 20]);
        let out = volpert_average(&step, 0.1);
        assert_eq!(out[20], 0.0);
        assert_eq!(out.iter().filter(|v| **v != -0.5 && **v != 0.5).count(), 1);
        let mut step = vec![0.2; 20];
        step.extend(vec![0.6; 20]);
        assert!((volpert_average(&step, 0.1)[20] - 0.4).abs() < 1e-15);
    }
}
