//! Moment equations of the Hartree flow: remainder terms, weak residuals,
//! cumulative moments and the even-moment growth check.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hartree::WaveFunction;
use crate::phase_space::{binomial, moments_closed_form, MomentSet};
use crate::potential::{cumulative_trapezoid, Convolver, KernelParams};
use crate::vlasov::{bump, trapezoid_weights};

/// Scaling of the `alpha`-th remainder term: `2^k` or `2^alpha` in the
/// denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemainderPrefactor {
    AsPrinted,
    Taylor2Alpha,
}

impl RemainderPrefactor {
    pub fn name(self) -> &'static str {
        match self {
            RemainderPrefactor::AsPrinted => "as_printed",
            RemainderPrefactor::Taylor2Alpha => "taylor_2alpha",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(RemainderPrefactor::AsPrinted),
            "taylor_2alpha" => Ok(RemainderPrefactor::Taylor2Alpha),
            _ => Err(Error::Config(format!("unknown remainder prefactor {s:?}"))),
        }
    }
}

/// `i C(k,a) h^{a-1} / 2^p (1 - (-1)^a) (-i)^a`, the factor multiplying
/// `d^a (V * rho) M_{k-a}`.
pub fn remainder_coefficient(k: usize, alpha: usize, hbar: f64, pref: RemainderPrefactor) -> C64 {
    let p = match pref {
        RemainderPrefactor::AsPrinted => k,
        RemainderPrefactor::Taylor2Alpha => alpha,
    };
    let parity = if alpha % 2 == 0 { 0.0 } else { 2.0 };
    let real = binomial(k, alpha) * hbar.powi(alpha as i32 - 1) / 2f64.powi(p as i32) * parity;
    C64::new(0.0, 1.0) * real * C64::new(0.0, -1.0).powu(alpha as u32)
}

#[derive(Clone, Debug)]
pub struct RemainderProfile {
    pub values: Vec<f64>,
    pub k: usize,
    pub hbar: f64,
    pub epsilon: f64,
    pub imag_residue: f64,
}

pub const MAX_REMAINDER_ORDER: usize = 6;

/// Remainder from precomputed moments (order at least `k - 2`).
pub fn remainder_from_moments(
    conv: &Convolver,
    rho: &[f64],
    moments: &MomentSet,
    k: usize,
    pref: RemainderPrefactor,
) -> Result<RemainderProfile> {
    if k > MAX_REMAINDER_ORDER {
        return Err(Error::Config(format!(
            "remainder order is limited to {MAX_REMAINDER_ORDER}, got {k}"
        )));
    }
    let n = rho.len();
    let mut acc = vec![C64::new(0.0, 0.0); n];
    for alpha in 2..=k {
        let c = remainder_coefficient(k, alpha, moments.hbar, pref);
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        let dv = conv.potential_derivative(rho, alpha as u32)?;
        let m = &moments.profiles[k - alpha];
        for j in 0..n {
            acc[j] += c * dv[j] * m[j];
        }
    }
    Ok(RemainderProfile {
        values: acc.iter().map(|v| v.re).collect(),
        k,
        hbar: moments.hbar,
        epsilon: conv.params().epsilon,
        imag_residue: acc.iter().fold(0.0, |m, v| m.max(v.im.abs())),
    })
}

pub fn remainder(
    psi: &WaveFunction,
    p: KernelParams,
    k: usize,
    pref: RemainderPrefactor,
) -> Result<RemainderProfile> {
    if k > MAX_REMAINDER_ORDER {
        return Err(Error::Config(format!(
            "remainder order is limited to {MAX_REMAINDER_ORDER}, got {k}"
        )));
    }
    let conv = Convolver::new(psi.grid, p);
    let m = moments_closed_form(psi, k)?;
    remainder_from_moments(&conv, &psi.density(), &m, k, pref)
}

/// Smooth weight `phi(t, x)`: product of two bumps.
#[derive(Clone, Copy, Debug)]
pub struct SpaceTimeBump {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: f64,
    pub x_radius: f64,
}

impl SpaceTimeBump {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        bump((t - self.t_center) / self.t_radius).0 * bump((x - self.x_center) / self.x_radius).0
    }

    /// `(int sup_x |phi| dt, int sup_x (|phi_t| + |phi_x|) dt)`.
    pub fn norms(&self) -> (f64, f64) {
        let m = 2000;
        let mut sup_b: f64 = 0.0;
        let mut sup_db: f64 = 0.0;
        for i in 0..=m {
            let s = -1.0 + 2.0 * i as f64 / m as f64;
            let (b, db) = bump(s);
            sup_b = sup_b.max(b.abs());
            sup_db = sup_db.max(db.abs());
        }
        let mut int_b = 0.0;
        let mut int_db = 0.0;
        let ds = 2.0 / m as f64;
        for i in 0..=m {
            let s = -1.0 + i as f64 * ds;
            let (b, db) = bump(s);
            int_b += b.abs() * ds;
            int_db += db.abs() * ds;
        }
        let value = self.t_radius * int_b * sup_b;
        let grad = int_db * sup_b + self.t_radius * int_b * sup_db / self.x_radius;
        (value, grad)
    }
}

/// Per-snapshot quantities entering the moment equation of order `k`.
struct SnapshotTerms {
    t: f64,
    mk: Vec<f64>,
    flux: Vec<f64>,
    force: Vec<f64>,
    remainder: Vec<f64>,
}

fn snapshot_terms(
    conv: &Convolver,
    psi: &WaveFunction,
    k: usize,
    pref: RemainderPrefactor,
) -> Result<SnapshotTerms> {
    let m = moments_closed_form(psi, k + 1)?;
    let rho = psi.density();
    let flux = conv.spectral().derivative_real(&m.profiles[k + 1], 1)?;
    let force = if k == 0 {
        vec![0.0; rho.len()]
    } else {
        let e = conv.field(&rho)?.values;
        e.iter().zip(&m.profiles[k - 1]).map(|(e, m)| k as f64 * e * m).collect()
    };
    let remainder = remainder_from_moments(conv, &rho, &m, k, pref)?.values;
    Ok(SnapshotTerms {
        t: psi.t,
        mk: m.profiles[k].clone(),
        flux,
        force,
        remainder,
    })
}

/// `|int int phi (d_t M_k + d_x M_{k+1} + k E M_{k-1} + R^(k))|` over the
/// snapshots, with centered time differences. The remainder is optional so
/// its effect can be isolated.
pub fn moment_residual(
    snapshots: &[WaveFunction],
    p: KernelParams,
    k: usize,
    phi: &SpaceTimeBump,
    pref: RemainderPrefactor,
    include_remainder: bool,
) -> Result<f64> {
    if snapshots.len() < 3 {
        return Err(Error::Config("moment residual needs at least three snapshots".into()));
    }
    let first = snapshots[1].t;
    let last = snapshots[snapshots.len() - 2].t;
    if phi.t_center - phi.t_radius < first - 1e-12 || phi.t_center + phi.t_radius > last + 1e-12 {
        return Err(Error::Domain(format!(
            "time support of the weight must lie in [{first}, {last}]"
        )));
    }
    let grid = snapshots[0].grid;
    let conv = Convolver::new(grid, p);
    let terms: Vec<SnapshotTerms> = snapshots
        .iter()
        .map(|s| snapshot_terms(&conv, s, k, pref))
        .collect::<Result<_>>()?;
    let xs = grid.points();
    let inner: Vec<f64> = terms.iter().map(|s| s.t).collect();
    let w = trapezoid_weights(&inner[1..inner.len() - 1]);
    let mut total = 0.0;
    for (i, wt) in (1..terms.len() - 1).zip(&w) {
        let dtm = terms[i + 1].t - terms[i - 1].t;
        let cur = &terms[i];
        let mut acc = 0.0;
        for (j, &x) in xs.iter().enumerate() {
            let ph = phi.value(cur.t, x);
            if ph == 0.0 {
                continue;
            }
            let dt = (terms[i + 1].mk[j] - terms[i - 1].mk[j]) / dtm;
            let mut lhs = dt + cur.flux[j] + cur.force[j];
            if include_remainder {
                lhs += cur.remainder[j];
            }
            acc += ph * lhs;
        }
        total += wt * acc * grid.dx();
    }
    Ok(total.abs())
}

/// Prefactor with the smaller moment residual at order `k >= 4`, together
/// with both residuals `(as_printed, taylor_2alpha)`.
pub fn select_remainder_prefactor(
    snapshots: &[WaveFunction],
    p: KernelParams,
    k: usize,
    phi: &SpaceTimeBump,
) -> Result<(RemainderPrefactor, f64, f64)> {
    let a = moment_residual(snapshots, p, k, phi, RemainderPrefactor::AsPrinted, true)?;
    let b = moment_residual(snapshots, p, k, phi, RemainderPrefactor::Taylor2Alpha, true)?;
    let pick = if b < a {
        RemainderPrefactor::Taylor2Alpha
    } else {
        RemainderPrefactor::AsPrinted
    };
    Ok((pick, a, b))
}

/// `|int int phi R^(k) dx dt|` over the snapshots (trapezoid in time).
pub fn remainder_pairing(
    snapshots: &[WaveFunction],
    p: KernelParams,
    k: usize,
    phi: &SpaceTimeBump,
    pref: RemainderPrefactor,
) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::Config("no snapshots".into()));
    }
    let grid = snapshots[0].grid;
    let conv = Convolver::new(grid, p);
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    let w = trapezoid_weights(&times);
    let xs = grid.points();
    let mut total = 0.0;
    for (s, wt) in snapshots.iter().zip(&w) {
        let m = moments_closed_form(s, k)?;
        let r = remainder_from_moments(&conv, &s.density(), &m, k, pref)?;
        let acc: f64 = xs
            .iter()
            .zip(&r.values)
            .map(|(&x, v)| phi.value(s.t, x) * v)
            .sum();
        total += wt * acc * grid.dx();
    }
    Ok(total.abs())
}

/// Constants `C = |<phi, R>| / (h ||grad phi|| + h ||phi|| + eps ||phi||)`
/// over a parameter grid, and the largest ratio to the constant at the first
/// (coarsest) point.
#[derive(Clone, Debug)]
pub struct RemainderBoundFit {
    pub constants: Vec<f64>,
    pub fitted_c: f64,
    pub growth: f64,
}

pub fn remainder_bound_fit(points: &[(f64, f64, f64)], phi: &SpaceTimeBump) -> Result<RemainderBoundFit> {
    if points.is_empty() {
        return Err(Error::Config("no remainder samples".into()));
    }
    let (norm, grad) = phi.norms();
    let constants: Vec<f64> = points
        .iter()
        .map(|&(h, eps, v)| v / (h * grad + h * norm + eps * norm))
        .collect();
    let fitted_c = constants.iter().copied().fold(0.0, f64::max);
    let growth = fitted_c / constants[0].max(1e-300);
    Ok(RemainderBoundFit {
        constants,
        fitted_c,
        growth,
    })
}

#[derive(Clone, Debug)]
pub struct CumulativeMoment {
    pub m: usize,
    pub values: Vec<f64>,
}

pub fn cumulative_moment(moments: &MomentSet, m: usize) -> Result<CumulativeMoment> {
    if m > moments.order() {
        return Err(Error::Config(format!(
            "cumulative moment {m} exceeds available order {}",
            moments.order()
        )));
    }
    let grid = crate::grid::SpatialGrid::new(moments.dx * moments.x.len() as f64, moments.x.len())?;
    Ok(CumulativeMoment {
        m,
        values: cumulative_trapezoid(&grid, &moments.profiles[m]),
    })
}

#[derive(Clone, Debug)]
pub struct GrowthReport {
    pub times: Vec<f64>,
    /// `c_k(t)` for `k = 1..=K`; index 0 holds the mass.
    pub constants: Vec<Vec<f64>>,
    /// Relative growth of `c_k` over the run (mass drift for `k = 0`).
    pub growth: Vec<f64>,
    pub flagged: Vec<bool>,
}

pub const GROWTH_TOLERANCE: f64 = 0.10;

/// `even[i][k]` holds `int int xi^{2k} f` at `times[i]`, `k = 0..=K`.
pub fn moment_growth_check(times: &[f64], even: &[Vec<f64>], k_max: usize) -> Result<GrowthReport> {
    if times.len() != even.len() || times.is_empty() {
        return Err(Error::Config("growth check needs one moment row per time".into()));
    }
    if even.iter().any(|r| r.len() <= k_max) {
        return Err(Error::Config(format!("growth check needs even moments up to {}", 2 * k_max)));
    }
    let mut constants = Vec::new();
    let mut growth = Vec::new();
    let mut flagged = Vec::new();
    for k in 0..=k_max {
        let c: Vec<f64> = times
            .iter()
            .zip(even)
            .map(|(&t, r)| {
                if k == 0 {
                    r[0]
                } else {
                    (r[k] / t.exp()).powf(1.0 / (2 * k) as f64) / (2 * k) as f64
                }
            })
            .collect();
        let g = if k == 0 {
            c.iter().map(|v| (v - c[0]).abs()).fold(0.0, f64::max) / c[0].abs().max(1e-300)
        } else {
            c.iter().map(|v| v / c[0] - 1.0).fold(0.0, f64::max)
        };
        flagged.push(if k == 0 { g > 1e-8 } else { g > GROWTH_TOLERANCE });
        growth.push(g);
        constants.push(c);
    }
    Ok(GrowthReport {
        times: times.to_vec(),
        constants,
        growth,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_vanish() {
        for k in 0..=2 {
            for a in 2..=k {
                for pref in [RemainderPrefactor::AsPrinted, RemainderPrefactor::Taylor2Alpha] {
                    assert_eq!(remainder_coefficient(k, a, 0.3, pref), C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn third_order_coefficient_is_real() {
        let h = 0.4;
        for pref in [RemainderPrefactor::AsPrinted, RemainderPrefactor::Taylor2Alpha] {
            let c = remainder_coefficient(3, 3, h, pref);
            assert_eq!(c.im, 0.0);
            assert!((c.re + h * h / 4.0).abs() < 1e-15);
        }
        let a = remainder_coefficient(5, 3, h, RemainderPrefactor::AsPrinted);
        let b = remainder_coefficient(5, 3, h, RemainderPrefactor::Taylor2Alpha);
        assert!((b.re / a.re - 4.0).abs() < 1e-12);
    }

    #[test]
    fn growth_flags() {
        let times = [0.0, 0.5, 1.0];
        let flat: Vec<Vec<f64>> = times.iter().map(|t: &f64| vec![1.0, t.exp(), 2.0 * t.exp()]).collect();
        let r = moment_growth_check(&times, &flat, 2).unwrap();
        assert!(r.flagged.iter().all(|f| !f));
        let fast: Vec<Vec<f64>> = times.iter().map(|t: &f64| vec![1.0, (3.0 * t).exp(), 1.0]).collect();
        let r = moment_growth_check(&times, &fast, 2).unwrap();
        assert!(r.flagged[1]);
    }
}
