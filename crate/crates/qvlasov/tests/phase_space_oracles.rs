use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use qvlasov::grid::make_grid;
use qvlasov::hartree::{gaussian_density, init_mollified, init_wkb, WaveFunction};
use qvlasov::phase_space::{
    husimi, husimi_coherent, moments_closed_form, moments_from_grid, weak_error, wigner,
    wigner_rows, Pairing, TestFunctionFamily, WignerField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ground_gaussian(hbar: f64) -> WaveFunction {
    let g = make_grid(51.2, 2048).unwrap();
    let c = (PI * hbar).powf(-0.25);
    let psi = g.points().iter().map(|&x| C64::new(c * (-x * x / (2.0 * hbar)).exp(), 0.0)).collect();
    WaveFunction::new(g, hbar, psi).unwrap()
}

/// Band-limited random state: random low modes under a Gaussian envelope.
fn random_state(rng: &mut ChaCha8Rng, hbar: f64) -> WaveFunction {
    let g = make_grid(25.6, 512).unwrap();
    let modes: Vec<(f64, C64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-3.0..3.0),
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    let shift: f64 = rng.random_range(-2.0..2.0);
    let psi = g
        .points()
        .iter()
        .map(|&x| {
            let env = (-(x - shift).powi(2) / 2.0).exp();
            env * modes.iter().map(|(k, c)| c * C64::from_polar(1.0, k * x)).sum::<C64>()
        })
        .collect();
    WaveFunction::normalized(g, hbar, psi).unwrap()
}

#[test]
fn gaussian_wigner_closed_form() {
    let h = 0.05;
    let psi = ground_gaussian(h);
    let w = wigner(&psi).unwrap();
    let xs = w.grid.x();
    let mut worst: f64 = 0.0;
    for (r, &x) in xs.iter().enumerate() {
        for (l, &xi) in w.grid.xi.iter().enumerate() {
            let exact = (-(x * x + xi * xi) / h).exp() / (PI * h);
            worst = worst.max((w.values[[r, l]] - exact).abs());
        }
    }
    assert!(worst <= 1e-6, "sup error {worst}");
    assert!(w.imag_residue <= 1e-12);
    assert!((w.total_mass() - 1.0).abs() <= 1e-8);
}

#[test]
fn marginal_and_parity() {
    let g = make_grid(51.2, 2048).unwrap();
    let psi = init_mollified(&g, &gaussian_density(&g, 0.5, 1.2), 0.1).unwrap();
    let w = wigner(&psi).unwrap();
    let rho = psi.density();
    let marg = w.marginal();
    let worst = marg.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 2e-8, "marginal error {worst}");
    let n = w.grid.xi.len();
    for row in w.values.rows() {
        for l in 1..n {
            assert!((row[l] - row[n - l]).abs() <= 1e-10);
        }
    }
}

#[test]
fn marginal_of_boosted_state_on_strided_rows() {
    let g = make_grid(51.2, 2048).unwrap();
    let rho = gaussian_density(&g, -1.0, 0.8);
    let phase: Vec<f64> = g.points().iter().map(|x| 0.6 * x + 0.1 * x * x).collect();
    let psi = init_wkb(&g, &rho, &phase, 0.1).unwrap();
    let w = wigner_rows(&psi, 4).unwrap();
    let dens = psi.density();
    for (r, m) in w.marginal().iter().enumerate() {
        assert!((m - dens[4 * r]).abs() <= 2e-8);
    }
}

#[test]
fn purity_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..4 {
        let psi = random_state(&mut rng, 0.1);
        let w = wigner(&psi).unwrap();
        let purity = w.values.iter().map(|v| v * v).sum::<f64>() * w.grid.dx_rows() * w.grid.dxi;
        let target = 1.0 / (2.0 * PI * psi.hbar);
        assert!((purity / target - 1.0).abs() <= 0.01, "purity {purity} vs {target}");
    }
}

#[test]
fn husimi_of_ground_gaussian_doubles_variance() {
    let h = 0.05;
    let psi = ground_gaussian(h);
    let q = husimi(&wigner(&psi).unwrap());
    let xs = q.grid.x();
    let mut worst: f64 = 0.0;
    for (r, &x) in xs.iter().enumerate() {
        for (l, &xi) in q.grid.xi.iter().enumerate() {
            let exact = (-(x * x + xi * xi) / (2.0 * h)).exp() / (2.0 * PI * h);
            worst = worst.max((q.values[[r, l]] - exact).abs());
        }
    }
    assert!(worst <= 1e-6, "sup error {worst}");
    assert!((q.total_mass() - 1.0).abs() <= 1e-8);
}

#[test]
fn husimi_is_nonnegative_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let psi = random_state(&mut rng, 0.1);
        let q = husimi(&wigner(&psi).unwrap());
        assert!(q.min() >= -1e-10, "min {}", q.min());
        assert!((q.total_mass() - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn husimi_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let psi = random_state(&mut rng, 0.1);
    let q = husimi(&wigner(&psi).unwrap());
    let xs = q.grid.x();
    let rows: Vec<usize> = (100..400).step_by(37).collect();
    let pick_x: Vec<f64> = rows.iter().map(|&r| xs[r]).collect();
    let cols: Vec<usize> = (20..236).step_by(23).collect();
    let pick_xi: Vec<f64> = cols.iter().map(|&l| q.grid.xi[l]).collect();
    let direct = husimi_coherent(&psi, &pick_x, &pick_xi);
    for (a, &r) in rows.iter().enumerate() {
        for (b, &l) in cols.iter().enumerate() {
            assert!((direct[[a, b]] - q.values[[r, l]]).abs() <= 1e-9);
        }
    }
}

#[test]
fn closed_form_moments_match_grid_moments() {
    let h = 0.05;
    let psi = ground_gaussian(h);
    let w = wigner(&psi).unwrap();
    let grid_m = moments_from_grid(&w, 3);
    let closed = moments_closed_form(&psi, 3).unwrap();
    for k in 0..=3 {
        let worst = grid_m.profiles[k]
            .iter()
            .zip(&closed.profiles[k])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-5, "k = {k}: {worst}");
    }
    for k in [1, 3] {
        assert!(grid_m.profiles[k].iter().all(|v| v.abs() <= 1e-10));
        assert!(closed.profiles[k].iter().all(|v| v.abs() <= 1e-10));
    }
    assert!(closed.imag_residue <= 1e-10);
}

#[test]
fn closed_form_moment_identities() {
    let g = make_grid(51.2, 2048).unwrap();
    let rho = gaussian_density(&g, 0.0, 1.0);
    let xi0 = -0.9;
    let phase: Vec<f64> = g.points().iter().map(|x| xi0 * x).collect();
    let psi = init_wkb(&g, &rho, &phase, 0.1).unwrap();
    let m = moments_closed_form(&psi, 2).unwrap();
    let dens = psi.density();
    for j in 0..g.n() {
        assert_eq!(m.profiles[0][j], dens[j]);
        assert!((m.profiles[1][j] - xi0 * m.profiles[0][j]).abs() <= 1e-9);
    }
    let kin = psi.scaled_derivative_norm(1).powi(2);
    assert!((m.integral(2) - kin).abs() <= 1e-9);
    assert!(moments_closed_form(&psi, 9).is_err());
}

#[test]
fn moments_on_mixed_states_are_real() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let psi = random_state(&mut rng, 0.2);
    let m = moments_closed_form(&psi, 6).unwrap();
    assert!(m.imag_residue <= 1e-10);
    assert!(m.profiles[0].iter().all(|v| *v >= -1e-12));
}

fn shifted_rows(w: &WignerField, by: usize) -> WignerField {
    let mut out = w.clone();
    let n = w.values.nrows();
    for r in 0..n {
        out.values.row_mut((r + by) % n).assign(&w.values.row(r));
    }
    out
}

#[test]
fn weak_error_examples() {
    let fam = TestFunctionFamily::standard();
    let g = make_grid(51.2, 2048).unwrap();
    let psi = init_mollified(&g, &gaussian_density(&g, 0.2, 1.0), 0.05).unwrap();
    let w = wigner(&psi).unwrap();
    assert_eq!(weak_error(&w, &w, &fam).unwrap(), 0.0);

    let dx = w.grid.dx_rows();
    let one = weak_error(&w, &shifted_rows(&w, 1), &fam).unwrap();
    let two = weak_error(&w, &shifted_rows(&w, 2), &fam).unwrap();
    assert!(one > 0.0 && (two / one - 2.0).abs() < 0.05, "{one} {two}");
    let grad_bound = fam
        .functions
        .iter()
        .map(|phi| {
            let d: f64 = (0..4000)
                .map(|i| -10.0 + 20.0 * i as f64 / 4000.0)
                .map(|x| ((phi.spatial_factor(x + 1e-5) - phi.spatial_factor(x - 1e-5)) / 2e-5).abs())
                .fold(0.0, f64::max);
            d / phi.a_norm
        })
        .fold(0.0, f64::max);
    let second_moment = 1.0 + moments_closed_form(&psi, 2).unwrap().integral(2);
    assert!(one <= 1.01 * dx * grad_bound * second_moment * 8.0);

    let q = husimi(&w);
    let gap = weak_error(&w, &q, &fam).unwrap();
    let c_phi = fam.functions.iter().map(|p| 1.0 / p.a_norm).fold(0.0, f64::max);
    assert!(gap <= 0.05 * c_phi, "gap {gap} bound {}", 0.05 * c_phi);

    let m_closed = moments_closed_form(&psi, 2).unwrap();
    let m_grid = moments_from_grid(&w, 2);
    let e = weak_error(&m_closed, &m_grid, &fam).unwrap();
    assert!(e <= 1e-8, "moment-set pairing mismatch {e}");
    for phi in &fam.functions {
        let a = w.pair(phi).unwrap();
        let b = m_closed.pair(phi).unwrap();
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn wigner_husimi_moment_gap_shrinks_with_hbar() {
    let g = make_grid(51.2, 2048).unwrap();
    let base = gaussian_density(&g, 0.0, 1.0);
    let fam = TestFunctionFamily::standard();
    let mut gaps = Vec::new();
    for h in [0.4, 0.2, 0.1] {
        let psi = init_mollified(&g, &base, h).unwrap();
        let w = wigner_rows(&psi, 2).unwrap();
        let q = husimi(&w);
        gaps.push(weak_error(&moments_from_grid(&w, 3), &moments_from_grid(&q, 3), &fam).unwrap());
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn inadmissible_hbar_is_rejected() {
    let g = make_grid(51.2, 2048).unwrap();
    let psi = init_mollified(&g, &gaussian_density(&g, 0.0, 1.0), 0.31).unwrap();
    let err = wigner(&psi).unwrap_err().to_string();
    assert!(err.contains("admissible"), "{err}");
}
