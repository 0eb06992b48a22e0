use num_complex::Complex64 as C64;
use qvlasov::grid::{make_grid, SpatialGrid};
use qvlasov::hartree::{evolve, WaveFunction};
use qvlasov::nbody::{
    marginal, marginal_from_amplitudes, memory_estimate, nbody_energy, nbody_evolve, trace_distance,
    wigner_gap, NBodyWaveFunction, DEFAULT_MEMORY_CAP,
};
use qvlasov::potential::{KernelParams, Sign};
use qvlasov::Error;

fn grid() -> SpatialGrid {
    make_grid(16.0, 64).unwrap()
}

fn coherent(g: &SpatialGrid, hbar: f64, center: f64, momentum: f64) -> WaveFunction {
    let psi = g
        .points()
        .iter()
        .map(|&x| C64::from_polar((-(x - center).powi(2) / (2.0 * 0.6)).exp(), momentum * x / hbar))
        .collect();
    WaveFunction::normalized(*g, hbar, psi).unwrap()
}

/// Two bumps moving toward each other.
fn colliding(g: &SpatialGrid, hbar: f64) -> WaveFunction {
    let a = coherent(g, hbar, -1.2, 0.6);
    let b = coherent(g, hbar, 1.2, -0.6);
    let psi = a.psi.iter().zip(&b.psi).map(|(x, y)| x + y).collect();
    WaveFunction::normalized(*g, hbar, psi).unwrap()
}

#[test]
fn product_state_has_pure_marginal() {
    let g = grid();
    let psi = colliding(&g, 0.5);
    for particles in [2, 3] {
        let state = NBodyWaveFunction::product(&psi, particles, KernelParams::defocusing(0.5)).unwrap();
        assert!((state.norm() - 1.0).abs() < 1e-12);
        let gamma = marginal(&state);
        assert!((gamma.trace() - 1.0).abs() < 1e-12);
        assert!(gamma.hermiticity_defect() < 1e-12);
        assert!(trace_distance(&gamma, &psi).unwrap() < 1e-10);
        let ev = gamma.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-10 && ev[1].abs() < 1e-10);
    }
    assert!(NBodyWaveFunction::product(&psi, 4, KernelParams::defocusing(0.5)).is_err());
}

#[test]
fn symmetrized_two_mode_state_splits_evenly() {
    let g = grid();
    // even and odd modes about the box center are exactly orthogonal
    let a = coherent(&g, 0.5, 0.0, 0.0);
    let odd = g.points().iter().zip(&a.psi).map(|(x, p)| p * *x).collect();
    let b = WaveFunction::normalized(g, 0.5, odd).unwrap();
    let n = g.n();
    let mut amp = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            amp[i * n + j] = (a.psi[i] * b.psi[j] + b.psi[i] * a.psi[j]) / 2f64.sqrt();
        }
    }
    let gamma = marginal_from_amplitudes(g, 0.5, 2, amp).unwrap();
    let ev = gamma.eigenvalues();
    assert!((ev[0] - 0.5).abs() < 1e-10 && (ev[1] - 0.5).abs() < 1e-10, "{:?}", &ev[..3]);
    assert!(ev[2].abs() < 1e-10);
}

#[test]
fn trace_distance_examples() {
    let g = grid();
    let a = coherent(&g, 0.5, -3.0, 0.0);
    let b = coherent(&g, 0.5, 3.0, 0.0);
    let pa = marginal(&NBodyWaveFunction::product(&a, 2, KernelParams::defocusing(0.5)).unwrap());
    assert!(trace_distance(&pa, &a).unwrap() < 1e-10);
    // disjoint supports are orthogonal to within exp(-15)
    assert!((trace_distance(&pa, &b).unwrap() - 2.0).abs() < 1e-6);
    let other = make_grid(16.0, 32).unwrap();
    assert!(trace_distance(&pa, &coherent(&other, 0.5, 0.0, 0.0)).is_err());
}

#[test]
fn free_evolution_stays_uncorrelated() {
    let g = grid();
    let psi = colliding(&g, 0.5);
    let off = KernelParams::new(0.5, Sign::Off).unwrap();
    let states = nbody_evolve(&psi, 2, 0.5, 0.01, off, &[], DEFAULT_MEMORY_CAP).unwrap();
    let one = evolve(&psi, 0.5, 0.01, off, &[]).unwrap();
    let d = trace_distance(&marginal(&states[1]), one.snapshots.last().unwrap()).unwrap();
    assert!(d < 1e-10, "{d}");
}

#[test]
fn splitting_converges_at_second_order() {
    let g = make_grid(16.0, 32).unwrap();
    let psi = colliding(&g, 0.5);
    let p = KernelParams::defocusing(0.5);
    let end = |dt: f64| nbody_evolve(&psi, 2, 0.4, dt, p, &[], DEFAULT_MEMORY_CAP).unwrap().pop().unwrap();
    let a = end(0.02);
    let b = end(0.01);
    let c = end(0.005);
    let dist = |x: &NBodyWaveFunction, y: &NBodyWaveFunction| {
        (x.psi.iter().zip(y.psi.iter()).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>()).sqrt()
    };
    let order = (dist(&a, &b) / dist(&b, &c)).log2();
    assert!(order >= 1.8, "{order}");
}

#[test]
fn conserved_quantities_and_exchange_symmetry() {
    let g = grid();
    let psi = colliding(&g, 0.5);
    let p = KernelParams::defocusing(0.5);
    let states = nbody_evolve(&psi, 3, 0.3, 0.005, p, &[0.0, 0.15, 0.3], DEFAULT_MEMORY_CAP).unwrap();
    let e0 = nbody_energy(&states[0]);
    for s in &states {
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!(s.exchange_asymmetry() < 1e-12);
        assert!((nbody_energy(s) - e0).abs() < 1e-4 * e0.abs(), "{} {e0}", nbody_energy(s));
    }
}

#[test]
fn wigner_gap_routes_agree() {
    let g = grid();
    let psi = colliding(&g, 0.5);
    let p = KernelParams::defocusing(0.5);
    let states = nbody_evolve(&psi, 2, 0.3, 0.01, p, &[], DEFAULT_MEMORY_CAP).unwrap();
    let hartree = evolve(&psi, 0.3, 0.01, p, &[]).unwrap();
    let gap = wigner_gap(&marginal(&states[1]), hartree.snapshots.last().unwrap()).unwrap();
    assert!(gap.direct > 1e-6);
    assert!((gap.direct - gap.plancherel).abs() <= 1e-12 * gap.direct, "{gap:?}");
}

#[test]
fn mean_field_gap_shrinks_with_particle_number() {
    let g = grid();
    let psi = colliding(&g, 0.5);
    let p = KernelParams::defocusing(0.5);
    let hartree = evolve(&psi, 0.3, 0.005, p, &[]).unwrap();
    let target = hartree.snapshots.last().unwrap();
    let gaps: Vec<f64> = [2, 3]
        .iter()
        .map(|&n| {
            let s = nbody_evolve(&psi, n, 0.3, 0.005, p, &[], DEFAULT_MEMORY_CAP).unwrap();
            trace_distance(&marginal(s.last().unwrap()), target).unwrap()
        })
        .collect();
    println!("trace distances N=2 {:.4e}, N=3 {:.4e}", gaps[0], gaps[1]);
    assert!(gaps[1] < gaps[0]);
}

#[test]
fn memory_cap_is_enforced() {
    let g = grid();
    let psi = colliding(&g, 0.5);
    match nbody_evolve(&psi, 3, 0.1, 0.01, KernelParams::defocusing(0.5), &[], 1 << 20) {
        Err(Error::Memory { suggested_n, .. }) => {
            assert!(memory_estimate(suggested_n, 3) <= 1 << 20);
            assert!(memory_estimate(2 * suggested_n, 3) > 1 << 20);
        }
        other => panic!("expected a memory error, got {other:?}"),
    }
}
