use nalgebra::DMatrix;
use num_complex::Complex64;
use sedlab::balance::{commutator_check, solve_beta};
use sedlab::grid::Grid1D;
use sedlab::hydro::{momentum_operator_check, sqm_residual, wavefunction_to_fields, SqmParams, Wavefunction};
use sedlab::model::{PhysicalParams, Potential};
use sedlab::schrodinger::{eigenpairs, propagate, variational_ground_state, VariationalOptions};

const QUARTIC: Potential = Potential::Quartic { k: 1.0 };
const HARMONIC: Potential = Potential::Harmonic { omega0: 1.0 };

/// Lowest eigenvalues of the same finite-difference matrix, built densely and
/// diagonalized by a general symmetric solver.
fn dense_spectrum(potential: &Potential, grid: &Grid1D, params: &PhysicalParams) -> Vec<f64> {
    let n = grid.n_points - 2;
    let h = grid.spacing();
    let t = params.hbar().powi(2) / (2.0 * params.mass() * h * h);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 2.0 * t + potential.value(params.mass(), grid.x(i + 1));
        if i + 1 < n {
            a[(i, i + 1)] = -t;
            a[(i + 1, i)] = -t;
        }
    }
    let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn quartic_spectrum_matches_dense_diagonalization() {
    let p = PhysicalParams::default();
    let grid = Grid1D::new(-4.0, 4.0, 401).unwrap();
    let dense = dense_spectrum(&QUARTIC, &grid, &p);
    let pairs = eigenpairs(&QUARTIC, &grid, &p, 6).unwrap();
    for (a, b) in pairs.spectral.levels.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-9 * b.abs(), "{a} vs {b}");
    }
    let var = variational_ground_state(&QUARTIC, &grid, &p, VariationalOptions::default()).unwrap();
    assert!((var.energy - dense[0]).abs() < 1e-8, "{} vs {}", var.energy, dense[0]);
    // Known continuum value for p^2/2 + x^4.
    assert!((dense[0] - 0.667_986_259).abs() < 1e-3, "{}", dense[0]);
}

#[test]
fn balance_holds_on_an_anharmonic_spectrum() {
    let p = PhysicalParams::default();
    let grid = Grid1D::new(-5.0, 5.0, 2001).unwrap();
    let pairs = eigenpairs(&QUARTIC, &grid, &p, 12).unwrap();
    let report = solve_beta(&pairs.spectral, &p).unwrap();
    assert!((report.beta - Complex64::new(0.0, -1.0)).norm() < 1e-10, "{:?}", report.beta);
    assert!(report.worst_ratio_error() < 1e-8);
    for state in &pairs.states[..3] {
        let c = commutator_check(state, &p).unwrap();
        assert!((c - Complex64::i()).norm() < 1e-4, "{c}");
    }
}

fn coherent(grid: Grid1D, x0: f64) -> Wavefunction {
    let mut psi = Wavefunction::from_fn(grid, |x| Complex64::new((-(x - x0).powi(2) / 2.0).exp(), 0.0));
    psi.normalize();
    psi
}

#[test]
fn coherent_state_follows_the_classical_orbit() {
    let p = PhysicalParams::default();
    let grid = Grid1D::new(-10.0, 10.0, 2048).unwrap();
    let psi = coherent(grid, 1.0);
    let dt = 1e-3;
    let steps = (2.0 * std::f64::consts::PI / dt).round() as usize;
    let out = propagate(&psi, &HARMONIC, &grid, &p, dt, steps, 100).unwrap();
    for (t, state) in &out {
        assert!((state.mean_position() - t.cos()).abs() < 1e-3, "t = {t}");
        assert!((state.position_variance() - 0.5).abs() < 1e-3, "t = {t}");
    }
}

#[test]
fn free_gaussian_spreads_at_the_ballistic_rate() {
    let p = PhysicalParams::default();
    let grid = Grid1D::new(-30.0, 30.0, 4096).unwrap();
    let s0 = 0.5_f64;
    let mut psi = Wavefunction::from_fn(grid, |x| Complex64::new((-x * x / (4.0 * s0 * s0)).exp(), 0.0));
    psi.normalize();
    let out = propagate(&psi, &Potential::Free, &grid, &p, 1e-3, 2000, 2000).unwrap();
    let (t, last) = out.last().unwrap();
    let expect = s0 * s0 * (1.0 + (t / (2.0 * s0 * s0)).powi(2));
    assert!((last.position_variance() - expect).abs() < 0.01 * expect, "{} vs {expect}", last.position_variance());
}

#[test]
fn evolved_coherent_state_satisfies_the_quantum_branch_only() {
    let p = PhysicalParams::default();
    let grid = Grid1D::new(-10.0, 10.0, 2048).unwrap();
    let out = propagate(&coherent(grid, 1.0), &HARMONIC, &grid, &p, 1e-3, 400, 20).unwrap();
    let series: Vec<_> = out.iter().map(|(t, s)| wavefunction_to_fields(s, &p, *t).unwrap()).collect();
    let plus = sqm_residual(&series, &HARMONIC, &p, SqmParams::quantum(&p)).unwrap();
    let minus = sqm_residual(&series, &HARMONIC, &p, SqmParams::new(-1.0, p.diffusion()).unwrap()).unwrap();
    assert!(plus.first < 1e-2 && plus.second < 1e-2, "{plus:?}");
    assert!(minus.first > 0.5, "{minus:?}");
    let m = momentum_operator_check(&out.last().unwrap().1, &p).unwrap();
    assert!(m.identity_error < 1e-6, "{m:?}");
}
