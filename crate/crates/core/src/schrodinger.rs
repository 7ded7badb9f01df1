//! Grid quantum mechanics used as the independent oracle.
//!
//! The Hamiltonian is the three-point finite-difference operator with zero
//! Dirichlet values at both grid ends (and wherever the potential is
//! infinite). Inner products are `h * sum`, which equals the trapezoid rule
//! because the end values vanish.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::SpectralData;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid1D;
use crate::hydro::Wavefunction;
use crate::model::{PhysicalParams, Potential};

/// Boundary amplitude above which the domain is considered too small.
pub const BOUNDARY_THRESHOLD: f64 = 1e-8;

/// Largest number of eigenpairs `eigenpairs` will compute.
pub const MAX_EIGENPAIRS: usize = 20;

/// Finite-difference Hamiltonian restricted to the free (non-pinned) nodes.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid1D,
    /// `hbar^2 / (2 m h^2)`
    hopping: f64,
    potential: Vec<f64>,
    /// First and one-past-last free node.
    free: (usize, usize),
}

impl Hamiltonian {
    pub fn new(potential: &Potential, grid: &Grid1D, params: &PhysicalParams) -> Result<Self> {
        grid.validate()?;
        potential.validate()?;
        let m = params.mass();
        let v: Vec<f64> = grid.points().iter().map(|&x| potential.value(m, x)).collect();
        let n = grid.n_points;
        let finite: Vec<usize> = (1..n - 1).filter(|&i| v[i].is_finite()).collect();
        let (lo, hi) = match (finite.first(), finite.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi + 1),
            _ => return Err(invalid("potential", "no finite interior nodes on the grid")),
        };
        if finite.len() != hi - lo {
            return Err(invalid("potential", "finite region of the potential is not contiguous"));
        }
        if hi - lo < 3 {
            return Err(invalid("grid", "fewer than 3 free nodes"));
        }
        let h = grid.spacing();
        Ok(Self {
            grid: *grid,
            hopping: params.hbar().powi(2) / (2.0 * m * h * h),
            potential: v,
            free: (lo, hi),
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    fn free_len(&self) -> usize {
        self.free.1 - self.free.0
    }

    /// Diagonal and off-diagonal of the free block.
    fn tridiagonal(&self) -> (Vec<f64>, f64) {
        let (lo, hi) = self.free;
        let diag = (lo..hi).map(|i| 2.0 * self.hopping + self.potential[i]).collect();
        (diag, -self.hopping)
    }

    /// `H psi` on a full-length real vector; pinned nodes map to zero.
    pub fn apply(&self, psi: &[f64], out: &mut [f64]) {
        let (lo, hi) = self.free;
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in lo..hi {
            let left = if i > lo { psi[i - 1] } else { 0.0 };
            let right = if i + 1 < hi { psi[i + 1] } else { 0.0 };
            out[i] = self.hopping * (2.0 * psi[i] - left - right) + self.potential[i] * psi[i];
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let (lo, hi) = self.free;
        self.grid.spacing() * (lo..hi).map(|i| a[i] * b[i]).sum::<f64>()
    }
}

/// `int (hbar^2/2m) |psi'|^2 + V |psi|^2 dx`, with `|psi'|^2` from forward
/// differences over every grid link. Rejects inputs whose norm is off by
/// more than 1e-6.
pub fn energy_functional(
    psi: &Wavefunction,
    potential: &Potential,
    grid: &Grid1D,
    params: &PhysicalParams,
) -> Result<f64> {
    psi.grid.ensure_same(grid)?;
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm });
    }
    let h = grid.spacing();
    let m = params.mass();
    let kinetic: f64 = psi
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]).norm_sqr())
        .sum::<f64>()
        / h;
    let values: Vec<f64> = grid
        .points()
        .iter()
        .zip(&psi.values)
        .map(|(&x, z)| {
            let p = z.norm_sqr();
            if p == 0.0 {
                0.0
            } else {
                potential.value(m, x) * p
            }
        })
        .collect();
    let pot = crate::grid::trapezoid(&values, h);
    Ok(params.hbar().powi(2) / (2.0 * m) * kinetic + pot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalResult {
    pub psi: Wavefunction,
    pub energy: f64,
    /// Normalization multiplier; equals the energy at a stationary point.
    pub gamma: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Energy after every iteration (starting with the initial guess).
    pub history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("variational descent did not converge in {} iterations (gradient norm {:e})", .0.iterations, .0.grad_norm)]
    NotConverged(Box<VariationalResult>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalOptions {
    /// Convergence threshold on `||H psi - gamma psi||`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Energy history is kept only while shorter than this.
    pub history_limit: usize,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iterations: 200_000,
            history_limit: 100_000,
        }
    }
}

/// Gradient of `E[psi/|psi|]` at a normalized real `psi`, with respect to the
/// grid values: `2 h (H psi - E psi)`.
pub fn projected_gradient(ham: &Hamiltonian, psi: &[f64]) -> Vec<f64> {
    let mut hpsi = vec![0.0; psi.len()];
    ham.apply(psi, &mut hpsi);
    let e = ham.dot(psi, &hpsi);
    let h = ham.grid.spacing();
    let (lo, hi) = ham.free;
    (0..psi.len())
        .map(|i| if i >= lo && i < hi { 2.0 * h * (hpsi[i] - e * psi[i]) } else { 0.0 })
        .collect()
}

/// Minimizes the energy functional under the normalization constraint.
///
/// Each iteration moves along a projected descent direction (steepest descent
/// mixed with the previous direction, Polak–Ribière) and renormalizes. The
/// step is the exact minimizer of the energy on the great circle through the
/// current iterate, so the energy never increases.
pub fn variational_ground_state(
    potential: &Potential,
    grid: &Grid1D,
    params: &PhysicalParams,
    options: VariationalOptions,
) -> Result<VariationalResult, SolveError> {
    if !potential.is_confining() {
        return Err(invalid("potential", "variational solve needs a confining potential").into());
    }
    let ham = Hamiltonian::new(potential, grid, params)?;
    let n = grid.n_points;
    let (lo, hi) = ham.free;
    let width = (hi - lo + 1) as f64;

    let mut psi: Vec<f64> = (0..n)
        .map(|i| {
            if i >= lo && i < hi {
                (std::f64::consts::PI * (i - lo + 1) as f64 / width).sin()
            } else {
                0.0
            }
        })
        .collect();
    let norm = ham.dot(&psi, &psi).sqrt();
    psi.iter_mut().for_each(|v| *v /= norm);

    let mut hpsi = vec![0.0; n];
    let mut hd = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut grad_prev: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        ham.apply(&psi, &mut hpsi);
        let energy = ham.dot(&psi, &hpsi);
        if history.len() < options.history_limit {
            history.push(energy);
        }
        let residual: Vec<f64> = (0..n).map(|i| hpsi[i] - energy * psi[i]).collect();
        grad_norm = ham.dot(&residual, &residual).sqrt();
        if grad_norm < options.tol || iterations >= options.max_iterations {
            break;
        }
        let grad: Vec<f64> = residual.iter().map(|r| 2.0 * r).collect();

        let beta = match &grad_prev {
            Some(prev) => {
                let num: f64 = ham.dot(&grad, &grad) - ham.dot(&grad, prev);
                (num / ham.dot(prev, prev)).max(0.0)
            }
            None => 0.0,
        };
        for i in 0..n {
            dir[i] = -grad[i] + beta * dir[i];
        }
        // Keep the direction tangent to the unit sphere.
        let along = ham.dot(&dir, &psi);
        dir.iter_mut().zip(&psi).for_each(|(d, p)| *d -= along * p);
        if ham.dot(&dir, &grad) >= 0.0 {
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
        }
        let dnorm = ham.dot(&dir, &dir).sqrt();
        if !(dnorm > 0.0) {
            break;
        }
        let unit: Vec<f64> = dir.iter().map(|d| d / dnorm).collect();

        // Exact minimization on span{psi, unit}: lowest eigenvector of the 2x2 projection.
        ham.apply(&unit, &mut hd);
        let a = energy;
        let b = ham.dot(&psi, &hd);
        let c = ham.dot(&unit, &hd);
        // Cancellation-free form of the lowest eigenvector.
        let delta = 0.5 * (c - a);
        let root = delta.hypot(b);
        let (mut c1, mut c2) = if delta >= 0.0 {
            (1.0, -b / (delta + root))
        } else {
            (-b / (-delta + root), 1.0)
        };
        let s = (c1 * c1 + c2 * c2).sqrt();
        c1 /= s;
        c2 /= s;
        if c1 < 0.0 {
            c1 = -c1;
            c2 = -c2;
        }
        for i in 0..n {
            psi[i] = c1 * psi[i] + c2 * unit[i];
        }
        let norm = ham.dot(&psi, &psi).sqrt();
        psi.iter_mut().for_each(|v| *v /= norm);
        grad_prev = Some(grad);
        iterations += 1;
    }

    // The ground state has no nodes; fix the overall sign.
    if psi.iter().sum::<f64>() < 0.0 {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
    psi.iter_mut().for_each(|v| *v = v.max(0.0));
    let norm = ham.dot(&psi, &psi).sqrt();
    psi.iter_mut().for_each(|v| *v /= norm);
    ham.apply(&psi, &mut hpsi);
    let gamma = ham.dot(&psi, &hpsi);
    let wf = Wavefunction::from_real(*grid, &psi);
    let energy = energy_functional(&wf, potential, grid, params)?;
    let result = VariationalResult {
        psi: wf,
        energy,
        gamma,
        iterations,
        grad_norm,
        history,
    };
    if grad_norm < options.tol {
        Ok(result)
    } else {
        Err(SolveError::NotConverged(Box::new(result)))
    }
}

/// Lowest eigenpairs of the finite-difference Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpairs {
    pub spectral: SpectralData,
    pub states: Vec<Wavefunction>,
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `lambda`
/// (Sturm sequence count).
fn count_below(diag: &[f64], off: f64, lambda: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    let off2 = off * off;
    for (i, &d) in diag.iter().enumerate() {
        q = d - lambda - if i == 0 { 0.0 } else { off2 / q };
        if q == 0.0 {
            q = f64::EPSILON * (d.abs() + off.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T - shift) x = rhs` for the constant-off-diagonal tridiagonal `T`.
fn solve_shifted(diag: &[f64], off: f64, shift: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let tiny = 1e-300;
    let mut pivot = diag[0] - shift;
    if pivot == 0.0 {
        pivot = tiny;
    }
    c[0] = off / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        let mut denom = diag[i] - shift - off * c[i - 1];
        if denom == 0.0 {
            denom = tiny;
        }
        if !denom.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        c[i] = off / denom;
        d[i] = (rhs[i] - off * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Lowest `k` eigenpairs by Sturm bisection and inverse iteration.
pub fn eigenpairs(potential: &Potential, grid: &Grid1D, params: &PhysicalParams, k: usize) -> Result<Eigenpairs> {
    let ham = Hamiltonian::new(potential, grid, params)?;
    let m = ham.free_len();
    let capacity = (m / 4).min(MAX_EIGENPAIRS);
    if k == 0 || k > capacity {
        return Err(Error::TooManyEigenpairs {
            requested: k,
            capacity,
        });
    }
    let (diag, off) = ham.tridiagonal();
    let lower = diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * off.abs();
    let upper = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * off.abs();
    let h = grid.spacing();
    let (lo, _) = ham.free;
    let xs = grid.points();

    let mut levels = Vec::with_capacity(k);
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let (mut a, mut b) = (lower, upper);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(&diag, off, mid) > j {
                b = mid;
            } else {
                a = mid;
            }
        }
        let lambda = 0.5 * (a + b);
        let shift = lambda - 1e-10 * (1.0 + lambda.abs());
        let mut vec: Vec<f64> = (0..m).map(|i| 1.0 + 0.01 * ((i * 7919 + j * 104_729) % 97) as f64).collect();
        for _ in 0..4 {
            // Orthogonalize against the lower states to avoid collapse.
            for prev in &states {
                let proj: f64 = (0..m).map(|i| prev[lo + i] * vec[i]).sum::<f64>() * h;
                for i in 0..m {
                    vec[i] -= proj * prev[lo + i];
                }
            }
            vec = solve_shifted(&diag, off, shift, &vec)?;
            let norm = (vec.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
            vec.iter_mut().for_each(|v| *v /= norm);
        }
        let peak = vec.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let first = vec.iter().find(|v| v.abs() > 1e-3 * peak).copied().unwrap_or(1.0);
        if first < 0.0 {
            vec.iter_mut().for_each(|v| *v = -*v);
        }
        let mut full = vec![0.0; grid.n_points];
        full[lo..lo + m].copy_from_slice(&vec);
        levels.push(lambda);
        states.push(full);
    }

    let hbar = params.hbar();
    let ground = &states[0];
    let dipoles = states
        .iter()
        .map(|s| h * s.iter().zip(ground).zip(&xs).map(|((a, b), x)| a * x * b).sum::<f64>())
        .collect();
    let frequencies = levels.iter().map(|e| (e - levels[0]) / hbar).collect();
    Ok(Eigenpairs {
        spectral: SpectralData {
            levels,
            frequencies,
            dipoles,
        },
        states: states.iter().map(|s| Wavefunction::from_real(*grid, s)).collect(),
    })
}

/// Crank–Nicolson propagation `(1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi`.
/// Returns the state every `stride` steps, starting with the input.
pub fn propagate(
    psi: &Wavefunction,
    potential: &Potential,
    grid: &Grid1D,
    params: &PhysicalParams,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<(f64, Wavefunction)>> {
    psi.grid.ensure_same(grid)?;
    if !(dt > 0.0) || stride == 0 {
        return Err(invalid("propagate", "need dt > 0 and stride > 0"));
    }
    let ham = Hamiltonian::new(potential, grid, params)?;
    let (lo, hi) = ham.free;
    let m = hi - lo;
    let (diag, off) = ham.tridiagonal();
    let alpha = Complex64::new(0.0, 0.5 * dt / params.hbar());
    let lhs_diag: Vec<Complex64> = diag.iter().map(|d| Complex64::new(1.0, 0.0) + alpha * d).collect();
    let lhs_off = alpha * off;

    // LU factors of the constant left-hand matrix.
    let mut c = vec![Complex64::new(0.0, 0.0); m];
    let mut denom = vec![Complex64::new(0.0, 0.0); m];
    denom[0] = lhs_diag[0];
    c[0] = lhs_off / denom[0];
    for i in 1..m {
        denom[i] = lhs_diag[i] - lhs_off * c[i - 1];
        if denom[i].norm() == 0.0 {
            return Err(Error::SingularSystem { row: i });
        }
        c[i] = lhs_off / denom[i];
    }

    let mut state: Vec<Complex64> = psi.values[lo..hi].to_vec();
    let mut rhs = vec![Complex64::new(0.0, 0.0); m];
    let mut out = Vec::with_capacity(steps / stride + 1);
    let emit = |state: &[Complex64], t: f64, out: &mut Vec<(f64, Wavefunction)>| {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.n_points];
        values[lo..hi].copy_from_slice(state);
        out.push((t, Wavefunction::new(*grid, values)));
    };
    emit(&state, 0.0, &mut out);
    for s in 1..=steps {
        for i in 0..m {
            let left = if i > 0 { state[i - 1] } else { Complex64::new(0.0, 0.0) };
            let right = if i + 1 < m { state[i + 1] } else { Complex64::new(0.0, 0.0) };
            rhs[i] = state[i] - alpha * (diag[i] * state[i] + off * (left + right));
        }
        // Forward and back substitution.
        state[0] = rhs[0] / denom[0];
        for i in 1..m {
            state[i] = (rhs[i] - lhs_off * state[i - 1]) / denom[i];
        }
        for i in (0..m - 1).rev() {
            let next = state[i + 1];
            state[i] -= c[i] * next;
        }
        if s % stride == 0 {
            emit(&state, s as f64 * dt, &mut out);
        }
    }
    Ok(out)
}

/// Largest `|psi|` at the two grid ends relative to the peak.
pub fn boundary_amplitude(psi: &Wavefunction) -> f64 {
    let peak = psi.values.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let n = psi.values.len();
    let edge = psi.values[..2]
        .iter()
        .chain(&psi.values[n - 2..])
        .fold(0.0f64, |a, z| a.max(z.norm()));
    if peak > 0.0 {
        edge / peak
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    fn harmonic() -> Potential {
        Potential::Harmonic { omega0: 1.0 }
    }

    fn gaussian(grid: Grid1D, x0: f64) -> Wavefunction {
        let mut psi = Wavefunction::from_fn(grid, |x| Complex64::new((-(x - x0).powi(2) / 2.0).exp(), 0.0));
        psi.normalize();
        psi
    }

    #[test]
    fn energy_functional_examples() {
        let g = Grid1D::new(-8.0, 8.0, 2048).unwrap();
        let e = energy_functional(&gaussian(g, 0.0), &harmonic(), &g, &unit()).unwrap();
        assert_relative_eq!(e, 0.5, epsilon = 1e-4);
        let e = energy_functional(&gaussian(g, 1.0), &harmonic(), &g, &unit()).unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-4);

        let b = Grid1D::new(0.0, 1.0, 1024).unwrap();
        let mut sine = Wavefunction::from_fn(b, |x| Complex64::new((PI * x).sin(), 0.0));
        sine.normalize();
        let e = energy_functional(&sine, &Potential::Box { length: 1.0 }, &b, &unit()).unwrap();
        assert_relative_eq!(e, PI * PI / 2.0, epsilon = 1e-4);
    }

    #[test]
    fn energy_functional_rejects_unnormalized() {
        let g = Grid1D::new(-8.0, 8.0, 256).unwrap();
        let mut psi = gaussian(g, 0.0);
        psi.values.iter_mut().for_each(|z| *z *= 2.0);
        assert!(matches!(
            energy_functional(&psi, &harmonic(), &g, &unit()),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn harmonic_ground_state() {
        let g = Grid1D::new(-8.0, 8.0, 1024).unwrap();
        let r = variational_ground_state(&harmonic(), &g, &unit(), VariationalOptions::default()).unwrap();
        assert!((r.energy - 0.5).abs() < 1e-4, "{}", r.energy);
        assert!((r.energy - r.gamma).abs() < 1e-10);
        assert!(r.psi.values.iter().all(|z| z.re >= 0.0 && z.im == 0.0));
        assert!(boundary_amplitude(&r.psi) < BOUNDARY_THRESHOLD);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-13, "energy rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn box_ground_state() {
        let g = Grid1D::new(0.0, 1.0, 1024).unwrap();
        let r = variational_ground_state(&Potential::Box { length: 1.0 }, &g, &unit(), VariationalOptions::default())
            .unwrap();
        assert!((r.energy - PI * PI / 2.0).abs() < 5e-3, "{}", r.energy);
    }

    #[test]
    fn non_convergence_returns_last_iterate() {
        let g = Grid1D::new(-8.0, 8.0, 512).unwrap();
        let opts = VariationalOptions {
            max_iterations: 3,
            ..Default::default()
        };
        match variational_ground_state(&harmonic(), &g, &unit(), opts) {
            Err(SolveError::NotConverged(last)) => {
                assert_eq!(last.iterations, 3);
                assert!(last.energy > 0.5);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(variational_ground_state(&Potential::Free, &g, &unit(), VariationalOptions::default()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Grid1D::new(-6.0, 6.0, 256).unwrap();
        let ham = Hamiltonian::new(&harmonic(), &g, &unit()).unwrap();
        let psi: Vec<f64> = {
            let w = gaussian(g, 0.4);
            w.values.iter().map(|z| z.re).collect()
        };
        let grad = projected_gradient(&ham, &psi);
        let energy_of = |v: &[f64]| {
            let mut wf = Wavefunction::from_real(g, v);
            wf.normalize();
            energy_functional(&wf, &harmonic(), &g, &unit()).unwrap()
        };
        for seed in 0..5u64 {
            let dir: Vec<f64> = (0..g.n_points)
                .map(|i| {
                    let z = ((i as u64 * 2_654_435_761 + seed * 40_503) % 1000) as f64 / 1000.0 - 0.5;
                    if i == 0 || i + 1 == g.n_points { 0.0 } else { z * psi[i].abs().sqrt() }
                })
                .collect();
            let eps = 1e-5;
            let plus: Vec<f64> = psi.iter().zip(&dir).map(|(p, d)| p + eps * d).collect();
            let minus: Vec<f64> = psi.iter().zip(&dir).map(|(p, d)| p - eps * d).collect();
            let fd = (energy_of(&plus) - energy_of(&minus)) / (2.0 * eps);
            let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1e-3), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn harmonic_spectrum_and_dipoles() {
        let g = Grid1D::new(-8.0, 8.0, 1024).unwrap();
        let e = eigenpairs(&harmonic(), &g, &unit(), 8).unwrap();
        for k in 0..=5 {
            assert!((e.spectral.levels[k] - (k as f64 + 0.5)).abs() < 1e-3);
        }
        assert!((e.spectral.dipoles[1].abs() - 0.5f64.sqrt()).abs() < 1e-3);
        for k in 2..8 {
            assert!(e.spectral.dipoles[k].abs() < 1e-4, "x_{k}0 = {}", e.spectral.dipoles[k]);
        }
        for (a, sa) in e.states.iter().enumerate() {
            for (b, sb) in e.states.iter().enumerate() {
                let overlap = sa.inner(sb).re;
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((overlap - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn box_dipole() {
        let g = Grid1D::new(0.0, 1.0, 1024).unwrap();
        let e = eigenpairs(&Potential::Box { length: 1.0 }, &g, &unit(), 4).unwrap();
        assert!((e.spectral.dipoles[1].abs() - 16.0 / (9.0 * PI * PI)).abs() < 1e-3);
        assert_relative_eq!(e.spectral.levels[0], PI * PI / 2.0, epsilon = 1e-3);
    }

    #[test]
    fn eigenpair_capacity() {
        let g = Grid1D::new(-8.0, 8.0, 64).unwrap();
        assert!(matches!(
            eigenpairs(&harmonic(), &g, &unit(), 21),
            Err(Error::TooManyEigenpairs { .. })
        ));
        assert!(eigenpairs(&harmonic(), &g, &unit(), 0).is_err());
    }

    #[test]
    fn variational_matches_eigensolver() {
        let g = Grid1D::new(-5.0, 5.0, 1024).unwrap();
        let q = Potential::Quartic { k: 1.0 };
        let opts = VariationalOptions::default();
        let r = variational_ground_state(&q, &g, &unit(), opts).unwrap();
        let e = eigenpairs(&q, &g, &unit(), 1).unwrap();
        assert!((r.energy - e.spectral.levels[0]).abs() < 10.0 * opts.tol);
    }

    #[test]
    fn propagation_is_unitary_and_stationary_states_only_rotate() {
        let g = Grid1D::new(-8.0, 8.0, 1024).unwrap();
        let e = eigenpairs(&harmonic(), &g, &unit(), 1).unwrap();
        let psi0 = &e.states[0];
        let e0 = e.spectral.levels[0];
        let series = propagate(psi0, &harmonic(), &g, &unit(), 1e-3, 1000, 1).unwrap();
        for w in series.windows(2) {
            assert!((w[1].1.norm() - w[0].1.norm()).abs() < 1e-10);
        }
        let (t, last) = series.last().unwrap();
        assert_relative_eq!(*t, 1.0, epsilon = 1e-12);
        let overlap = psi0.inner(last);
        assert!((overlap.norm_sqr() - 1.0).abs() < 1e-8);
        let expected = Complex64::from_polar(1.0, -e0 * t);
        assert!((overlap - expected).norm() < 1e-4, "{overlap} vs {expected}");
    }
}
