//! Ground-state balance between radiative dissipation and field-induced
//! diffusion, the resulting value of `beta`, and the grid commutator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hydro::Wavefunction;
use crate::model::{PhysicalParams, Potential};
use crate::quad;
use crate::schrodinger::{boundary_amplitude, BOUNDARY_THRESHOLD};

/// Levels `xi_k`, transition frequencies `omega_k0` and dipoles `x_k0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub levels: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub dipoles: Vec<f64>,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Empty("spectrum"));
        }
        if self.frequencies.len() != self.levels.len() || self.dipoles.len() != self.levels.len() {
            return Err(invalid("spectrum", "levels, frequencies and dipoles differ in length"));
        }
        Ok(())
    }

    /// `(xi_k - xi_0) omega_k0^3 |x_k0|^2` for every k.
    pub fn weights(&self) -> Result<Vec<f64>> {
        self.check()?;
        let xi0 = self.levels[0];
        Ok(self
            .levels
            .iter()
            .zip(&self.frequencies)
            .zip(&self.dipoles)
            .map(|((xi, w), x)| (xi - xi0) * w.powi(3) * x * x)
            .collect())
    }
}

/// Per-k dissipation terms `-i beta (xi_k - xi_0) omega_k0^3 |x_k0|^2`.
pub fn lhs_terms(spec: &SpectralData, beta: Complex64) -> Result<Vec<Complex64>> {
    let factor = Complex64::new(0.0, -1.0) * beta;
    Ok(spec.weights()?.into_iter().map(|w| factor * w).collect())
}

/// Per-k diffusion terms `hbar beta^2 (xi_k - xi_0) omega_k0^3 |x_k0|^2`.
pub fn rhs_terms(spec: &SpectralData, beta: Complex64, params: &PhysicalParams) -> Result<Vec<Complex64>> {
    let factor = params.hbar() * beta * beta;
    Ok(spec.weights()?.into_iter().map(|w| factor * w).collect())
}

pub fn lhs_dissipation(spec: &SpectralData, beta: Complex64) -> Result<Complex64> {
    Ok(lhs_terms(spec, beta)?.into_iter().sum())
}

pub fn rhs_diffusion(spec: &SpectralData, beta: Complex64, params: &PhysicalParams) -> Result<Complex64> {
    Ok(rhs_terms(spec, beta, params)?.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub beta: Complex64,
    pub lhs_terms: Vec<Complex64>,
    pub rhs_terms: Vec<Complex64>,
    /// `lhs_k / rhs_k` at the root, for every k with a nonzero term.
    pub per_frequency_ratios: Vec<Complex64>,
    pub lhs_total: Complex64,
    pub rhs_total: Complex64,
}

impl BalanceReport {
    /// Largest `|ratio - 1|`.
    pub fn worst_ratio_error(&self) -> f64 {
        self.per_frequency_ratios
            .iter()
            .map(|r| (r - 1.0).norm())
            .fold(0.0, f64::max)
    }
}

/// Nonzero root of `-i beta S = hbar beta^2 S`.
///
/// Both sides are linear in the common sum `S`, so the root is the ratio of
/// the dissipation coefficient to the diffusion coefficient.
pub fn solve_beta(spec: &SpectralData, params: &PhysicalParams) -> Result<BalanceReport> {
    let weights = spec.weights()?;
    let lhs_coeff: Complex64 = lhs_terms(spec, Complex64::new(1.0, 0.0))?.into_iter().sum();
    let rhs_coeff: Complex64 = rhs_terms(spec, Complex64::new(1.0, 0.0), params)?.into_iter().sum();
    if weights.iter().all(|w| *w == 0.0) || rhs_coeff.norm() == 0.0 {
        return Err(invalid("spectrum", "every dissipation term vanishes"));
    }
    let beta = lhs_coeff / rhs_coeff;
    let lhs = lhs_terms(spec, beta)?;
    let rhs = rhs_terms(spec, beta, params)?;
    let per_frequency_ratios = lhs
        .iter()
        .zip(&rhs)
        .filter(|(_, r)| r.norm() > 0.0)
        .map(|(l, r)| l / r)
        .collect();
    Ok(BalanceReport {
        beta,
        lhs_total: lhs.iter().sum(),
        rhs_total: rhs.iter().sum(),
        lhs_terms: lhs,
        rhs_terms: rhs,
        per_frequency_ratios,
    })
}

/// `<psi|[x, p]|psi> / <psi|psi>` with `p = -i hbar` times the centered
/// difference (zero values beyond the grid ends).
pub fn commutator_check(psi: &Wavefunction, params: &PhysicalParams) -> Result<Complex64> {
    let amplitude = boundary_amplitude(psi);
    if amplitude > BOUNDARY_THRESHOLD {
        return Err(Error::BoundaryAmplitude {
            amplitude,
            threshold: BOUNDARY_THRESHOLD,
        });
    }
    let g = psi.grid;
    let h = g.spacing();
    let n = g.n_points;
    let zero = Complex64::new(0.0, 0.0);
    let at = |v: &[Complex64], i: isize| -> Complex64 {
        if i < 0 || i as usize >= n {
            zero
        } else {
            v[i as usize]
        }
    };
    let p_op = |v: &[Complex64]| -> Vec<Complex64> {
        (0..n as isize)
            .map(|i| Complex64::new(0.0, -params.hbar()) * (at(v, i + 1) - at(v, i - 1)) / (2.0 * h))
            .collect()
    };
    let xs = g.points();
    let p_psi = p_op(&psi.values);
    let x_psi: Vec<Complex64> = psi.values.iter().zip(&xs).map(|(z, x)| z * x).collect();
    let p_x_psi = p_op(&x_psi);
    let comm: Vec<Complex64> = (0..n).map(|i| xs[i] * p_psi[i] - p_x_psi[i]).collect();
    let value = psi.inner(&Wavefunction::new(g, comm));
    Ok(value / psi.norm())
}

/// Classical response `dx(t)/dp(t')` for a harmonic potential,
/// `sin(omega0 (t - t')) / (m omega0)`.
pub fn classical_response(potential: &Potential, params: &PhysicalParams, t_lag: f64) -> Result<f64> {
    match *potential {
        Potential::Harmonic { omega0 } => {
            potential.validate()?;
            Ok((omega0 * t_lag).sin() / (params.mass() * omega0))
        }
        _ => Err(invalid("potential", "classical response is only closed-form for the harmonic case")),
    }
}

/// Finite-window evaluation of the diffusion side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryDiagnostic {
    pub quadrature: Complex64,
    pub closed_form: Complex64,
    pub relative_error: f64,
}

/// Evaluates the diffusion side with the memory integral damped by
/// `exp(-eta_k s)` and the frequency integral cut at `cutoff_ratio * omega_k0`,
/// with `eta_k = eta_ratio * omega_k0`.
///
/// For each k the time integral of `cos(omega s) cos(omega_k0 s)` becomes a
/// pair of Lorentzians of width `eta_k`; the frequency integral of
/// `omega^3 / pi` against them tends to `omega_k0^3 / 2` as the damping goes to
/// zero. Each term is normalized by that limit times two so that the closed
/// form is recovered exactly in the limit. What remains measures the
/// finite-window and finite-cutoff distortion.
pub fn memory_kernel_diagnostic(
    spec: &SpectralData,
    beta: Complex64,
    params: &PhysicalParams,
    eta_ratio: f64,
    cutoff_ratio: f64,
) -> Result<MemoryDiagnostic> {
    if !(eta_ratio > 0.0) || !(cutoff_ratio > 1.0) {
        return Err(invalid("memory kernel", "need eta_ratio > 0 and cutoff_ratio > 1"));
    }
    let weights = spec.weights()?;
    let factor = params.hbar() * beta * beta;
    let mut quadrature = Complex64::new(0.0, 0.0);
    let mut closed = Complex64::new(0.0, 0.0);
    for ((w, &omega_k), _) in weights.iter().zip(&spec.frequencies).zip(&spec.dipoles) {
        if *w == 0.0 || omega_k <= 0.0 {
            continue;
        }
        let eta = eta_ratio * omega_k;
        let lorentz = |om: f64| {
            0.5 * (eta / (eta * eta + (om - omega_k).powi(2)) + eta / (eta * eta + (om + omega_k).powi(2)))
        };
        let breaks: Vec<f64> = [-100.0, -10.0, -1.0, 0.0, 1.0, 10.0, 100.0]
            .iter()
            .map(|k| omega_k + k * eta)
            .collect();
        let kernel = quad::integrate_with_breaks(
            |om| om.powi(3) * lorentz(om) / std::f64::consts::PI,
            0.0,
            cutoff_ratio * omega_k,
            &breaks,
            1e-14 * omega_k.powi(3),
            1e-12,
        );
        let ratio = 2.0 * kernel / omega_k.powi(3);
        quadrature += factor * w * ratio;
        closed += factor * w;
    }
    if closed.norm() == 0.0 {
        return Err(invalid("spectrum", "every diffusion term vanishes"));
    }
    Ok(MemoryDiagnostic {
        quadrature,
        closed_form: closed,
        relative_error: ((quadrature - closed) / closed).norm(),
    })
}
