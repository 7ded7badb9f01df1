//! Closed-form and quadrature predictions for the damped, driven harmonic
//! oscillator, used to check ensemble runs.
//!
//! With order-reduced radiation reaction the harmonic equation of motion is
//! linear, `m x'' = -m w0^2 x - m g x' + F(t)` with `g = tau w0^2`, so
//! ensemble moments follow from the response function alone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{PhysicalParams, Potential};
use crate::quad;
use crate::zpf::ZpfSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicMoments {
    /// `<x^2>`
    pub x2: f64,
    /// `<p^2>`
    pub p2: f64,
}

impl HarmonicMoments {
    pub fn energy(&self, params: &PhysicalParams, omega0: f64) -> f64 {
        let m = params.mass();
        0.5 * self.p2 / m + 0.5 * m * omega0 * omega0 * self.x2
    }

    /// Mean dissipated power `-m g <v^2>`.
    pub fn dissipated_power(&self, params: &PhysicalParams, omega0: f64) -> f64 {
        let m = params.mass();
        -params.tau() * omega0 * omega0 * self.p2 / m
    }
}

fn omega0_of(potential: &Potential) -> Result<f64> {
    match *potential {
        Potential::Harmonic { omega0 } => Ok(omega0),
        _ => Err(invalid("potential", "oracle needs a harmonic potential")),
    }
}

/// Position and velocity transfer functions at drive frequency `w` for an
/// oscillator started at rest at time zero and observed at time `t`
/// (`t = inf` gives the stationary response).
fn transfer(params: &PhysicalParams, omega0: f64, w: f64, t: f64) -> (Complex64, Complex64) {
    let m = params.mass();
    let g = params.tau() * omega0 * omega0;
    let w1 = (omega0 * omega0 - 0.25 * g * g).sqrt();
    let alpha = Complex64::new(-0.5 * g, w1);
    let e = |beta: Complex64| {
        let d = beta - Complex64::new(0.0, w);
        if t.is_infinite() {
            -1.0 / d
        } else {
            ((d * t).exp() - 1.0) / d
        }
    };
    let pre = 1.0 / Complex64::new(0.0, 2.0 * m * w1);
    let (ea, eb) = (e(alpha), e(alpha.conj()));
    (pre * (ea - eb), pre * (alpha * ea - alpha.conj() * eb))
}

/// Exact ensemble moments at time `t` for the discrete mode comb actually
/// sampled by the field synthesizer, starting from `x = p = 0`.
pub fn comb_moments(params: &PhysicalParams, potential: &Potential, spectrum: &ZpfSpectrum, t: f64) -> Result<HarmonicMoments> {
    let omega0 = omega0_of(potential)?;
    let dw = spectrum.spacing();
    let m = params.mass();
    let (mut x2, mut p2) = (0.0, 0.0);
    for k in 0..spectrum.n_modes() {
        let w = spectrum.frequency(k);
        let weight = spectrum.density(w) * dw;
        let (hx, hv) = transfer(params, omega0, w, t);
        x2 += weight * hx.norm_sqr();
        p2 += weight * (m * hv).norm_sqr();
    }
    Ok(HarmonicMoments { x2, p2 })
}

/// Stationary moments of the continuum spectrum, `int S_F |chi|^2 dw`, by
/// adaptive quadrature.
pub fn stationary_moments(params: &PhysicalParams, potential: &Potential, spectrum: &ZpfSpectrum) -> Result<HarmonicMoments> {
    let omega0 = omega0_of(potential)?;
    let m = params.mass();
    let g = params.tau() * omega0 * omega0;
    let (a, b) = (spectrum.omega_min(), spectrum.omega_max());
    let width = g.max(1e-12);
    let breaks: Vec<f64> = [-1000.0, -100.0, -10.0, -1.0, 0.0, 1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|k| omega0 + k * width)
        .collect();
    let x2 = quad::integrate_with_breaks(
        |w| spectrum.density(w) * transfer(params, omega0, w, f64::INFINITY).0.norm_sqr(),
        a,
        b,
        &breaks,
        1e-14,
        1e-10,
    );
    let p2 = quad::integrate_with_breaks(
        |w| spectrum.density(w) * (m * transfer(params, omega0, w, f64::INFINITY).1).norm_sqr(),
        a,
        b,
        &breaks,
        1e-14,
        1e-10,
    );
    Ok(HarmonicMoments { x2, p2 })
}

/// Average of [`comb_moments`] over the given observation times.
pub fn window_average(
    params: &PhysicalParams,
    potential: &Potential,
    spectrum: &ZpfSpectrum,
    times: &[f64],
) -> Result<HarmonicMoments> {
    if times.is_empty() {
        return Err(invalid("times", "empty window"));
    }
    let mut acc = HarmonicMoments { x2: 0.0, p2: 0.0 };
    for &t in times {
        let m = comb_moments(params, potential, spectrum, t)?;
        acc.x2 += m.x2;
        acc.p2 += m.p2;
    }
    let n = times.len() as f64;
    Ok(HarmonicMoments {
        x2: acc.x2 / n,
        p2: acc.p2 / n,
    })
}
