//! Synthesis of the zero-point-field force as a stationary Gaussian process.
//!
//! One Cartesian force component has the one-sided spectral density
//! `S_F(w) = m tau hbar w^3 / pi` on `[omega_min, omega_max]`. A realization is
//! a comb of modes at interval midpoints with independent Gaussian quadratures,
//! so each sample path is a smooth deterministic function of time.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::model::PhysicalParams;

/// How mode amplitudes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Independent standard-normal quadratures: exactly Gaussian paths.
    #[default]
    Gaussian,
    /// Fixed amplitude, uniform phase: Gaussian only as `n_modes` grows.
    RandomPhase,
}

/// Deterministic seed for one member of an ensemble: a master seed plus a
/// stream index (the trajectory or realization number).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZpfSpectrum {
    params: PhysicalParams,
    n_modes: usize,
    omega_min: f64,
    phase_mode: PhaseMode,
}

impl ZpfSpectrum {
    /// The upper edge of the comb is the cutoff carried by `params`.
    pub fn new(params: PhysicalParams, n_modes: usize, omega_min: f64) -> Result<Self> {
        if n_modes < 2 {
            return Err(invalid("spectrum.n_modes", format!("need >= 2, got {n_modes}")));
        }
        if !(omega_min >= 0.0 && omega_min < params.cutoff()) {
            return Err(invalid(
                "spectrum.omega_min",
                format!("need 0 <= omega_min < omega_max = {}, got {omega_min}", params.cutoff()),
            ));
        }
        Ok(Self {
            params,
            n_modes,
            omega_min,
            phase_mode: PhaseMode::Gaussian,
        })
    }

    pub fn with_phase_mode(mut self, mode: PhaseMode) -> Self {
        self.phase_mode = mode;
        self
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }
    pub fn omega_max(&self) -> f64 {
        self.params.cutoff()
    }
    pub fn phase_mode(&self) -> PhaseMode {
        self.phase_mode
    }

    pub fn spacing(&self) -> f64 {
        (self.omega_max() - self.omega_min) / self.n_modes as f64
    }

    /// Midpoint of the k-th frequency bin.
    pub fn frequency(&self, k: usize) -> f64 {
        self.omega_min + (k as f64 + 0.5) * self.spacing()
    }

    /// One-sided force spectral density; zero outside the band.
    pub fn density(&self, omega: f64) -> f64 {
        if omega < self.omega_min || omega > self.omega_max() {
            return 0.0;
        }
        let p = &self.params;
        p.mass() * p.tau() * p.hbar() * omega.powi(3) / PI
    }

    /// Period of the comb, `2 pi / d_omega`. Sample paths repeat after it, so
    /// simulations must end before it.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }
}

/// One sample path `F(t) = sum_k w_k (a_k cos w_k t + b_k sin w_k t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub frequencies: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FieldRealization {
    /// Draws a realization; bit-identical for identical `(spectrum, seed)`.
    pub fn sample(spectrum: &ZpfSpectrum, seed: StreamSeed) -> Self {
        let n = spectrum.n_modes();
        let dw = spectrum.spacing();
        let mut rng = seed.rng();
        let mut frequencies = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for k in 0..n {
            let w = spectrum.frequency(k);
            frequencies.push(w);
            weights.push((spectrum.density(w) * dw).sqrt());
            match spectrum.phase_mode() {
                PhaseMode::Gaussian => {
                    a.push(rng.sample::<f64, _>(StandardNormal));
                    b.push(rng.sample::<f64, _>(StandardNormal));
                }
                PhaseMode::RandomPhase => {
                    let phi = rng.gen::<f64>() * 2.0 * PI;
                    let (s, c) = phi.sin_cos();
                    a.push(std::f64::consts::SQRT_2 * c);
                    b.push(-std::f64::consts::SQRT_2 * s);
                }
            }
        }
        Self {
            frequencies,
            a,
            b,
            weights,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    /// Direct mode sum, `O(n_modes)`.
    pub fn force_at(&self, t: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.weights)
            .zip(self.a.iter().zip(&self.b))
            .map(|((w, wt), (a, b))| {
                let (s, c) = (w * t).sin_cos();
                wt * (a * c + b * s)
            })
            .sum()
    }
}

/// Evaluates whole sample paths on the uniform time grid `t_n = n * tick`
/// with one inverse FFT, where `tick = T_rec / fft_len` makes the comb
/// commensurate with the FFT bins.
pub struct FieldSampler {
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    tick: f64,
    base_phase: f64,
    n_samples: usize,
}

impl std::fmt::Debug for FieldSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSampler")
            .field("fft_len", &self.fft_len)
            .field("tick", &self.tick)
            .field("n_samples", &self.n_samples)
            .finish()
    }
}

/// Smallest 5-smooth integer `>= n`.
fn smooth_at_least(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

impl FieldSampler {
    /// Plans a sampler whose tick does not exceed `max_tick` and which covers
    /// `[0, t_end]`. `t_end` must precede the recurrence time.
    pub fn new(spectrum: &ZpfSpectrum, max_tick: f64, t_end: f64) -> Result<Self> {
        if !(max_tick > 0.0) {
            return Err(invalid("tick", "must be > 0"));
        }
        let period = spectrum.recurrence_time();
        if t_end >= period {
            return Err(invalid(
                "t_end",
                format!("{t_end} >= recurrence time {period} of the mode comb"),
            ));
        }
        let needed = (period / max_tick).ceil() as usize;
        let fft_len = smooth_at_least(needed.max(spectrum.n_modes()));
        let tick = period / fft_len as f64;
        let n_samples = ((t_end / tick).ceil() as usize + 1).min(fft_len);
        let fft = FftPlanner::new().plan_fft_inverse(fft_len);
        Ok(Self {
            fft,
            fft_len,
            tick,
            base_phase: (spectrum.omega_min() + 0.5 * spectrum.spacing()) * tick,
            n_samples,
        })
    }

    pub fn tick(&self) -> f64 {
        self.tick
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// `F(n * tick)` for `n < n_samples`. Exact up to FFT round-off.
    pub fn sample_path(&self, field: &FieldRealization) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (k, ((w, a), b)) in field.weights.iter().zip(&field.a).zip(&field.b).enumerate() {
            buf[k % self.fft_len] += Complex64::new(w * a, -w * b);
        }
        self.fft.process(&mut buf);
        buf.iter()
            .take(self.n_samples)
            .enumerate()
            .map(|(n, z)| {
                let (s, c) = (self.base_phase * n as f64).sin_cos();
                z.re * c - z.im * s
            })
            .collect()
    }
}

/// Closed form of `C_F(t) = (m tau hbar / pi) * int w^3 cos(w t) dw` over the band.
pub fn covariance_analytic(spectrum: &ZpfSpectrum, t: f64) -> f64 {
    let p = spectrum.params();
    let pref = p.mass() * p.tau() * p.hbar() / PI;
    if pref == 0.0 {
        return 0.0;
    }
    pref * (cubic_cosine_moment(spectrum.omega_max(), t) - cubic_cosine_moment(spectrum.omega_min(), t))
}

/// `int_0^w s^3 cos(s t) ds`.
fn cubic_cosine_moment(w: f64, t: f64) -> f64 {
    let z = w * t;
    if z.abs() < 2.0 {
        // Even power series; converges fast for |z| < 2.
        let w4 = w.powi(4);
        let mut term = 1.0;
        let mut sum = 0.25;
        for n in 1..40 {
            let k = 2 * n;
            term *= -(z * z) / ((k - 1) * k) as f64;
            let add = term / (k + 4) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        w4 * sum
    } else {
        let (s, c) = z.sin_cos();
        let t2 = t * t;
        let t4 = t2 * t2;
        w.powi(3) * s / t + 3.0 * w * w * c / t2 - 6.0 * w * s / (t2 * t) - 6.0 * (c - 1.0) / t4
    }
}

/// Sampling window for empirical covariances: `n_points` start times from
/// `start` with the given spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub spacing: f64,
    pub n_points: usize,
}

impl Default for TimeWindow {
    fn default() -> Self {
        Self {
            start: 0.0,
            spacing: 0.37,
            n_points: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariancePoint {
    pub lag: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
}

impl CovariancePoint {
    /// `|empirical - analytic|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        let diff = (self.empirical - self.analytic).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

/// Monte Carlo estimate of `<F(s) F(s + lag)>` over realizations and window
/// start times `s`. The standard error comes from the spread of the
/// per-realization window averages.
pub fn empirical_covariance(
    spectrum: &ZpfSpectrum,
    n_realizations: usize,
    lags: &[f64],
    master_seed: u64,
    window: TimeWindow,
    exec: Execution,
) -> Result<Vec<CovariancePoint>> {
    if n_realizations < 100 {
        return Err(invalid(
            "n_realizations",
            format!("need >= 100, got {n_realizations}"),
        ));
    }
    if window.n_points == 0 {
        return Err(invalid("window.n_points", "must be > 0"));
    }
    let starts: Vec<f64> = (0..window.n_points)
        .map(|i| window.start + i as f64 * window.spacing)
        .collect();
    // Every realization is evaluated at the same times, so the weighted
    // cosines and sines are tabulated once: row 0 holds the window starts,
    // row j + 1 the starts shifted by lag j.
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(lags.iter().copied())
        .flat_map(|lag| starts.iter().map(move |s| s + lag))
        .collect();
    let n_modes = spectrum.n_modes();
    let dw = spectrum.spacing();
    let weights: Vec<f64> = (0..n_modes)
        .map(|k| (spectrum.density(spectrum.frequency(k)) * dw).sqrt())
        .collect();
    let table: Vec<(Vec<f64>, Vec<f64>)> = times
        .iter()
        .map(|&t| {
            (0..n_modes)
                .map(|k| {
                    let (s, c) = (spectrum.frequency(k) * t).sin_cos();
                    (weights[k] * c, weights[k] * s)
                })
                .unzip()
        })
        .collect();
    let np = window.n_points;
    let per_realization: Vec<Vec<f64>> = exec.map(n_realizations, |r| {
        let field = FieldRealization::sample(spectrum, StreamSeed::new(master_seed, r as u64));
        let values: Vec<f64> = table
            .iter()
            .map(|(c, s)| {
                c.iter()
                    .zip(s)
                    .zip(field.a.iter().zip(&field.b))
                    .map(|((c, s), (a, b))| a * c + b * s)
                    .sum()
            })
            .collect();
        (0..lags.len())
            .map(|j| {
                let shifted = &values[(j + 1) * np..(j + 2) * np];
                values[..np].iter().zip(shifted).map(|(f0, f1)| f0 * f1).sum::<f64>() / np as f64
            })
            .collect()
    });
    let n = n_realizations as f64;
    Ok(lags
        .iter()
        .enumerate()
        .map(|(j, &lag)| {
            let mean = per_realization.iter().map(|v| v[j]).sum::<f64>() / n;
            let var = per_realization
                .iter()
                .map(|v| (v[j] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            CovariancePoint {
                lag,
                analytic: covariance_analytic(spectrum, lag),
                empirical: mean,
                stderr: (var / n).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spectrum(tau: f64, cutoff: f64, n: usize) -> ZpfSpectrum {
        let p = PhysicalParams::new(1.0, 1.0, tau, cutoff).unwrap();
        ZpfSpectrum::new(p, n, 0.0).unwrap()
    }

    #[test]
    fn rejects_invalid_spectra() {
        let p = PhysicalParams::default();
        assert!(ZpfSpectrum::new(p, 0, 0.0).is_err());
        assert!(ZpfSpectrum::new(p, 1, 0.0).is_err());
        assert!(ZpfSpectrum::new(p, 10, p.cutoff()).is_err());
        assert!(ZpfSpectrum::new(p, 10, -1.0).is_err());
    }

    #[test]
    fn comb_is_midpoint_placed() {
        let s = spectrum(1e-3, 20.0, 4);
        assert_relative_eq!(s.spacing(), 5.0);
        assert_relative_eq!(s.frequency(0), 2.5);
        assert_relative_eq!(s.frequency(3), 17.5);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = spectrum(1e-3, 20.0, 64);
        let a = FieldRealization::sample(&s, StreamSeed::new(7, 3));
        let b = FieldRealization::sample(&s, StreamSeed::new(7, 3));
        assert_eq!(a, b);
        let c = FieldRealization::sample(&s, StreamSeed::new(7, 4));
        assert_ne!(a.a, c.a);
    }

    #[test]
    fn zero_tau_gives_zero_field() {
        let s = spectrum(0.0, 20.0, 64);
        let f = FieldRealization::sample(&s, StreamSeed::new(1, 0));
        assert!(f.weights.iter().all(|&w| w == 0.0));
        for t in [0.0, 0.3, 17.0] {
            assert_eq!(f.force_at(t), 0.0);
        }
        assert_eq!(covariance_analytic(&s, 0.4), 0.0);
    }

    #[test]
    fn force_at_examples() {
        let all_ones = FieldRealization {
            frequencies: vec![1.0, 2.0, 3.0],
            a: vec![1.0; 3],
            b: vec![0.0; 3],
            weights: vec![0.5, 1.5, 2.0],
        };
        assert_relative_eq!(all_ones.force_at(0.0), 4.0);
        let single = FieldRealization {
            frequencies: vec![3.0],
            a: vec![0.0],
            b: vec![1.0],
            weights: vec![2.0],
        };
        assert_relative_eq!(single.force_at(PI / 6.0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn covariance_at_zero_lag() {
        let p = PhysicalParams::new(1.0, 1.0, 1e-3, 20.0).unwrap();
        let s = ZpfSpectrum::new(p, 100, 2.0).unwrap();
        let expected = 1e-3 * (20f64.powi(4) - 2f64.powi(4)) / (4.0 * PI);
        assert_relative_eq!(covariance_analytic(&s, 0.0), expected, max_relative = 1e-14);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        // The two branches of the antiderivative meet at w t = 2.
        let w = 20.0;
        let t = 2.0 / w;
        let below = cubic_cosine_moment(w, t * (1.0 - 1e-12));
        let above = cubic_cosine_moment(w, t * (1.0 + 1e-12));
        assert_relative_eq!(below, above, max_relative = 1e-9);
    }

    #[test]
    fn fft_sampler_matches_direct_sum() {
        let s = spectrum(1e-2, 20.0, 500);
        let field = FieldRealization::sample(&s, StreamSeed::new(11, 0));
        let sampler = FieldSampler::new(&s, 0.01, 100.0).unwrap();
        assert!(sampler.tick() <= 0.01);
        let path = sampler.sample_path(&field);
        assert_eq!(path.len(), sampler.n_samples());
        let scale = covariance_analytic(&s, 0.0).sqrt();
        for n in [0, 1, 17, 999, path.len() - 1] {
            let t = n as f64 * sampler.tick();
            assert!((path[n] - field.force_at(t)).abs() < 1e-10 * scale, "n = {n}");
        }
    }

    #[test]
    fn fft_sampler_handles_offset_band() {
        let p = PhysicalParams::new(1.0, 1.0, 1e-2, 20.0).unwrap();
        let s = ZpfSpectrum::new(p, 300, 3.0).unwrap();
        let field = FieldRealization::sample(&s, StreamSeed::new(5, 2));
        let sampler = FieldSampler::new(&s, 0.02, 50.0).unwrap();
        let path = sampler.sample_path(&field);
        for n in [3, 400, path.len() - 1] {
            let t = n as f64 * sampler.tick();
            assert!((path[n] - field.force_at(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn sampler_rejects_recurrence() {
        let s = spectrum(1e-3, 20.0, 100);
        assert!(FieldSampler::new(&s, 0.01, s.recurrence_time()).is_err());
    }

    #[test]
    fn random_phase_mode_has_unit_power_per_mode() {
        let s = spectrum(1e-3, 20.0, 32).with_phase_mode(PhaseMode::RandomPhase);
        let f = FieldRealization::sample(&s, StreamSeed::new(3, 1));
        for (a, b) in f.a.iter().zip(&f.b) {
            assert_relative_eq!(a * a + b * b, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn empirical_covariance_rejects_small_ensembles() {
        let s = spectrum(1e-3, 20.0, 32);
        assert!(empirical_covariance(&s, 50, &[0.0], 1, TimeWindow::default(), Execution::Sequential).is_err());
    }
}
