use sedlab::exec::Execution;
use sedlab::model::PhysicalParams;
use sedlab::quad;
use sedlab::zpf::{
    covariance_analytic, empirical_covariance, FieldRealization, PhaseMode, StreamSeed, TimeWindow, ZpfSpectrum,
};

const SEED: u64 = 7;

fn spectrum(tau: f64) -> ZpfSpectrum {
    let p = PhysicalParams::default().with_tau(tau).unwrap();
    ZpfSpectrum::new(p, 4000, 0.0).unwrap()
}

#[test]
fn covariance_matches_closed_form_at_every_lag() {
    let s = spectrum(1e-3);
    let lags = [0.0, 0.5, 1.0, 2.0];
    let pts = empirical_covariance(&s, 10_000, &lags, SEED, TimeWindow::default(), Execution::Parallel).unwrap();
    for p in &pts {
        assert!(p.z_score() < 3.0, "lag {}: {p:?}", p.lag);
    }
    // Zero-lag variance is m tau hbar W^4 / 4 pi.
    assert!((pts[0].analytic - 1e-3 * 20f64.powi(4) / (4.0 * std::f64::consts::PI)).abs() < 1e-12);
}

#[test]
fn closed_form_matches_quadrature() {
    let s = spectrum(1e-3);
    for t in [0.0, 0.05, 0.1, 0.3, 1.0, 2.5, 7.0] {
        let (q, _) = quad::integrate(|w| s.density(w) * (w * t).cos(), 0.0, 20.0, 1e-15, 1e-13);
        let c = covariance_analytic(&s, t);
        assert!((c - q).abs() <= 1e-10 * q.abs().max(1e-3), "t = {t}: {c} vs {q}");
    }
}

#[test]
fn covariance_is_stationary() {
    let s = spectrum(1e-3);
    let lags = [0.0, 0.5, 1.0];
    let early = TimeWindow::default();
    let late = TimeWindow {
        start: 250.0,
        ..early
    };
    let a = empirical_covariance(&s, 4000, &lags, SEED, early, Execution::Parallel).unwrap();
    let b = empirical_covariance(&s, 4000, &lags, SEED + 1, late, Execution::Parallel).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let combined = (x.stderr.powi(2) + y.stderr.powi(2)).sqrt();
        assert!((x.empirical - y.empirical).abs() < 3.0 * combined, "{x:?} vs {y:?}");
    }
}

/// Excess kurtosis of `F(t)` over realizations, pooling eight nearly
/// independent sample times per realization.
fn excess_kurtosis(mode: PhaseMode, n_modes: usize) -> f64 {
    let s = ZpfSpectrum::new(PhysicalParams::default(), n_modes, 0.0)
        .unwrap()
        .with_phase_mode(mode);
    let samples: Vec<f64> = (0..10_000u64)
        .flat_map(|r| {
            let f = FieldRealization::sample(&s, StreamSeed::new(SEED, r));
            (0..8).map(move |i| f.force_at(1.3 * i as f64))
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[test]
fn marginal_is_gaussian() {
    let k = excess_kurtosis(PhaseMode::Gaussian, 400);
    assert!(k.abs() < 0.1, "excess kurtosis {k}");
}

#[test]
fn random_phase_mode_is_sub_gaussian_at_few_modes() {
    // Fixed-amplitude modes give a platykurtic sum when only a few carry the power.
    let k = excess_kurtosis(PhaseMode::RandomPhase, 3);
    assert!(k < -0.3, "excess kurtosis {k}");
}

#[test]
fn scaling_tau_scales_covariance() {
    let lags = [0.0, 0.5, 1.0];
    let a = empirical_covariance(&spectrum(1e-3), 200, &lags, SEED, TimeWindow::default(), Execution::Sequential).unwrap();
    let b = empirical_covariance(&spectrum(4e-3), 200, &lags, SEED, TimeWindow::default(), Execution::Sequential).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y.empirical - 4.0 * x.empirical).abs() <= 1e-12 * y.empirical.abs());
    }
}

#[test]
fn quadratures_have_unit_variance() {
    let s = spectrum(1e-3);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut n = 0.0;
    for r in 0..500u64 {
        let f = FieldRealization::sample(&s, StreamSeed::new(SEED, r));
        for a in f.a.iter().chain(&f.b) {
            sum += a;
            sum2 += a * a;
            n += 1.0;
        }
    }
    let mean = sum / n;
    let var = sum2 / n - mean * mean;
    assert!(mean.abs() < 4.0 / n.sqrt());
    assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
}

#[test]
fn execution_mode_does_not_change_results() {
    let s = spectrum(1e-3);
    let lags = [0.0, 1.0];
    let a = empirical_covariance(&s, 300, &lags, SEED, TimeWindow::default(), Execution::Sequential).unwrap();
    let b = empirical_covariance(&s, 300, &lags, SEED, TimeWindow::default(), Execution::Parallel).unwrap();
    assert_eq!(a, b);
}
