//! Experiment configuration: per-kind defaults, JSON overlay and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sedlab::dynamics::{InitialDistribution, IntegrationConfig};
use sedlab::grid::Grid1D;
use sedlab::model::{PhysicalParams, Potential};
use sedlab::schrodinger::{VariationalOptions, MAX_EIGENPAIRS};
use sedlab::stats::Bandwidth;
use sedlab::zpf::{PhaseMode, TimeWindow, ZpfSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Covariance,
    Relax,
    Stats,
    Hydro,
    Solve,
    Balance,
    Compare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Covariance => "covariance",
            ExperimentKind::Relax => "relax",
            ExperimentKind::Stats => "stats",
            ExperimentKind::Hydro => "hydro",
            ExperimentKind::Solve => "solve",
            ExperimentKind::Balance => "balance",
            ExperimentKind::Compare => "compare",
        }
    }

    /// Kinds that integrate a trajectory ensemble.
    pub fn is_ensemble(self) -> bool {
        matches!(self, ExperimentKind::Relax | ExperimentKind::Stats | ExperimentKind::Compare)
    }
}

/// Physical parameters as written in the file; checked by [`validate_config`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mass: f64,
    pub hbar: f64,
    pub tau: f64,
    pub cutoff: f64,
}

impl ParamsConfig {
    pub fn build(&self) -> sedlab::Result<PhysicalParams> {
        PhysicalParams::new(self.mass, self.hbar, self.tau, self.cutoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub n_modes: usize,
    pub omega_min: f64,
    pub phase_mode: PhaseMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub n_trajectories: usize,
    pub transient_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSettings {
    pub realizations: usize,
    pub lags: Vec<f64>,
    pub window: TimeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumSettings {
    /// Crank–Nicolson step for the hydro experiment.
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    /// Initial displacement of the coherent state.
    pub displacement: f64,
    /// Grid sizes for the momentum-identity convergence table.
    pub convergence_points: Vec<usize>,
    /// Eigenpairs used by the balance experiment.
    pub n_levels: usize,
    pub variational: VariationalOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub params: ParamsConfig,
    pub potential: Potential,
    pub spectrum: SpectrumConfig,
    pub integration: IntegrationSettings,
    pub initial: InitialDistribution,
    pub grid: Grid1D,
    pub bandwidth: Bandwidth,
    pub covariance: CovarianceSettings,
    pub quantum: QuantumSettings,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Complete default configuration for one experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            params: ParamsConfig {
                mass: 1.0,
                hbar: 1.0,
                tau: 1e-3,
                cutoff: 20.0,
            },
            potential: Potential::Harmonic { omega0: 1.0 },
            spectrum: SpectrumConfig {
                n_modes: 16_384,
                omega_min: 0.0,
                phase_mode: PhaseMode::Gaussian,
            },
            integration: IntegrationSettings {
                dt: 0.02,
                t_end: 5000.0,
                record_stride: 2500,
                n_trajectories: 10_000,
                transient_fraction: 0.6,
            },
            initial: InitialDistribution::Point { x0: 0.0, p0: 0.0 },
            grid: Grid1D {
                x_min: -6.0,
                x_max: 6.0,
                n_points: 481,
            },
            bandwidth: Bandwidth::Silverman,
            covariance: CovarianceSettings {
                realizations: 10_000,
                lags: vec![0.0, 0.5, 1.0, 2.0],
                window: TimeWindow::default(),
            },
            quantum: QuantumSettings {
                dt: 1e-3,
                steps: 400,
                stride: 20,
                displacement: 1.0,
                convergence_points: vec![512, 1024, 2048, 4096],
                n_levels: 10,
                variational: VariationalOptions::default(),
            },
            output_dir: PathBuf::from("out").join(kind.name()),
            master_seed: 20_240_901,
        };
        match kind {
            ExperimentKind::Covariance => c.spectrum.n_modes = 4000,
            ExperimentKind::Relax => {
                c.params.tau = 1e-2;
                c.spectrum.n_modes = 4096;
                c.integration = IntegrationSettings {
                    dt: 0.02,
                    t_end: 1000.0,
                    record_stride: 100,
                    n_trajectories: 2000,
                    transient_fraction: 0.7,
                };
                c.initial = InitialDistribution::Point { x0: 3.0, p0: 0.0 };
            }
            ExperimentKind::Hydro => {
                c.grid = Grid1D {
                    x_min: -10.0,
                    x_max: 10.0,
                    n_points: 2048,
                }
            }
            ExperimentKind::Solve => {
                c.grid = Grid1D {
                    x_min: -8.0,
                    x_max: 8.0,
                    n_points: 2048,
                }
            }
            ExperimentKind::Balance => {
                c.grid = Grid1D {
                    x_min: -8.0,
                    x_max: 8.0,
                    n_points: 4096,
                }
            }
            ExperimentKind::Stats | ExperimentKind::Compare => {}
        }
        c
    }

    /// Defaults for `kind` overlaid with the JSON object `text`. Objects merge
    /// key by key; any other value replaces the default.
    pub fn from_json(kind: ExperimentKind, text: &str) -> anyhow::Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if let Some(k) = user.get("kind") {
            let named: ExperimentKind = serde_json::from_value(k.clone())?;
            anyhow::ensure!(named == kind, "config is for `{}` but `{}` was requested", named.name(), kind.name());
        }
        let mut base = serde_json::to_value(Self::defaults(kind))?;
        merge(&mut base, user);
        Ok(serde_json::from_value(base)?)
    }

    pub fn integration_config(&self) -> IntegrationConfig {
        let s = self.integration;
        IntegrationConfig {
            dt: s.dt,
            t_end: s.t_end,
            record_stride: s.record_stride,
            n_trajectories: s.n_trajectories,
            master_seed: self.master_seed,
            transient_fraction: s.transient_fraction,
        }
    }

    pub fn build_spectrum(&self, params: PhysicalParams) -> sedlab::Result<ZpfSpectrum> {
        Ok(ZpfSpectrum::new(params, self.spectrum.n_modes, self.spectrum.omega_min)?.with_phase_mode(self.spectrum.phase_mode))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// One violated precondition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

fn violation(field: &str, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        rule: rule.into(),
    }
}

/// Every violated precondition of `config`; empty iff the experiment can run.
pub fn validate_config(config: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = config.params;
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(p.mass) {
        out.push(violation("params.mass", format!("m > 0 (got {})", p.mass)));
    }
    if !positive(p.hbar) {
        out.push(violation("params.hbar", format!("ħ > 0 (got {})", p.hbar)));
    }
    if !(p.tau.is_finite() && p.tau >= 0.0) {
        out.push(violation("params.tau", format!("τ ≥ 0 (got {})", p.tau)));
    }
    if !positive(p.cutoff) {
        out.push(violation("params.cutoff", format!("Ω > 0 (got {})", p.cutoff)));
    }
    if let Err(e) = config.potential.validate() {
        out.push(violation("potential", e.to_string()));
    }
    if let Err(e) = config.grid.validate() {
        out.push(violation("grid", e.to_string()));
    }
    let kind = config.kind;
    let params = p.build().ok();
    let spectrum = match params.map(|pp| config.build_spectrum(pp)) {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            out.push(violation("spectrum", e.to_string()));
            None
        }
        None => None,
    };
    let harmonic = matches!(config.potential, Potential::Harmonic { .. });
    match kind {
        ExperimentKind::Covariance => {
            if config.covariance.realizations < 2 {
                out.push(violation("covariance.realizations", "need at least 2 realizations"));
            }
            if config.covariance.lags.is_empty() || config.covariance.lags.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                out.push(violation("covariance.lags", "need a nonempty list of finite lags ≥ 0"));
            }
            let w = config.covariance.window;
            if w.n_points == 0 || !(w.spacing > 0.0) || !(w.start >= 0.0) {
                out.push(violation("covariance.window", "need n_points ≥ 1, spacing > 0 and start ≥ 0"));
            }
        }
        k if k.is_ensemble() => {
            if let Some(s) = &spectrum {
                for rule in config.integration_config().violations(s) {
                    out.push(violation("integration", rule));
                }
            } else {
                let i = &config.integration;
                if !(i.dt > 0.0) || (positive(p.cutoff) && i.dt * p.cutoff >= 0.5) {
                    out.push(violation("integration", format!("need 0 < dt·Ω < 0.5 (dt = {})", i.dt)));
                }
                if !(i.t_end > 0.0) || i.record_stride == 0 || i.n_trajectories == 0 {
                    out.push(violation("integration", "need t_end > 0, record_stride > 0, n_trajectories > 0"));
                }
            }
            if !harmonic {
                out.push(violation("potential", format!("`{}` compares against harmonic oracles", kind.name())));
            }
            if kind == ExperimentKind::Relax && !(p.tau > 0.0) {
                out.push(violation("params.tau", "relaxation needs τ > 0"));
            }
        }
        ExperimentKind::Hydro => {
            let q = &config.quantum;
            if !positive(q.dt) {
                out.push(violation("quantum.dt", "dt > 0"));
            }
            if q.stride == 0 || q.steps < 2 * q.stride {
                out.push(violation("quantum.steps", "need stride ≥ 1 and at least 3 recorded slices"));
            }
            if q.convergence_points.len() < 2 || q.convergence_points.iter().any(|&n| n < Grid1D::MIN_POINTS) {
                out.push(violation(
                    "quantum.convergence_points",
                    format!("need at least 2 grid sizes, each ≥ {}", Grid1D::MIN_POINTS),
                ));
            }
            if matches!(config.potential, Potential::Box { .. }) {
                out.push(violation("potential", "the coherent-state experiment needs a smooth potential"));
            }
        }
        ExperimentKind::Solve | ExperimentKind::Balance => {
            if !config.potential.is_confining() {
                out.push(violation("potential", "needs a confining potential"));
            }
            let n = config.quantum.n_levels;
            if kind == ExperimentKind::Balance && !(3..=MAX_EIGENPAIRS).contains(&n) {
                out.push(violation("quantum.n_levels", format!("3 ≤ n_levels ≤ {MAX_EIGENPAIRS} (got {n})")));
            }
            let v = config.quantum.variational;
            if kind == ExperimentKind::Solve && (!positive(v.tol) || v.max_iterations == 0) {
                out.push(violation("quantum.variational", "need tol > 0 and max_iterations ≥ 1"));
            }
        }
        _ => {}
    }
    if kind.is_ensemble() {
        if let Bandwidth::Fixed(h) = config.bandwidth {
            if !positive(h) {
                out.push(violation("bandwidth", format!("fixed bandwidth must be > 0 (got {h})")));
            }
        }
    }
    out
}
