//! Integration of the stochastic Abraham–Lorentz (Braffort–Marshall) equation
//!
//! ```text
//! dx/dt = p / m
//! dp/dt = f(x) + tau f'(x) p / m + F_zpf(t)
//! ```
//!
//! where the third-derivative self-force `m tau x'''` has been replaced by its
//! order-reduced form `tau df/dt`. Each trajectory sees its own smooth field
//! realization, so a plain RK4 step is appropriate; the randomness lives across
//! the ensemble.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::model::{PhysicalParams, Potential};
use crate::stats::EnsembleState;
use crate::zpf::{FieldRealization, FieldSampler, StreamSeed, ZpfSpectrum};

/// `|x|` or `|p|` beyond this marks a trajectory as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Maximum tolerated fraction of diverged trajectories in an ensemble.
pub const MAX_DIVERGED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub x: f64,
    pub p: f64,
    pub t: f64,
}

impl TrajectoryState {
    pub fn new(x: f64, p: f64, t: f64) -> Self {
        Self { x, p, t }
    }

    pub fn energy(&self, potential: &Potential, params: &PhysicalParams) -> f64 {
        let m = params.mass();
        self.p * self.p / (2.0 * m) + potential.value(m, self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    /// Requested step; the ensemble driver may shrink it slightly so that the
    /// field samples line up with the mode comb.
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Leading fraction of the run treated as transient.
    pub transient_fraction: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_end: 5000.0,
            record_stride: 2500,
            n_trajectories: 10_000,
            master_seed: 20_240_901,
            transient_fraction: 0.6,
        }
    }
}

impl IntegrationConfig {
    /// Every violated precondition, as human-readable rules.
    pub fn violations(&self, spectrum: &ZpfSpectrum) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0) {
            out.push(format!("dt must be > 0 (got {})", self.dt));
        }
        if self.dt * spectrum.omega_max() >= 0.5 {
            out.push(format!(
                "dt·Ω ≥ 0.5 ({} · {} = {})",
                self.dt,
                spectrum.omega_max(),
                self.dt * spectrum.omega_max()
            ));
        }
        if !(self.t_end > 0.0) {
            out.push(format!("t_end must be > 0 (got {})", self.t_end));
        }
        if self.t_end >= spectrum.recurrence_time() {
            out.push(format!(
                "t_end ≥ 2π/Δω: comb recurrence at {} precedes t_end = {}",
                spectrum.recurrence_time(),
                self.t_end
            ));
        }
        if self.record_stride == 0 {
            out.push("record_stride must be > 0".into());
        }
        if self.n_trajectories == 0 {
            out.push("n_trajectories must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            out.push(format!(
                "transient_fraction must lie in [0, 1) (got {})",
                self.transient_fraction
            ));
        }
        out
    }

    pub fn validate(&self, spectrum: &ZpfSpectrum) -> Result<()> {
        match self.violations(spectrum).into_iter().next() {
            None => Ok(()),
            Some(v) => Err(invalid("integration", v)),
        }
    }
}

/// Order-reduced radiation reaction `tau * f'(x) * v`.
#[inline]
pub fn rr_force(params: &PhysicalParams, potential: &Potential, x: f64, v: f64) -> Result<f64> {
    Ok(params.tau() * potential.force_gradient(params.mass(), x)? * v)
}

#[inline]
fn acceleration(
    params: &PhysicalParams,
    potential: &Potential,
    x: f64,
    p: f64,
    drive: f64,
) -> Result<f64> {
    let m = params.mass();
    let f = potential.force(m, x)?;
    Ok(f + rr_force(params, potential, x, p / m)? + drive)
}

/// One RK4 step given the drive at the start, midpoint and end of the step.
pub fn rk4_step(
    state: TrajectoryState,
    drive: [f64; 3],
    potential: &Potential,
    params: &PhysicalParams,
    dt: f64,
) -> Result<TrajectoryState> {
    let m = params.mass();
    let TrajectoryState { x, p, t } = state;
    let half = 0.5 * dt;

    let k1x = p / m;
    let k1p = acceleration(params, potential, x, p, drive[0])?;
    let (x2, p2) = (x + half * k1x, p + half * k1p);
    let k2x = p2 / m;
    let k2p = acceleration(params, potential, x2, p2, drive[1])?;
    let (x3, p3) = (x + half * k2x, p + half * k2p);
    let k3x = p3 / m;
    let k3p = acceleration(params, potential, x3, p3, drive[1])?;
    let (x4, p4) = (x + dt * k3x, p + dt * k3p);
    let k4x = p4 / m;
    let k4p = acceleration(params, potential, x4, p4, drive[2])?;

    let next = TrajectoryState {
        x: x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        p: p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        t: t + dt,
    };
    if !(next.x.abs() <= DIVERGENCE_LIMIT && next.p.abs() <= DIVERGENCE_LIMIT) {
        return Err(Error::Diverged {
            trajectory: 0,
            t: next.t,
            x: next.x,
            p: next.p,
        });
    }
    Ok(next)
}

/// One RK4 step with the field evaluated directly at the substep times.
pub fn step(
    state: TrajectoryState,
    field: &FieldRealization,
    potential: &Potential,
    params: &PhysicalParams,
    dt: f64,
) -> Result<TrajectoryState> {
    let t = state.t;
    let drive = [
        field.force_at(t),
        field.force_at(t + 0.5 * dt),
        field.force_at(t + dt),
    ];
    rk4_step(state, drive, potential, params, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    Point { x0: f64, p0: f64 },
    Gaussian { sigma_x: f64, sigma_p: f64 },
}

impl Default for InitialDistribution {
    fn default() -> Self {
        InitialDistribution::Point { x0: 0.0, p0: 0.0 }
    }
}

impl InitialDistribution {
    fn draw(&self, seed: StreamSeed) -> TrajectoryState {
        match *self {
            InitialDistribution::Point { x0, p0 } => TrajectoryState::new(x0, p0, 0.0),
            InitialDistribution::Gaussian { sigma_x, sigma_p } => {
                let mut rng = seed.rng();
                let x: f64 = rng.sample(StandardNormal);
                let p: f64 = rng.sample(StandardNormal);
                TrajectoryState::new(sigma_x * x, sigma_p * p, 0.0)
            }
        }
    }
}

/// Ensemble-averaged power flows over one recording interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub t_start: f64,
    pub t_end: f64,
    /// `<F_zpf · v>`
    pub p_abs: f64,
    /// `<F_rr · v>`
    pub p_diss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBalance {
    pub p_abs: f64,
    pub p_diss: f64,
    /// `(P_abs + P_diss) / |P_abs|`; `sign(P_diss)` when nothing is absorbed
    /// and 0 when both vanish.
    pub ratio: f64,
}

/// Time-weighted average of the given records and their balance ratio.
pub fn power_balance(records: &[PowerRecord]) -> Result<PowerBalance> {
    let total: f64 = records.iter().map(|r| r.t_end - r.t_start).sum();
    if records.is_empty() || !(total > 0.0) {
        return Err(Error::Empty("power window"));
    }
    let p_abs = records.iter().map(|r| r.p_abs * (r.t_end - r.t_start)).sum::<f64>() / total;
    let p_diss = records.iter().map(|r| r.p_diss * (r.t_end - r.t_start)).sum::<f64>() / total;
    let ratio = if p_abs != 0.0 {
        (p_abs + p_diss) / p_abs.abs()
    } else if p_diss != 0.0 {
        p_diss.signum()
    } else {
        0.0
    };
    Ok(PowerBalance {
        p_abs,
        p_diss,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub snapshots: Vec<EnsembleState>,
    pub power: Vec<PowerRecord>,
    /// Step actually used (commensurate with the field comb).
    pub dt: f64,
    pub t_end: f64,
    pub transient_fraction: f64,
    /// Indices of trajectories that diverged and were dropped.
    pub diverged: Vec<usize>,
}

impl EnsembleRun {
    pub fn stationary_start(&self) -> f64 {
        self.transient_fraction * self.t_end
    }

    pub fn stationary_snapshots(&self) -> impl Iterator<Item = &EnsembleState> {
        let start = self.stationary_start();
        self.snapshots.iter().filter(move |s| s.t >= start)
    }

    pub fn stationary_power(&self) -> Vec<PowerRecord> {
        let start = self.stationary_start();
        self.power
            .iter()
            .copied()
            .filter(|r| r.t_start >= start)
            .collect()
    }

    /// All stationary snapshots pooled into one sample.
    pub fn pooled_stationary(&self) -> Result<EnsembleState> {
        EnsembleState::pool(self.stationary_snapshots())
    }

    /// `(t, <E>)` for every snapshot.
    pub fn energy_trace(&self, potential: &Potential, params: &PhysicalParams) -> Vec<(f64, f64)> {
        self.snapshots
            .iter()
            .map(|s| (s.t, s.mean_energy(potential, params)))
            .collect()
    }
}

struct TrajectoryOutput {
    samples: Vec<(f64, f64)>,
    absorbed: Vec<f64>,
    dissipated: Vec<f64>,
}

/// Runs `n_trajectories` independent paths. Trajectory `j` uses the field
/// seeded by `(master_seed, j)`, and all reductions run in trajectory order,
/// so the result does not depend on how the work is scheduled.
pub fn simulate_ensemble(
    init: &InitialDistribution,
    potential: &Potential,
    params: &PhysicalParams,
    spectrum: &ZpfSpectrum,
    config: &IntegrationConfig,
    exec: Execution,
) -> Result<EnsembleRun> {
    potential.validate()?;
    config.validate(spectrum)?;
    let sampler = FieldSampler::new(spectrum, 0.5 * config.dt, config.t_end)?;
    let dt = 2.0 * sampler.tick();
    let n_steps = (config.t_end / dt).floor() as usize;
    let stride = config.record_stride;
    let n_records = n_steps / stride + 1;
    let n_windows = n_records - 1;
    // Decorrelate the initial-condition stream from the field stream.
    let init_master = config.master_seed ^ 0x9E37_79B9_7F4A_7C15;

    let run_one = |j: usize| -> Result<TrajectoryOutput> {
        let field = FieldRealization::sample(spectrum, StreamSeed::new(config.master_seed, j as u64));
        let path = sampler.sample_path(&field);
        let mut state = init.draw(StreamSeed::new(init_master, j as u64));
        let mut out = TrajectoryOutput {
            samples: Vec::with_capacity(n_records),
            absorbed: vec![0.0; n_windows],
            dissipated: vec![0.0; n_windows],
        };
        let m = params.mass();
        for s in 0..=n_steps {
            if s % stride == 0 {
                out.samples.push((state.x, state.p));
                if s / stride == n_windows {
                    break;
                }
            }
            let w = s / stride;
            let v = state.p / m;
            let drive = [path[2 * s], path[2 * s + 1], path[2 * s + 2]];
            out.absorbed[w] += drive[0] * v;
            out.dissipated[w] += rr_force(params, potential, state.x, v)? * v;
            state = rk4_step(state, drive, potential, params, dt).map_err(|e| match e {
                Error::Diverged { t, x, p, .. } => Error::Diverged {
                    trajectory: j,
                    t,
                    x,
                    p,
                },
                other => other,
            })?;
        }
        Ok(out)
    };

    let results = exec.map(config.n_trajectories, run_one);

    let mut diverged = Vec::new();
    let mut kept = Vec::with_capacity(results.len());
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(out) => kept.push(out),
            Err(Error::Diverged { .. }) | Err(Error::OutsideDomain { .. }) => diverged.push(j),
            Err(e) => return Err(e),
        }
    }
    if diverged.len() as f64 > MAX_DIVERGED_FRACTION * config.n_trajectories as f64 {
        return Err(Error::TooManyDiverged {
            diverged: diverged.len(),
            total: config.n_trajectories,
        });
    }

    let snapshots = (0..n_records)
        .map(|r| EnsembleState {
            positions: kept.iter().map(|o| o.samples[r].0).collect(),
            momenta: kept.iter().map(|o| o.samples[r].1).collect(),
            t: (r * stride) as f64 * dt,
        })
        .collect();

    let n_kept = kept.len().max(1) as f64;
    let steps_per_window = stride as f64;
    let power = (0..n_windows)
        .map(|w| PowerRecord {
            t_start: (w * stride) as f64 * dt,
            t_end: ((w + 1) * stride) as f64 * dt,
            p_abs: kept.iter().map(|o| o.absorbed[w]).sum::<f64>() / (n_kept * steps_per_window),
            p_diss: kept.iter().map(|o| o.dissipated[w]).sum::<f64>() / (n_kept * steps_per_window),
        })
        .collect();

    Ok(EnsembleRun {
        snapshots,
        power,
        dt,
        t_end: (n_windows * stride) as f64 * dt,
        transient_fraction: config.transient_fraction,
        diverged,
    })
}

/// Exponential relaxation fit: slope of `ln|plateau - <E>(t)|` over the
/// snapshots whose distance from the plateau still exceeds
/// `min_deficit * plateau`, skipping times before `t_skip`. Works for
/// relaxation from below or above. Returns the fitted time constant.
pub fn relaxation_time(trace: &[(f64, f64)], plateau: f64, t_skip: f64, min_deficit: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|(t, _)| *t >= t_skip)
        .take_while(|(_, e)| (plateau - e).abs() > min_deficit * plateau)
        .map(|&(t, e)| (t, (plateau - e).abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Empty("relaxation transient"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(invalid("relaxation", "energy deficit does not decay"));
    }
    Ok(-1.0 / slope)
}
