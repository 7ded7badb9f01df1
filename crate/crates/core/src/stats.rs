//! Reduction of trajectory ensembles to configuration-space fields.
//!
//! Local means `<G>_x` are Nadaraya–Watson kernel regressions over the
//! empirical measure, using the same Gaussian kernel as the density estimate.
//! Derived fields (`u`, `T`) are ratios and are only reported where the
//! density exceeds a floor; the `mask` of every [`GridField`] records where.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{cumulative_trapezoid, derivative, erode, trapezoid, Grid1D};
use crate::model::{PhysicalParams, Potential};

/// Density values below `DENSITY_FLOOR * max(rho)` are masked out.
pub const DENSITY_FLOOR: f64 = 1e-3;

/// Kernel support in bandwidths; contributions beyond are below 1e-14.
const KERNEL_REACH: f64 = 8.0;

/// Positions and momenta of an ensemble at one time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnsembleState {
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub t: f64,
}

impl EnsembleState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Concatenates several snapshots; `t` is taken from the last one.
    pub fn pool<'a>(states: impl IntoIterator<Item = &'a EnsembleState>) -> Result<Self> {
        let mut out = EnsembleState::default();
        for s in states {
            out.positions.extend_from_slice(&s.positions);
            out.momenta.extend_from_slice(&s.momenta);
            out.t = s.t;
        }
        if out.is_empty() {
            return Err(Error::Empty("ensemble snapshots"));
        }
        Ok(out)
    }

    pub fn mean_energy(&self, potential: &Potential, params: &PhysicalParams) -> f64 {
        let m = params.mass();
        let total: f64 = self
            .positions
            .iter()
            .zip(&self.momenta)
            .map(|(&x, &p)| p * p / (2.0 * m) + potential.value(m, x))
            .sum();
        total / self.len() as f64
    }

    pub fn mean_square_position(&self) -> f64 {
        self.positions.iter().map(|x| x * x).sum::<f64>() / self.len() as f64
    }

    pub fn mean_square_momentum(&self) -> f64 {
        self.momenta.iter().map(|p| p * p).sum::<f64>() / self.len() as f64
    }

    fn check(&self) -> Result<()> {
        if self.positions.len() != self.momenta.len() {
            return Err(Error::DegenerateEnsemble(format!(
                "{} positions vs {} momenta",
                self.positions.len(),
                self.momenta.len()
            )));
        }
        if self.len() < 100 {
            return Err(Error::DegenerateEnsemble(format!(
                "{} samples, need >= 100",
                self.len()
            )));
        }
        if self.positions.iter().chain(&self.momenta).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateEnsemble("non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Density,
    FluxVelocity,
    DiffusiveVelocity,
    Stress,
    MomentumDispersion,
    Radiative,
    /// Output of a derivative operator applied to another field.
    Derived,
}

/// A real field on a grid with a validity mask. Values outside the mask are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub kind: FieldKind,
}

impl GridField {
    pub fn from_fn(grid: Grid1D, kind: FieldKind, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self {
            grid,
            values,
            mask: vec![true; grid.n_points],
            kind,
        }
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing())
    }

    /// Masked points with `|x| < limit`, as `(x, value)`.
    pub fn masked_within(&self, limit: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.grid.n_points)
            .filter(move |&i| self.mask[i] && self.grid.x(i).abs() < limit)
            .map(move |i| (self.grid.x(i), self.values[i]))
    }

    /// RMS of `value - target(x)` over masked points with `|x| < limit`.
    pub fn rms_deviation(&self, target: impl Fn(f64) -> f64, limit: f64) -> f64 {
        let (sum, n) = self
            .masked_within(limit)
            .fold((0.0, 0usize), |(s, n), (x, v)| (s + (v - target(x)).powi(2), n + 1));
        if n == 0 {
            f64::NAN
        } else {
            (sum / n as f64).sqrt()
        }
    }

    /// Largest `|value - target(x)|` over masked points with `|x| < limit`.
    pub fn max_deviation(&self, target: impl Fn(f64) -> f64, limit: f64) -> f64 {
        self.masked_within(limit)
            .map(|(x, v)| (v - target(x)).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn masked(grid: Grid1D, kind: FieldKind, values: Vec<f64>, mask: Vec<bool>) -> Self {
        let values = values
            .into_iter()
            .zip(&mask)
            .map(|(v, &m)| if m { v } else { 0.0 })
            .collect();
        Self {
            grid,
            values,
            mask,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `0.9 min(sd, IQR/1.34) n^(-1/5)`
    #[default]
    Silverman,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(&self, samples: &[f64]) -> Result<f64> {
        match *self {
            Bandwidth::Fixed(h) if h > 0.0 => Ok(h),
            Bandwidth::Fixed(h) => Err(invalid("bandwidth", format!("must be > 0, got {h}"))),
            Bandwidth::Silverman => {
                let n = samples.len() as f64;
                let mean = samples.iter().sum::<f64>() / n;
                let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let mut sorted = samples.to_vec();
                sorted.sort_by(f64::total_cmp);
                let q = |f: f64| sorted[((n - 1.0) * f).round() as usize];
                let iqr = q(0.75) - q(0.25);
                let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
                if !(spread > 1e-12 * (1.0 + mean.abs())) {
                    return Err(Error::DegenerateEnsemble("all positions identical".into()));
                }
                Ok(0.9 * spread * n.powf(-0.2))
            }
        }
    }

    /// Bandwidth for estimating the `order`-th derivative of the density.
    /// The rule-of-thumb scale is kept and the rate becomes
    /// `n^(-1/(2 order + 5))`, the optimal rate for that derivative. A fixed
    /// bandwidth is returned unchanged.
    pub fn resolve_for_derivative(&self, samples: &[f64], order: u32) -> Result<f64> {
        let h = self.resolve(samples)?;
        match self {
            Bandwidth::Fixed(_) => Ok(h),
            Bandwidth::Silverman => {
                let n = samples.len() as f64;
                Ok(h * n.powf(0.2 - 1.0 / (2.0 * order as f64 + 5.0)))
            }
        }
    }
}

/// Gaussian-kernel sums `sum_j K(x_i - x_j) g(x_j, p_j)` for every grid point.
fn kernel_sums<const K: usize>(
    ensemble: &EnsembleState,
    grid: &Grid1D,
    h: f64,
    g: impl Fn(f64, f64) -> [f64; K],
) -> Vec<[f64; K]> {
    let mut samples: Vec<(f64, [f64; K])> = ensemble
        .positions
        .iter()
        .zip(&ensemble.momenta)
        .map(|(&x, &p)| (x, g(x, p)))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reach = KERNEL_REACH * h;
    let inv = 1.0 / (h * (2.0 * PI).sqrt());
    (0..grid.n_points)
        .map(|i| {
            let x = grid.x(i);
            let lo = samples.partition_point(|s| s.0 < x - reach);
            let hi = samples.partition_point(|s| s.0 <= x + reach);
            let mut acc = [0.0; K];
            for (xj, gj) in &samples[lo..hi] {
                let z = (x - xj) / h;
                let k = inv * (-0.5 * z * z).exp();
                for (a, v) in acc.iter_mut().zip(gj) {
                    *a += k * v;
                }
            }
            acc
        })
        .collect()
}

/// Density, flux velocity and local momentum dispersion from one kernel pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoments {
    pub bandwidth: f64,
    pub density: GridField,
    pub flux_velocity: GridField,
    pub momentum_dispersion: GridField,
    /// `<p^2>_x`, masked like the density.
    pub mean_square_momentum: Vec<f64>,
}

impl LocalMoments {
    pub fn estimate(
        ensemble: &EnsembleState,
        grid: &Grid1D,
        bandwidth: Bandwidth,
        params: &PhysicalParams,
    ) -> Result<Self> {
        ensemble.check()?;
        let h = bandwidth.resolve(&ensemble.positions)?;
        let sums = kernel_sums(ensemble, grid, h, |_, p| [1.0, p, p * p]);
        let dx = grid.spacing();
        let raw: Vec<f64> = sums.iter().map(|s| s[0] / ensemble.len() as f64).collect();
        let norm = trapezoid(&raw, dx);
        if !(norm > 1e-12) {
            return Err(Error::DegenerateEnsemble("no probability mass on the grid".into()));
        }
        let rho: Vec<f64> = raw.iter().map(|r| r / norm).collect();
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        let mask: Vec<bool> = rho.iter().map(|&r| r > DENSITY_FLOOR * peak).collect();
        let m = params.mass();
        let mean_p: Vec<f64> = sums.iter().map(|s| if s[0] > 0.0 { s[1] / s[0] } else { 0.0 }).collect();
        let mean_p2: Vec<f64> = sums.iter().map(|s| if s[0] > 0.0 { s[2] / s[0] } else { 0.0 }).collect();
        let v = mean_p.iter().map(|p| p / m).collect();
        let var = mean_p
            .iter()
            .zip(&mean_p2)
            .map(|(p, p2)| (p2 - p * p).max(0.0))
            .collect();
        Ok(Self {
            bandwidth: h,
            density: GridField {
                grid: *grid,
                values: rho,
                mask: mask.clone(),
                kind: FieldKind::Density,
            },
            flux_velocity: GridField::masked(*grid, FieldKind::FluxVelocity, v, mask.clone()),
            momentum_dispersion: GridField::masked(*grid, FieldKind::MomentumDispersion, var, mask.clone()),
            mean_square_momentum: mean_p2.iter().zip(&mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect(),
        })
    }
}

/// Gaussian-kernel density estimate, renormalized to unit mass on the grid.
pub fn density_kde(ensemble: &EnsembleState, grid: &Grid1D, bandwidth: Bandwidth) -> Result<GridField> {
    ensemble.check()?;
    let h = bandwidth.resolve(&ensemble.positions)?;
    let sums = kernel_sums(ensemble, grid, h, |_, _| [1.0]);
    let raw: Vec<f64> = sums.iter().map(|s| s[0] / ensemble.len() as f64).collect();
    density_from_values(*grid, raw)
}

/// Normalizes nonnegative grid values into a density field with floor mask.
pub fn density_from_values(grid: Grid1D, raw: Vec<f64>) -> Result<GridField> {
    let norm = trapezoid(&raw, grid.spacing());
    if !(norm > 1e-12) {
        return Err(Error::DegenerateEnsemble("no probability mass on the grid".into()));
    }
    let values: Vec<f64> = raw.iter().map(|r| r / norm).collect();
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let mask = values.iter().map(|&r| r > DENSITY_FLOOR * peak).collect();
    Ok(GridField {
        grid,
        values,
        mask,
        kind: FieldKind::Density,
    })
}

/// `v(x) = <p>_x / m`.
pub fn flux_velocity(
    ensemble: &EnsembleState,
    grid: &Grid1D,
    bandwidth: Bandwidth,
    params: &PhysicalParams,
) -> Result<GridField> {
    Ok(LocalMoments::estimate(ensemble, grid, bandwidth, params)?.flux_velocity)
}

/// `sigma_p^2(x) = <p^2>_x - <p>_x^2`.
pub fn local_momentum_dispersion(
    ensemble: &EnsembleState,
    grid: &Grid1D,
    bandwidth: Bandwidth,
    params: &PhysicalParams,
) -> Result<GridField> {
    Ok(LocalMoments::estimate(ensemble, grid, bandwidth, params)?.momentum_dispersion)
}

/// `u = D rho' / rho` with centered differences, on the eroded density mask.
pub fn diffusive_velocity(rho: &GridField, params: &PhysicalParams) -> GridField {
    let d = params.diffusion();
    let drho = derivative(&rho.values, rho.grid.spacing());
    let mask = erode(&rho.mask);
    let u = rho
        .values
        .iter()
        .zip(&drho)
        .map(|(r, dr)| if *r > 0.0 { d * dr / r } else { 0.0 })
        .collect();
    GridField::masked(rho.grid, FieldKind::DiffusiveVelocity, u, mask)
}

/// The two routes to the stress-rate tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct StressTensor {
    /// `-(2m/hbar)(<xdot^2>_x - v^2)`, from local velocity covariance.
    pub dynamic: GridField,
    /// `du/dx`, from the density.
    pub kinematic: GridField,
}

/// Both stress estimates on their common mask.
pub fn stress_tensor(
    ensemble: &EnsembleState,
    rho: &GridField,
    grid: &Grid1D,
    bandwidth: Bandwidth,
    params: &PhysicalParams,
) -> Result<StressTensor> {
    rho.grid.ensure_same(grid)?;
    let moments = LocalMoments::estimate(ensemble, grid, bandwidth, params)?;
    Ok(stress_from_parts(&moments.momentum_dispersion, rho, params))
}

/// Stress routes from an already computed momentum dispersion and density.
/// The kinematic route is `du/dx = D (ln rho)''`, differenced as a second
/// derivative of `ln rho`.
pub fn stress_from_parts(dispersion: &GridField, rho: &GridField, params: &PhysicalParams) -> StressTensor {
    let d = params.diffusion();
    let curvature = log_curvature(rho);
    let mask: Vec<bool> = erode(&rho.mask)
        .iter()
        .zip(&dispersion.mask)
        .map(|(a, b)| *a && *b)
        .collect();
    let scale = -2.0 / (params.mass() * params.hbar());
    let t_dyn = dispersion.values.iter().map(|s| scale * s).collect();
    let t_kin = curvature.iter().map(|c| d * c).collect();
    StressTensor {
        dynamic: GridField::masked(rho.grid, FieldKind::Stress, t_dyn, mask.clone()),
        kinematic: GridField::masked(rho.grid, FieldKind::Stress, t_kin, mask),
    }
}

fn log_curvature(rho: &GridField) -> Vec<f64> {
    let ln: Vec<f64> = rho
        .values
        .iter()
        .map(|r| if *r > 0.0 { r.ln() } else { 0.0 })
        .collect();
    crate::grid::second_derivative(&ln, rho.grid.spacing())
}

/// `(hbar^2 / 4) (ln rho)''` on the doubly eroded density mask. With a minus
/// sign this is the momentum dispersion implied by the density alone.
pub fn log_density_curvature(rho: &GridField, params: &PhysicalParams) -> GridField {
    let second = log_curvature(rho);
    let pref = params.hbar() * params.hbar() / 4.0;
    let mask = erode(&rho.mask);
    GridField::masked(
        rho.grid,
        FieldKind::MomentumDispersion,
        second.iter().map(|v| pref * v).collect(),
        mask,
    )
}

/// `||d_t rho + d_x(rho v)|| / ||d_x(rho v)||` over interior time slices and
/// the joint mask. When the flux divergence vanishes identically the
/// unnormalized norm is returned.
pub fn continuity_residual(times: &[f64], rho: &[GridField], v: &[GridField]) -> Result<f64> {
    if times.len() != rho.len() || rho.len() != v.len() {
        return Err(Error::GridMismatch("series lengths differ".into()));
    }
    if rho.len() < 3 {
        return Err(invalid("series", "need >= 3 snapshots"));
    }
    let grid = rho[0].grid;
    for f in rho.iter().chain(v) {
        f.grid.ensure_same(&grid)?;
    }
    let h = grid.spacing();
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 1..rho.len() - 1 {
        let span = times[n + 1] - times[n - 1];
        let flux: Vec<f64> = rho[n].values.iter().zip(&v[n].values).map(|(r, v)| r * v).collect();
        let div = derivative(&flux, h);
        let mask: Vec<bool> = erode(&rho[n].mask)
            .iter()
            .zip(erode(&v[n].mask))
            .zip(rho[n - 1].mask.iter().zip(&rho[n + 1].mask))
            .map(|((a, b), (c, d))| *a && b && *c && *d)
            .collect();
        for i in 0..grid.n_points {
            if !mask[i] {
                continue;
            }
            let dt_rho = (rho[n + 1].values[i] - rho[n - 1].values[i]) / span;
            num += (dt_rho + div[i]).powi(2);
            den += div[i].powi(2);
        }
    }
    let num = (num * h).sqrt();
    let den = (den * h).sqrt();
    Ok(if den > 0.0 { num / den } else { num })
}

/// Estimates of the radiative term of the momentum balance.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiativeEstimate {
    /// `rho(x) * tau <f'(x) xdot>_x`: the order-reduced self-force density.
    pub dissipative: GridField,
    /// `rho(x) * tau <f'(x) xdot^2>_x`; integrates to the dissipated power.
    pub dissipated_power: GridField,
    /// Momentum-balance closure `d_x(rho <p^2>_x / m) - rho <f>_x - dissipative`
    /// under a stationarity assumption. Approximate.
    pub diffusive_surrogate: GridField,
}

impl RadiativeEstimate {
    /// `int dx rho tau <f' xdot^2>_x`, comparable with the trajectory power `P_diss`.
    pub fn total_dissipated_power(&self) -> f64 {
        self.dissipated_power.integral()
    }
}

pub fn radiative_term_estimate(
    ensemble: &EnsembleState,
    potential: &Potential,
    params: &PhysicalParams,
    grid: &Grid1D,
    bandwidth: Bandwidth,
) -> Result<RadiativeEstimate> {
    ensemble.check()?;
    let m = params.mass();
    let tau = params.tau();
    let h = bandwidth.resolve(&ensemble.positions)?;
    let sums = kernel_sums(ensemble, grid, h, |x, p| {
        let fp = potential.force_gradient(m, x).unwrap_or(0.0);
        let f = potential.force(m, x).unwrap_or(0.0);
        let v = p / m;
        [1.0, fp * v, fp * v * v, p * p, f]
    });
    let n = ensemble.len() as f64;
    let raw: Vec<f64> = sums.iter().map(|s| s[0] / n).collect();
    let rho = density_from_values(*grid, raw)?;
    let local = |j: usize| -> Vec<f64> {
        sums.iter()
            .map(|s| if s[0] > 0.0 { s[j] / s[0] } else { 0.0 })
            .collect()
    };
    let (fpv, fpv2, p2, f) = (local(1), local(2), local(3), local(4));
    let dissipative: Vec<f64> = (0..grid.n_points).map(|i| rho.values[i] * tau * fpv[i]).collect();
    let power: Vec<f64> = (0..grid.n_points).map(|i| rho.values[i] * tau * fpv2[i]).collect();
    let momentum_flux: Vec<f64> = (0..grid.n_points).map(|i| rho.values[i] * p2[i] / m).collect();
    let dflux = derivative(&momentum_flux, grid.spacing());
    let closure = (0..grid.n_points)
        .map(|i| dflux[i] - rho.values[i] * f[i] - dissipative[i])
        .collect();
    let mask = rho.mask.clone();
    Ok(RadiativeEstimate {
        dissipative: GridField::masked(*grid, FieldKind::Radiative, dissipative, mask.clone()),
        dissipated_power: GridField::masked(*grid, FieldKind::Radiative, power, mask.clone()),
        diffusive_surrogate: GridField::masked(*grid, FieldKind::Radiative, closure, erode(&mask)),
    })
}

/// Kolmogorov–Smirnov distance between two densities on the same grid,
/// using their cumulative trapezoid integrals.
pub fn ks_distance(a: &GridField, b: &GridField) -> Result<f64> {
    a.grid.ensure_same(&b.grid)?;
    let h = a.grid.spacing();
    let ca = cumulative_trapezoid(&a.values, h);
    let cb = cumulative_trapezoid(&b.values, h);
    let (na, nb) = (ca[ca.len() - 1], cb[cb.len() - 1]);
    Ok(ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (x / na - y / nb).abs())
        .fold(0.0, f64::max))
}
