//! Two-velocity hydrodynamics: the map between a wavefunction and the fields
//! `(rho, v, u)`, the systematic and stochastic derivatives, and residuals of
//! the stochastic equations of motion.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, erode, segments, Grid1D};
use crate::model::{PhysicalParams, Potential};
use crate::stats::{FieldKind, GridField};

/// Points with `|psi|^2` below this fraction of the peak are masked.
pub const NODE_FLOOR: f64 = 1e-10;

/// Complex amplitudes on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavefunction {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
}

impl Wavefunction {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Self {
        assert_eq!(grid.n_points, values.len(), "wavefunction length");
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Self {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn from_real(grid: Grid1D, values: &[f64]) -> Self {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `int |psi|^2 dx` by the trapezoid rule.
    pub fn norm(&self) -> f64 {
        grid::trapezoid(&self.density(), self.grid.spacing())
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let s = 1.0 / n.sqrt();
            self.values.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// `<self|other>` by the trapezoid rule.
    pub fn inner(&self, other: &Wavefunction) -> Complex64 {
        let h = self.grid.spacing();
        let n = self.values.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            acc += a.conj() * b * w;
        }
        acc * h
    }

    /// Centered-difference derivative (one-sided at the ends).
    pub fn derivative(&self) -> Vec<Complex64> {
        let re: Vec<f64> = self.values.iter().map(|z| z.re).collect();
        let im: Vec<f64> = self.values.iter().map(|z| z.im).collect();
        let h = self.grid.spacing();
        grid::derivative(&re, h)
            .into_iter()
            .zip(grid::derivative(&im, h))
            .map(|(a, b)| Complex64::new(a, b))
            .collect()
    }

    /// Expectation of `x`.
    pub fn mean_position(&self) -> f64 {
        let vals: Vec<f64> = self.grid.points().iter().zip(&self.values).map(|(x, z)| x * z.norm_sqr()).collect();
        grid::trapezoid(&vals, self.grid.spacing()) / self.norm()
    }

    /// Variance of `x`.
    pub fn position_variance(&self) -> f64 {
        let mean = self.mean_position();
        let vals: Vec<f64> = self
            .grid
            .points()
            .iter()
            .zip(&self.values)
            .map(|(x, z)| (x - mean).powi(2) * z.norm_sqr())
            .collect();
        grid::trapezoid(&vals, self.grid.spacing()) / self.norm()
    }
}

/// Density, flux velocity and diffusive velocity at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroFields {
    pub rho: GridField,
    pub v: GridField,
    pub u: GridField,
    pub t: f64,
}

impl HydroFields {
    pub fn grid(&self) -> &Grid1D {
        &self.rho.grid
    }
}

/// Branch parameter and diffusion coefficient of the stochastic equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqmParams {
    lambda: f64,
    diffusion: f64,
}

impl SqmParams {
    pub fn new(lambda: f64, diffusion: f64) -> Result<Self> {
        if lambda != 1.0 && lambda != -1.0 {
            return Err(invalid("lambda", format!("must be +1 or -1, got {lambda}")));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite()) {
            return Err(invalid("diffusion", format!("must be >= 0, got {diffusion}")));
        }
        Ok(Self { lambda, diffusion })
    }

    /// `lambda = +1`, `D = hbar / 2m`.
    pub fn quantum(params: &PhysicalParams) -> Self {
        Self {
            lambda: 1.0,
            diffusion: params.diffusion(),
        }
    }

    /// `lambda = -1`, `D = hbar / 2m`.
    pub fn brownian(params: &PhysicalParams) -> Self {
        Self {
            lambda: -1.0,
            diffusion: params.diffusion(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

/// `rho = |psi|^2`, `m v = hbar Im(psi'/psi)`, `m u = hbar Re(psi'/psi)`.
/// The velocities are masked where `rho` is below the node floor or a
/// neighbour is.
pub fn wavefunction_to_fields(psi: &Wavefunction, params: &PhysicalParams, t: f64) -> Result<HydroFields> {
    psi.grid.validate()?;
    let rho = psi.density();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Empty("wavefunction is identically zero"));
    }
    let mask: Vec<bool> = rho.iter().map(|&r| r > NODE_FLOOR * peak).collect();
    let inner = erode(&mask);
    let d = psi.derivative();
    let scale = params.hbar() / params.mass();
    let mut v = vec![0.0; rho.len()];
    let mut u = vec![0.0; rho.len()];
    for i in 0..rho.len() {
        if inner[i] {
            let r = d[i] / psi.values[i];
            v[i] = scale * r.im;
            u[i] = scale * r.re;
        }
    }
    let g = psi.grid;
    Ok(HydroFields {
        rho: GridField::masked(g, FieldKind::Density, rho, mask),
        v: GridField::masked(g, FieldKind::FluxVelocity, v, inner.clone()),
        u: GridField::masked(g, FieldKind::DiffusiveVelocity, u, inner),
        t,
    })
}

/// `psi = sqrt(rho) exp(i S / hbar)` with `S = int m v dx`, zero at the
/// leftmost masked point and held constant outside the mask.
pub fn fields_to_wavefunction(fields: &HydroFields, params: &PhysicalParams) -> Result<Wavefunction> {
    let mask = &fields.v.mask;
    match segments(mask) {
        0 => return Err(Error::Empty("velocity mask")),
        1 => {}
        n => return Err(Error::DisconnectedMask { segments: n }),
    }
    let g = *fields.grid();
    let h = g.spacing();
    let first = mask.iter().position(|&m| m).unwrap_or(0);
    let last = mask.iter().rposition(|&m| m).unwrap_or(0);
    let momentum: Vec<f64> = fields.v.values[first..=last].iter().map(|v| params.mass() * v).collect();
    let running = grid::cumulative_trapezoid(&momentum, h);
    let mut phase = vec![0.0; g.n_points];
    for (i, p) in phase.iter_mut().enumerate() {
        let j = i.clamp(first, last) - first;
        *p = running[j] / params.hbar();
    }
    let values = fields
        .rho
        .values
        .iter()
        .zip(&phase)
        .map(|(&r, &s)| Complex64::from_polar(r.max(0.0).sqrt(), s))
        .collect();
    let mut psi = Wavefunction::new(g, values);
    psi.normalize();
    Ok(psi)
}

fn same_grid(a: &GridField, b: &GridField) -> Result<()> {
    a.grid.ensure_same(&b.grid)
}

fn and_masks(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

/// `D_c f = df/dt + v f'` at the middle of three slices, with the time
/// derivative from the outer two.
pub fn systematic_derivative(series: [&GridField; 3], times: [f64; 3], v: &GridField) -> Result<GridField> {
    for f in &series {
        same_grid(f, v)?;
    }
    let span = times[2] - times[0];
    if !(span > 0.0) {
        return Err(invalid("times", "slices must be in increasing time order"));
    }
    let g = v.grid;
    let cur = series[1];
    let df = grid::derivative(&cur.values, g.spacing());
    let mask = and_masks(&and_masks(&erode(&cur.mask), &series[0].mask), &and_masks(&series[2].mask, &v.mask));
    let values = (0..g.n_points)
        .map(|i| (series[2].values[i] - series[0].values[i]) / span + v.values[i] * df[i])
        .collect();
    Ok(GridField::masked(g, FieldKind::Derived, values, mask))
}

/// `D_s f = u f' + D f''`.
pub fn stochastic_derivative(f: &GridField, u: &GridField, diffusion: f64) -> Result<GridField> {
    same_grid(f, u)?;
    let h = f.grid.spacing();
    let d1 = grid::derivative(&f.values, h);
    let d2 = grid::second_derivative(&f.values, h);
    let mask = and_masks(&erode(&f.mask), &u.mask);
    let values = (0..f.values.len()).map(|i| u.values[i] * d1[i] + diffusion * d2[i]).collect();
    Ok(GridField::masked(f.grid, FieldKind::Derived, values, mask))
}

/// Complex values on a grid with a mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
    pub mask: Vec<bool>,
}

/// `w = v - i u`.
pub fn complex_velocity(fields: &HydroFields) -> Result<ComplexField> {
    same_grid(&fields.v, &fields.u)?;
    let mask = and_masks(&fields.v.mask, &fields.u.mask);
    let values = fields
        .v
        .values
        .iter()
        .zip(&fields.u.values)
        .zip(&mask)
        .map(|((&v, &u), &m)| if m { Complex64::new(v, -u) } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(ComplexField {
        grid: fields.v.grid,
        values,
        mask,
    })
}

/// Two measurements of `-i hbar psi' = m w psi`, both as the largest deviation
/// over the mask relative to `max |hbar psi'|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumCheck {
    /// `w` taken from `wavefunction_to_fields`, which uses the same
    /// difference stencil as the left-hand side: only round-off remains.
    pub identity_error: f64,
    /// `w` rebuilt from the fields themselves, `u = D (ln rho)'` and `v` from
    /// the unwrapped phase gradient: second-order truncation error.
    pub discretization_error: f64,
}

pub fn momentum_operator_check(psi: &Wavefunction, params: &PhysicalParams) -> Result<MomentumCheck> {
    let fields = wavefunction_to_fields(psi, params, 0.0)?;
    let w = complex_velocity(&fields)?;
    let g = psi.grid;
    let h = g.spacing();
    let hbar = params.hbar();
    let m = params.mass();
    let d = psi.derivative();
    let lhs: Vec<Complex64> = d.iter().map(|z| Complex64::new(0.0, -hbar) * z).collect();

    let ln_rho: Vec<f64> = fields.rho.values.iter().map(|r| if *r > 0.0 { r.ln() } else { 0.0 }).collect();
    let u_h: Vec<f64> = grid::derivative(&ln_rho, h).iter().map(|d| params.diffusion() * d).collect();
    let phase = unwrapped_phase(psi, &fields.rho.mask);
    let v_h: Vec<f64> = grid::derivative(&phase, h).iter().map(|d| hbar * d / m).collect();

    let mut scale = 0.0f64;
    let mut id_err = 0.0f64;
    let mut disc_err = 0.0f64;
    for i in 0..g.n_points {
        if !w.mask[i] {
            continue;
        }
        scale = scale.max(hbar * d[i].norm());
        id_err = id_err.max((lhs[i] - m * w.values[i] * psi.values[i]).norm());
        let wh = Complex64::new(v_h[i], -u_h[i]);
        disc_err = disc_err.max((lhs[i] - m * wh * psi.values[i]).norm());
    }
    if !(scale > 0.0) {
        return Err(Error::Empty("momentum check mask"));
    }
    Ok(MomentumCheck {
        identity_error: id_err / scale,
        discretization_error: disc_err / scale,
    })
}

/// `arg psi` made continuous across the mask (jumps folded into `(-pi, pi]`).
fn unwrapped_phase(psi: &Wavefunction, mask: &[bool]) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut out = vec![0.0; psi.values.len()];
    let mut prev: Option<f64> = None;
    for (i, z) in psi.values.iter().enumerate() {
        if !mask[i] {
            prev = None;
            continue;
        }
        let raw = z.arg();
        out[i] = match prev {
            None => raw,
            Some(p) => {
                let mut jump = raw - p.rem_euclid(2.0 * PI);
                jump = (jump + PI).rem_euclid(2.0 * PI) - PI;
                p + jump
            }
        };
        prev = Some(out[i]);
    }
    out
}

/// Normalized residuals of the two real equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqmResidual {
    /// `m (D_c v - lambda D_s u) - f`
    pub first: f64,
    /// `m (D_c u + D_s v)`
    pub second: f64,
}

struct SliceTerms {
    e1: Vec<f64>,
    e2: Vec<f64>,
    weight: Vec<f64>,
    /// Squared weighted norm of the largest term.
    scale2: f64,
}

fn weighted_norm2(values: &[f64], weight: &[f64], h: f64) -> f64 {
    h * values.iter().zip(weight).map(|(v, w)| w * v * v).sum::<f64>()
}

fn slice_terms(
    series: &[HydroFields],
    n: usize,
    potential: &Potential,
    params: &PhysicalParams,
    sqm: SqmParams,
) -> Result<SliceTerms> {
    let (prev, cur, next) = (&series[n - 1], &series[n], &series[n + 1]);
    let g = *cur.grid();
    for s in [prev, next] {
        s.rho.grid.ensure_same(&g)?;
    }
    let span = next.t - prev.t;
    if !(span > 0.0) {
        return Err(invalid("series", "slices must be in increasing time order"));
    }
    let h = g.spacing();
    let m = params.mass();
    let d = sqm.diffusion();
    let zero = vec![0.0; g.n_points];
    // Without diffusion the diffusive velocity vanishes identically.
    let pick_u = |f: &HydroFields| -> Vec<f64> {
        if d == 0.0 {
            zero.clone()
        } else {
            f.u.values.clone()
        }
    };
    let (u_prev, u, u_next) = (pick_u(prev), pick_u(cur), pick_u(next));
    let v = &cur.v.values;
    let dv = grid::derivative(v, h);
    let du = grid::derivative(&u, h);
    let ddv = grid::second_derivative(v, h);
    let ddu = grid::second_derivative(&u, h);

    let mask: Vec<bool> = erode(&cur.v.mask)
        .iter()
        .zip(&prev.v.mask)
        .zip(&next.v.mask)
        .map(|((a, b), c)| *a && *b && *c)
        .collect();

    let mut terms: [Vec<f64>; 10] = Default::default();
    for t in terms.iter_mut() {
        t.resize(g.n_points, 0.0);
    }
    let mut e1 = vec![0.0; g.n_points];
    let mut e2 = vec![0.0; g.n_points];
    let mut weight = vec![0.0; g.n_points];
    for i in 0..g.n_points {
        if !mask[i] {
            continue;
        }
        let f = match potential.force(m, g.x(i)) {
            Ok(f) => f,
            Err(_) => continue,
        };
        weight[i] = cur.rho.values[i];
        let dt_v = m * (next.v.values[i] - prev.v.values[i]) / span;
        let dt_u = m * (u_next[i] - u_prev[i]) / span;
        let conv_v = m * v[i] * dv[i];
        let uu = m * u[i] * du[i];
        let duu = m * d * ddu[i];
        let vu = m * v[i] * du[i];
        let uv = m * u[i] * dv[i];
        let dvv = m * d * ddv[i];
        e1[i] = dt_v + conv_v - sqm.lambda() * (uu + duu) - f;
        e2[i] = dt_u + vu + uv + dvv;
        for (slot, val) in terms.iter_mut().zip([f, dt_v, conv_v, uu, duu, dt_u, vu, uv, dvv, 0.0]) {
            slot[i] = val;
        }
    }
    let scale2 = terms.iter().map(|t| weighted_norm2(t, &weight, h)).fold(0.0, f64::max);
    Ok(SliceTerms {
        e1,
        e2,
        weight,
        scale2,
    })
}

/// Residuals of
/// `m (D_c v - lambda D_s u) = f` and `m (D_c u + D_s v) = 0`
/// over every interior slice of the series. Each residual is a
/// density-weighted L2 norm divided by the largest density-weighted norm among
/// the individual terms (including `f`). Force evaluation failures (box
/// walls) are masked.
pub fn sqm_residual(
    series: &[HydroFields],
    potential: &Potential,
    params: &PhysicalParams,
    sqm: SqmParams,
) -> Result<SqmResidual> {
    if series.len() < 3 {
        return Err(invalid("series", "need at least 3 time slices"));
    }
    let h = series[0].grid().spacing();
    let (mut r1, mut r2, mut scale) = (0.0, 0.0, 0.0);
    for n in 1..series.len() - 1 {
        let s = slice_terms(series, n, potential, params, sqm)?;
        r1 += weighted_norm2(&s.e1, &s.weight, h);
        r2 += weighted_norm2(&s.e2, &s.weight, h);
        scale += s.scale2;
    }
    if !(scale > 0.0) {
        return Err(Error::Empty("residual mask"));
    }
    Ok(SqmResidual {
        first: (r1 / scale).sqrt(),
        second: (r2 / scale).sqrt(),
    })
}

/// Quantum-branch residual in complex form, `m (dw/dt + w w' - i D w'') - f`,
/// normalized like `sqm_residual`. Its real part is the first real residual
/// and its imaginary part is minus the second.
pub fn complex_residual(series: &[HydroFields], potential: &Potential, params: &PhysicalParams) -> Result<f64> {
    if series.len() < 3 {
        return Err(invalid("series", "need at least 3 time slices"));
    }
    let sqm = SqmParams::quantum(params);
    let h = series[0].grid().spacing();
    let m = params.mass();
    let d = params.diffusion();
    let (mut num, mut scale) = (0.0, 0.0);
    for n in 1..series.len() - 1 {
        let s = slice_terms(series, n, potential, params, sqm)?;
        scale += s.scale2;
        let ws: Vec<ComplexField> = (n - 1..=n + 1).map(|k| complex_velocity(&series[k])).collect::<Result<_>>()?;
        let span = series[n + 1].t - series[n - 1].t;
        let w = &ws[1].values;
        let re: Vec<f64> = w.iter().map(|z| z.re).collect();
        let im: Vec<f64> = w.iter().map(|z| z.im).collect();
        let dw: Vec<Complex64> = grid::derivative(&re, h)
            .into_iter()
            .zip(grid::derivative(&im, h))
            .map(|(a, b)| Complex64::new(a, b))
            .collect();
        let ddw: Vec<Complex64> = grid::second_derivative(&re, h)
            .into_iter()
            .zip(grid::second_derivative(&im, h))
            .map(|(a, b)| Complex64::new(a, b))
            .collect();
        let g = series[n].grid();
        for i in 0..g.n_points {
            if s.weight[i] == 0.0 {
                continue;
            }
            let f = potential.force(m, g.x(i))?;
            let dt = (ws[2].values[i] - ws[0].values[i]) / span;
            let e = m * (dt + w[i] * dw[i] - Complex64::new(0.0, d) * ddw[i]) - f;
            num += h * s.weight[i] * e.norm_sqr();
        }
    }
    if !(scale > 0.0) {
        return Err(Error::Empty("residual mask"));
    }
    Ok((num / scale).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticSplit {
    /// `m/2 int v^2 rho`
    pub t_v: f64,
    /// `m/2 int u^2 rho`
    pub t_u: f64,
    /// `hbar^2/2m int |psi'|^2` of the wavefunction rebuilt from the fields.
    pub total: f64,
}

pub fn kinetic_energy_split(fields: &HydroFields, params: &PhysicalParams) -> Result<KineticSplit> {
    let g = *fields.grid();
    let h = g.spacing();
    let m = params.mass();
    let rho = &fields.rho.values;
    let part = |f: &GridField| {
        let vals: Vec<f64> = (0..g.n_points)
            .map(|i| if f.mask[i] { f.values[i].powi(2) * rho[i] } else { 0.0 })
            .collect();
        0.5 * m * grid::trapezoid(&vals, h)
    };
    let psi = fields_to_wavefunction(fields, params)?;
    let grad2: f64 = psi.values.windows(2).map(|w| (w[1] - w[0]).norm_sqr()).sum::<f64>() / h;
    Ok(KineticSplit {
        t_v: part(&fields.v),
        t_u: part(&fields.u),
        total: params.hbar().powi(2) / (2.0 * m) * grad2,
    })
}
