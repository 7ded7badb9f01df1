//! Uniform one-dimensional grids and the finite-difference helpers shared by
//! the field modules.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform grid over `[x_min, x_max]` including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Grid1D {
    pub const MIN_POINTS: usize = 64;

    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let grid = Self {
            x_min,
            x_max,
            n_points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite()) || self.x_max <= self.x_min {
            return Err(invalid("grid", "need finite x_min < x_max"));
        }
        if self.n_points < Self::MIN_POINTS {
            return Err(invalid(
                "grid.n_points",
                format!("{} < {}", self.n_points, Self::MIN_POINTS),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub(crate) fn ensure_same(&self, other: &Grid1D) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Composite trapezoid rule over the whole grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Running trapezoid integral, starting at zero.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Centered first derivative with second-order one-sided stencils at the ends.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    out
}

/// Centered second derivative; the end points copy their neighbours.
pub fn second_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h);
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    out
}

/// Shrinks a mask so that every retained point has both neighbours retained,
/// i.e. centered stencils only read masked values.
pub fn erode(mask: &[bool]) -> Vec<bool> {
    let n = mask.len();
    (0..n)
        .map(|i| i > 0 && i + 1 < n && mask[i - 1] && mask[i] && mask[i + 1])
        .collect()
}

/// Number of contiguous `true` runs in a mask.
pub fn segments(mask: &[bool]) -> usize {
    let mut count = 0;
    let mut inside = false;
    for &m in mask {
        if m && !inside {
            count += 1;
        }
        inside = m;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = Grid1D::new(0.0, 2.0, 65).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| 3.0 * x + 1.0).collect();
        assert_relative_eq!(trapezoid(&v, g.spacing()), 8.0, epsilon = 1e-12);
        let c = cumulative_trapezoid(&v, g.spacing());
        assert_relative_eq!(*c.last().unwrap(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_of_quadratic_is_exact() {
        let g = Grid1D::new(-1.0, 1.0, 101).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| x * x).collect();
        let d = derivative(&v, g.spacing());
        let d2 = second_derivative(&v, g.spacing());
        for (i, x) in g.points().iter().enumerate() {
            assert_relative_eq!(d[i], 2.0 * x, epsilon = 1e-10);
            assert_relative_eq!(d2[i], 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn mask_helpers() {
        let m = [false, true, true, true, false, true, true];
        assert_eq!(segments(&m), 2);
        assert_eq!(erode(&m), vec![false, false, true, false, false, false, false]);
    }

    #[test]
    fn rejects_small_grid() {
        assert!(Grid1D::new(0.0, 1.0, 10).is_err());
        assert!(Grid1D::new(1.0, 0.0, 100).is_err());
    }
}
