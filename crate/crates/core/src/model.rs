//! Physical parameters and the external potentials.
//!
//! Units are dimensionless by default (`hbar = mass = 1`), which puts the
//! harmonic ground-state targets at round numbers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Mass, action quantum, radiation-reaction time and field cutoff.
///
/// The diffusion coefficient `D = hbar / 2m` is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PhysicalParams {
    mass: f64,
    hbar: f64,
    tau: f64,
    cutoff: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(default = "one")]
    mass: f64,
    #[serde(default = "one")]
    hbar: f64,
    #[serde(default = "default_tau")]
    tau: f64,
    #[serde(default = "default_cutoff")]
    cutoff: f64,
}

fn one() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    1e-3
}
fn default_cutoff() -> f64 {
    20.0
}

impl TryFrom<RawParams> for PhysicalParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        PhysicalParams::new(r.mass, r.hbar, r.tau, r.cutoff)
    }
}

impl From<PhysicalParams> for RawParams {
    fn from(p: PhysicalParams) -> Self {
        RawParams {
            mass: p.mass,
            hbar: p.hbar,
            tau: p.tau,
            cutoff: p.cutoff,
        }
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            hbar: 1.0,
            tau: default_tau(),
            cutoff: default_cutoff(),
        }
    }
}

impl PhysicalParams {
    pub fn new(mass: f64, hbar: f64, tau: f64, cutoff: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("mass", format!("must be > 0, got {mass}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(invalid("hbar", format!("must be > 0, got {hbar}")));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be >= 0, got {tau}")));
        }
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(invalid("cutoff", format!("must be > 0, got {cutoff}")));
        }
        Ok(Self {
            mass,
            hbar,
            tau,
            cutoff,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `D = hbar / 2m`.
    pub fn diffusion(&self) -> f64 {
        self.hbar / (2.0 * self.mass)
    }

    pub fn with_tau(self, tau: f64) -> Result<Self> {
        Self::new(self.mass, self.hbar, tau, self.cutoff)
    }

    pub fn with_cutoff(self, cutoff: f64) -> Result<Self> {
        Self::new(self.mass, self.hbar, self.tau, cutoff)
    }

    pub fn with_hbar(self, hbar: f64) -> Result<Self> {
        Self::new(self.mass, hbar, self.tau, self.cutoff)
    }
}

/// External potentials. Harmonic stiffness is `m * omega0^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Harmonic { omega0: f64 },
    Quartic { k: f64 },
    Box { length: f64 },
    Free,
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Harmonic { omega0: 1.0 }
    }
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        let (name, value) = match *self {
            Potential::Harmonic { omega0 } => ("potential.omega0", omega0),
            Potential::Quartic { k } => ("potential.k", k),
            Potential::Box { length } => ("potential.length", length),
            Potential::Free => return Ok(()),
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid(name, format!("must be > 0, got {value}")));
        }
        Ok(())
    }

    pub fn is_confining(&self) -> bool {
        !matches!(self, Potential::Free)
    }

    /// `V(x)`; infinite outside a box.
    pub fn value(&self, mass: f64, x: f64) -> f64 {
        match *self {
            Potential::Harmonic { omega0 } => 0.5 * mass * omega0 * omega0 * x * x,
            Potential::Quartic { k } => k * x.powi(4),
            Potential::Box { length } => {
                if (0.0..=length).contains(&x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Potential::Free => 0.0,
        }
    }

    /// `f = -dV/dx`.
    #[inline]
    pub fn force(&self, mass: f64, x: f64) -> Result<f64> {
        Ok(match *self {
            Potential::Harmonic { omega0 } => -mass * omega0 * omega0 * x,
            Potential::Quartic { k } => -4.0 * k * x * x * x,
            Potential::Box { length } => {
                self.check_box(x, length)?;
                0.0
            }
            Potential::Free => 0.0,
        })
    }

    /// `df/dx = -d^2V/dx^2`, used by the order-reduced radiation reaction.
    #[inline]
    pub fn force_gradient(&self, mass: f64, x: f64) -> Result<f64> {
        Ok(match *self {
            Potential::Harmonic { omega0 } => -mass * omega0 * omega0,
            Potential::Quartic { k } => -12.0 * k * x * x,
            Potential::Box { length } => {
                self.check_box(x, length)?;
                0.0
            }
            Potential::Free => 0.0,
        })
    }

    fn check_box(&self, x: f64, length: f64) -> Result<()> {
        if x > 0.0 && x < length {
            Ok(())
        } else {
            Err(Error::OutsideDomain { x })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn force_examples() {
        let m = 1.0;
        assert_relative_eq!(
            Potential::Harmonic { omega0: 1.0 }.force(m, 0.5).unwrap(),
            -0.5
        );
        assert_eq!(Potential::Free.force(m, 3.2).unwrap(), 0.0);
        assert_relative_eq!(Potential::Quartic { k: 1.0 }.force(m, 1.0).unwrap(), -4.0);
    }

    #[test]
    fn force_gradient_examples() {
        let m = 1.0;
        let h = Potential::Harmonic { omega0: 2.0 };
        for x in [-3.0, 0.0, 1.7] {
            assert_relative_eq!(h.force_gradient(m, x).unwrap(), -4.0);
        }
        assert_eq!(Potential::Free.force_gradient(m, 0.3).unwrap(), 0.0);
        assert_relative_eq!(
            Potential::Quartic { k: 1.0 }.force_gradient(m, 1.0).unwrap(),
            -12.0
        );
    }

    #[test]
    fn box_domain() {
        let b = Potential::Box { length: 1.0 };
        assert!(b.force(1.0, 0.5).is_ok());
        assert_eq!(b.force(1.0, 1.5), Err(Error::OutsideDomain { x: 1.5 }));
        assert!(b.force_gradient(1.0, -0.1).is_err());
        assert!(b.value(1.0, 2.0).is_infinite());
        assert_eq!(b.value(1.0, 0.3), 0.0);
    }

    #[test]
    fn params_validation_and_diffusion() {
        assert!(PhysicalParams::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 0.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, -1e-3, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 0.0, 0.0).is_err());
        let p = PhysicalParams::new(2.0, 3.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(p.diffusion(), 0.75);
        assert!(Potential::Harmonic { omega0: 0.0 }.validate().is_err());
        assert!(Potential::Box { length: -1.0 }.validate().is_err());
    }

    #[test]
    fn params_roundtrip_through_serde_defaults() {
        let p: PhysicalParams = serde_json::from_str(r#"{"tau": 0.002}"#).unwrap();
        assert_eq!(p, PhysicalParams::default().with_tau(0.002).unwrap());
        assert!(serde_json::from_str::<PhysicalParams>(r#"{"mass": -1}"#).is_err());
        let v: Potential = serde_json::from_str(r#"{"kind":"quartic","k":1.0}"#).unwrap();
        assert_eq!(v, Potential::Quartic { k: 1.0 });
    }

    proptest! {
        #[test]
        fn force_matches_finite_difference(x in -2.0f64..2.0, which in 0usize..3, scale in 0.5f64..2.0) {
            let pot = match which {
                0 => Potential::Harmonic { omega0: scale },
                1 => Potential::Quartic { k: scale },
                _ => Potential::Free,
            };
            let m = 1.3;
            let h = 1e-4;
            let fd = -(pot.value(m, x + h) - pot.value(m, x - h)) / (2.0 * h);
            let f = pot.force(m, x).unwrap();
            prop_assert!((f - fd).abs() <= 1e-6 * (1.0 + f.abs()));
            let gfd = (pot.force(m, x + h).unwrap() - pot.force(m, x - h).unwrap()) / (2.0 * h);
            let g = pot.force_gradient(m, x).unwrap();
            prop_assert!((g - gfd).abs() <= 1e-6 * (1.0 + g.abs()));
        }
    }
}
