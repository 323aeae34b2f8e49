//! Perturbed initial data around the traveling wave.
//!
//! Both families vanish to third order at `x = 0`, so the boundary traces of
//! the wave (and with them the endpoint and compatibility conditions) are
//! left untouched.

use crate::error::{Error, Result};
use crate::problem::{Field, Grid, PhysicalParams};
use crate::profiles::{u_bar_at, v_bar_at};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    None,
    /// `v⁰ = v̄ + A (x/c)³ exp(-(x-c)²/(2σ²))`, `u⁰ = ū`.
    GaussianBump,
    /// `v⁰ = v̄`, `u⁰ = ū + A φ(x/σ)` with `φ(z) = z³e^{-z}` scaled to unit peak.
    W0Tilt,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::None => "none",
            Family::GaussianBump => "gaussian_bump",
            Family::W0Tilt => "w0_tilt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Family::None),
            "gaussian_bump" => Some(Family::GaussianBump),
            "w0_tilt" => Some(Family::W0Tilt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub family: Family,
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
}

impl Perturbation {
    pub fn none() -> Self {
        Self { family: Family::None, amplitude: 0.0, width: 1.0, center: 5.0 }
    }

    pub fn bump(amplitude: f64, width: f64, center: f64) -> Self {
        Self { family: Family::GaussianBump, amplitude, width, center }
    }

    pub fn tilt(amplitude: f64, width: f64) -> Self {
        Self { family: Family::W0Tilt, amplitude, width, center: 3.0 * width }
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidParams(format!(
                "perturbation amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        if !(self.width > 0.0) || !(self.center > 0.0) {
            return Err(Error::InvalidParams("perturbation width and center must be positive".into()));
        }
        Ok(())
    }

    /// Shape with unit amplitude at `x`.
    pub fn shape(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::None => 0.0,
            Family::GaussianBump => {
                let z = (x - self.center) / self.width;
                (x / self.center).powi(3) * (-0.5 * z * z).exp()
            }
            Family::W0Tilt => {
                let z = x / self.width;
                z.powi(3) * (-z).exp() / (27.0 * (-3.0f64).exp())
            }
        }
    }

    /// `(v⁰, u⁰)` on the grid.
    pub fn initial_fields(&self, params: &PhysicalParams, grid: &Grid) -> Result<(Field, Field)> {
        self.validate()?;
        let a = self.amplitude;
        let (dv, du) = match self.family {
            Family::None => (0.0, 0.0),
            Family::GaussianBump => (a, 0.0),
            Family::W0Tilt => (0.0, a),
        };
        let v0 = Field::from_fn(grid, |x| v_bar_at(params, x) + dv * self.shape(x))?;
        let u0 = Field::from_fn(grid, |x| u_bar_at(params, x) + du * self.shape(x))?;
        Ok((v0, u0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_vanish_at_origin_and_peak_near_center() {
        let b = Perturbation::bump(1.0, 1.0, 5.0);
        assert_eq!(b.shape(0.0), 0.0);
        assert!((b.shape(5.0) - 1.0).abs() < 1e-15);
        let t = Perturbation::tilt(1.0, 0.5);
        assert!((t.shape(1.5) - 1.0).abs() < 1e-14);
        assert!(t.shape(1e-3) < 1e-8);
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::None, Family::GaussianBump, Family::W0Tilt] {
            assert_eq!(Family::parse(f.name()), Some(f));
        }
        assert_eq!(Family::parse("sawtooth"), None);
    }

    #[test]
    fn negative_amplitude_rejected() {
        let p = PhysicalParams::reference();
        let g = Grid::new(10.0, 101).unwrap();
        assert!(Perturbation::bump(-1.0, 1.0, 5.0).initial_fields(&p, &g).is_err());
    }
}
