//! Problem constants, the uniform half-line mesh and nodal fields.

use std::ops::Index;

use crate::error::{Error, Result};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;

/// Computes the wave speed `s = (u_minus - u_plus) / (v_plus - 1)`.
pub fn derive_speed(u_minus: f64, u_plus: f64, v_plus: f64) -> Result<f64> {
    if !(v_plus > 1.0) {
        return Err(Error::InvalidParams("v_plus must exceed 1".into()));
    }
    if !(u_minus > u_plus) {
        return Err(Error::InvalidParams("u_minus must exceed u_plus".into()));
    }
    Ok((u_minus - u_plus) / (v_plus - 1.0))
}

/// Viscosity, far-field states and the derived wave speed and congested pressure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    mu: f64,
    v_plus: f64,
    u_minus: f64,
    u_plus: f64,
    s: f64,
    p_minus: f64,
}

impl PhysicalParams {
    pub fn new(mu: f64, v_plus: f64, u_minus: f64, u_plus: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParams("mu must be positive".into()));
        }
        if !u_minus.is_finite() || !u_plus.is_finite() || !v_plus.is_finite() {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        let s = derive_speed(u_minus, u_plus, v_plus)?;
        Ok(Self { mu, v_plus, u_minus, u_plus, s, p_minus: s * s * (v_plus - 1.0) })
    }

    /// mu = 1, v_plus = 2, u_minus = 1, u_plus = 0, so s = p_minus = 1.
    pub fn reference() -> Self {
        Self::new(1.0, 2.0, 1.0, 0.0).expect("reference parameters are valid")
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn v_plus(&self) -> f64 {
        self.v_plus
    }
    pub fn u_minus(&self) -> f64 {
        self.u_minus
    }
    pub fn u_plus(&self) -> f64 {
        self.u_plus
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    /// Decay rate `s v_plus / mu` of the profile tail.
    pub fn tail_rate(&self) -> f64 {
        self.s * self.v_plus / self.mu
    }

    /// Smallest R with `v_plus (v_plus - 1) exp(-tail_rate R) <= tol`.
    pub fn truncation_length(&self, tol: f64) -> f64 {
        (self.v_plus * (self.v_plus - 1.0) / tol).ln().max(0.0) / self.tail_rate()
    }
}

/// Uniform grid `x_i = i R / (n - 1)` on `[0, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    r: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidGrid(format!("R must be positive, got {r}")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        Ok(Self { r, n, dx: r / (n - 1) as f64 })
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.r
        } else {
            i as f64 * self.r / (self.n - 1) as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

/// Finite nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch { expected: grid.n(), found: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n()])
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { values: vec![0.0; grid.n()] }
    }

    /// Wraps values already known to be finite and of the right length.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: other.len() });
        }
        let values: Vec<f64> =
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn sub(&self, other: &Field) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}
