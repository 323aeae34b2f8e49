//! Implicit-Euler steppers for the two half-line parabolic problems.
//!
//! `step_v` advances `∂ₜv − ẏ∂ₓv − μ∂ₓₓa(v) = S` by Newton iteration,
//! `step_u` advances `∂ₜu − ẏ∂ₓu − μ∂ₓ(v⁻¹∂ₓu) = 0` through the generic
//! conservative solver `linear_parabolic_step`.

use crate::error::{Error, Result};
use crate::problem::{Field, Grid, PhysicalParams};
use crate::profiles::{u_bar_at, v_bar_at};

/// Slack on the maximum-principle assertion.
pub const EPS_MP: f64 = 1e-9;

/// `a(x) = ln x` on `[1/2, C̄]` with a C¹ extension whose slope stays in `[ν, 1/ν]`.
///
/// Below 1/2 the slope rises linearly from 2 to `1/ν` at `x = 0` and is
/// constant for `x < 0`. Above `C̄` it falls from `1/C̄` with slope `-1/C̄²`
/// (matching `ln''`) until it reaches `ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedLog {
    bar_c: f64,
    nu: f64,
}

impl RegularizedLog {
    /// Default floor `ν = 1/(2 C̄)`.
    pub fn new(bar_c: f64) -> Result<Self> {
        Self::with_nu(bar_c, 0.5 / bar_c)
    }

    pub fn with_nu(bar_c: f64, nu: f64) -> Result<Self> {
        if !(bar_c > 1.0) || !bar_c.is_finite() {
            return Err(Error::InvalidParams(format!("bar_C must exceed 1, got {bar_c}")));
        }
        if !(nu > 0.0 && nu <= 0.5 && nu <= 1.0 / bar_c) {
            return Err(Error::InvalidParams(format!(
                "nu must lie in (0, min(1/2, 1/bar_C)], got {nu}"
            )));
        }
        Ok(Self { bar_c, nu })
    }

    /// `C̄ = 2 sup v⁰`.
    pub fn for_data(v0: &Field) -> Result<Self> {
        Self::new(2.0 * v0.max())
    }

    pub fn bar_c(&self) -> f64 {
        self.bar_c
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn upper_knee(&self) -> f64 {
        let c = self.bar_c;
        c + c * c * (1.0 / c - self.nu)
    }

    /// `(a(x), a'(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let c = self.bar_c;
        let inv_nu = 1.0 / self.nu;
        if x >= 0.5 && x <= c {
            (x.ln(), 1.0 / x)
        } else if x < 0.5 {
            let k = inv_nu - 2.0;
            let xc = x.max(0.0);
            // ∫_{xc}^{1/2} (1/ν − 2k t) dt
            let drop = inv_nu * (0.5 - xc) - k * (0.25 - xc * xc);
            let at_xc = -std::f64::consts::LN_2 - drop;
            if x >= 0.0 {
                (at_xc, inv_nu - 2.0 * k * x)
            } else {
                (at_xc + inv_nu * x, inv_nu)
            }
        } else {
            let knee = self.upper_knee();
            let xc = x.min(knee);
            let d = xc - c;
            let at_xc = c.ln() + d / c - d * d / (2.0 * c * c);
            if x <= knee {
                (at_xc, 1.0 / c - d / (c * c))
            } else {
                (at_xc + self.nu * (x - knee), self.nu)
            }
        }
    }
}

pub fn regularized_a(x: f64, reg: &RegularizedLog) -> (f64, f64) {
    reg.eval(x)
}

/// Node-wise or constant coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum Coef {
    Scalar(f64),
    Nodal(Field),
}

impl Coef {
    fn at(&self, i: usize) -> f64 {
        match self {
            Coef::Scalar(c) => *c,
            Coef::Nodal(f) => f[i],
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        match self {
            Coef::Scalar(c) if !c.is_finite() => Err(Error::NonFinite { index: 0 }),
            Coef::Nodal(f) if f.len() != grid.n() => {
                Err(Error::LengthMismatch { expected: grid.n(), found: f.len() })
            }
            _ => Ok(()),
        }
    }
}

/// Coefficients of `∂ₜu + ∂ₓ(b u) + c u − ∂ₓ(a ∂ₓu) = f`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParabolicCoeffs {
    a: Field,
    b: Coef,
    c: Coef,
    f: Coef,
    alpha: f64,
}

impl LinearParabolicCoeffs {
    pub fn new(a: Field, b: Coef, c: Coef, f: Coef) -> Result<Self> {
        let alpha = a.min();
        if !(alpha > 0.0) {
            return Err(Error::InvalidParams(format!(
                "diffusion must be bounded below by a positive constant, min a = {alpha}"
            )));
        }
        Ok(Self { a, b, c, f, alpha })
    }

    /// `inf a`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) -> std::result::Result<(), usize> {
    let n = diag.len();
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(0);
    }
    rhs[0] /= pivot;
    for i in 1..n {
        scratch[i] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i] * scratch[i];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(i);
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

/// One implicit-Euler step with Dirichlet data at both ends.
pub fn linear_parabolic_step(
    state: &Field,
    coeffs: &LinearParabolicCoeffs,
    grid: &Grid,
    dt: f64,
    left_bc: f64,
    right_bc: f64,
) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if state.len() != grid.n() || coeffs.a.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: state.len() });
    }
    coeffs.b.check(grid)?;
    coeffs.c.check(grid)?;
    coeffs.f.check(grid)?;
    let n = grid.n();
    let dx = grid.dx();
    let m = n - 2;
    let (mut lo, mut di, mut up, mut rhs) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let a = coeffs.a.values();
    let inv_dx2 = 1.0 / (dx * dx);
    let inv_2dx = 0.5 / dx;
    for k in 0..m {
        let i = k + 1;
        let a_minus = 0.5 * (a[i - 1] + a[i]) * inv_dx2;
        let a_plus = 0.5 * (a[i] + a[i + 1]) * inv_dx2;
        lo[k] = -coeffs.b.at(i - 1) * inv_2dx - a_minus;
        up[k] = coeffs.b.at(i + 1) * inv_2dx - a_plus;
        di[k] = 1.0 / dt + coeffs.c.at(i) + a_minus + a_plus;
        rhs[k] = state[i] / dt + coeffs.f.at(i);
    }
    rhs[0] -= lo[0] * left_bc;
    rhs[m - 1] -= up[m - 1] * right_bc;
    let mut scratch = vec![0.0; m];
    solve_tridiagonal(&lo, &di, &up, &mut rhs, &mut scratch).map_err(|k| Error::ZeroPivot {
        row: k + 1,
        dt,
        min_diffusion: coeffs.alpha,
    })?;
    let mut out = Vec::with_capacity(n);
    out.push(left_bc);
    out.extend_from_slice(&rhs);
    out.push(right_bc);
    Field::new(grid, out)
}

/// One step of the u-equation with `u(0) = u₋`, `u(R) = ū(R)`.
pub fn step_u(
    u: &Field,
    v: &Field,
    ydot: f64,
    grid: &Grid,
    dt: f64,
    params: &PhysicalParams,
) -> Result<Field> {
    if v.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: v.len() });
    }
    let a = v.map(|x| params.mu() / x)?;
    let coeffs =
        LinearParabolicCoeffs::new(a, Coef::Scalar(-ydot), Coef::Scalar(0.0), Coef::Scalar(0.0))?;
    linear_parabolic_step(u, &coeffs, grid, dt, params.u_minus(), u_bar_at(params, grid.r()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
    /// Whether the step had to be split in two halves.
    pub halved: bool,
}

/// One step of the v-equation with `v(0) = 1`, `v(R) = v̄(R)`.
pub fn step_v(
    v: &Field,
    ydot: f64,
    source: &Field,
    grid: &Grid,
    dt: f64,
    reg: &RegularizedLog,
    params: &PhysicalParams,
) -> Result<Field> {
    step_v_with(v, ydot, source, grid, dt, reg, params, &NewtonSettings::default()).map(|r| r.0)
}

#[allow(clippy::too_many_arguments)]
pub fn step_v_with(
    v: &Field,
    ydot: f64,
    source: &Field,
    grid: &Grid,
    dt: f64,
    reg: &RegularizedLog,
    params: &PhysicalParams,
    newton: &NewtonSettings,
) -> Result<(Field, NewtonStats)> {
    if v.len() != grid.n() || source.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: v.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let right = v_bar_at(params, grid.r());
    let mut ws = NewtonWorkspace::new(grid.n());
    let out = match ws.solve(v.values(), ydot, source.values(), grid, dt, reg, params, right, newton)
    {
        Ok((vals, stats)) => (vals, stats),
        Err(Error::NewtonDiverged { .. }) => {
            let (half, s1) = ws.solve(
                v.values(),
                ydot,
                source.values(),
                grid,
                0.5 * dt,
                reg,
                params,
                right,
                newton,
            )?;
            let (vals, s2) =
                ws.solve(&half, ydot, source.values(), grid, 0.5 * dt, reg, params, right, newton)?;
            let stats = NewtonStats {
                iterations: s1.iterations + s2.iterations,
                residual: s2.residual,
                halved: true,
            };
            (vals, stats)
        }
        Err(e) => return Err(e),
    };
    check_maximum_principle(&out.0, reg)?;
    Ok((Field::new(grid, out.0)?, out.1))
}

pub(crate) fn check_maximum_principle(v: &[f64], reg: &RegularizedLog) -> Result<()> {
    let lower = 1.0 - EPS_MP;
    let upper = reg.bar_c() + EPS_MP;
    for (index, &value) in v.iter().enumerate().skip(1) {
        if !(value > lower && value <= upper) {
            return Err(Error::MaximumPrincipleViolated { index, value, lower, upper });
        }
    }
    Ok(())
}

/// Reusable buffers for the Newton iteration of the v-step.
pub(crate) struct NewtonWorkspace {
    a: Vec<f64>,
    da: Vec<f64>,
    res: Vec<f64>,
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    delta: Vec<f64>,
    scratch: Vec<f64>,
    trial: Vec<f64>,
}

impl NewtonWorkspace {
    pub(crate) fn new(n: usize) -> Self {
        let m = n - 2;
        Self {
            a: vec![0.0; n],
            da: vec![0.0; n],
            res: vec![0.0; m],
            lo: vec![0.0; m],
            di: vec![0.0; m],
            up: vec![0.0; m],
            delta: vec![0.0; m],
            scratch: vec![0.0; m],
            trial: vec![0.0; n],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn residual(
        &mut self,
        v: &[f64],
        old: &[f64],
        ydot: f64,
        source: &[f64],
        dx: f64,
        dt: f64,
        reg: &RegularizedLog,
        mu: f64,
    ) -> f64 {
        let n = v.len();
        for i in 0..n {
            let (a, da) = reg.eval(v[i]);
            self.a[i] = a;
            self.da[i] = da;
        }
        let inv_dx2 = mu / (dx * dx);
        let adv = ydot * 0.5 / dx;
        let mut worst: f64 = 0.0;
        for i in 1..n - 1 {
            let r = (v[i] - old[i]) / dt
                - adv * (v[i + 1] - v[i - 1])
                - inv_dx2 * (self.a[i + 1] - 2.0 * self.a[i] + self.a[i - 1])
                - source[i];
            self.res[i - 1] = r;
            worst = worst.max(r.abs());
        }
        worst
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn solve(
        &mut self,
        old: &[f64],
        ydot: f64,
        source: &[f64],
        grid: &Grid,
        dt: f64,
        reg: &RegularizedLog,
        params: &PhysicalParams,
        right: f64,
        newton: &NewtonSettings,
    ) -> Result<(Vec<f64>, NewtonStats)> {
        let n = grid.n();
        let dx = grid.dx();
        let mu = params.mu();
        let mut v = old.to_vec();
        v[0] = 1.0;
        v[n - 1] = right;
        let mut r = self.residual(&v, old, ydot, source, dx, dt, reg, mu);
        let inv_dx2 = mu / (dx * dx);
        let adv = ydot * 0.5 / dx;
        let mut iterations = 0;
        while r > newton.tol {
            if iterations == newton.max_iter {
                return Err(Error::NewtonDiverged { iterations, residual: r });
            }
            iterations += 1;
            for k in 0..n - 2 {
                let i = k + 1;
                self.lo[k] = adv - inv_dx2 * self.da[i - 1];
                self.di[k] = 1.0 / dt + 2.0 * inv_dx2 * self.da[i];
                self.up[k] = -adv - inv_dx2 * self.da[i + 1];
                self.delta[k] = -self.res[k];
            }
            solve_tridiagonal(&self.lo, &self.di, &self.up, &mut self.delta, &mut self.scratch)
                .map_err(|k| Error::ZeroPivot {
                    row: k + 1,
                    dt,
                    min_diffusion: mu * reg.nu(),
                })?;
            let mut lambda = 1.0;
            loop {
                self.trial.copy_from_slice(&v);
                for k in 0..n - 2 {
                    self.trial[k + 1] += lambda * self.delta[k];
                }
                let trial = std::mem::take(&mut self.trial);
                let r_new = self.residual(&trial, old, ydot, source, dx, dt, reg, mu);
                self.trial = trial;
                let finite = r_new.is_finite();
                if (finite && r_new < r) || lambda < 1e-3 {
                    if !finite {
                        return Err(Error::NewtonDiverged { iterations, residual: r });
                    }
                    std::mem::swap(&mut v, &mut self.trial);
                    r = r_new;
                    break;
                }
                lambda *= 0.5;
            }
        }
        Ok((v, NewtonStats { iterations, residual: r, halved: false }))
    }
}

/// C² cutoff: 1 on `x ≤ R−2`, 0 on `x ≥ R−1`, smoothstep in between.
pub fn cutoff_chi(x: f64, r: f64) -> f64 {
    let t = x - (r - 2.0);
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}
