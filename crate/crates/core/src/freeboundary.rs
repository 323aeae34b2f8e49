//! Free-boundary dynamics in the shifted frame.
//!
//! Given a trial boundary path `ỹ`, the map `T` solves the v-equation with
//! the transported source `∂ₓw⁰(x + ỹ)` and then the u-equation along the
//! same path, and returns the path whose speed is
//! `−μ ∂ₓu(t, 0⁺) / (u₋ − w⁰(ỹ(t)))`. Long horizons are covered by chaining
//! Picard solves on short windows.

use crate::discrete::{
    cumulative_trapezoid, d1, d2, l2_sq, shift_sample_into, tail_integral, trace0, trace0_slice,
    Tabulated,
};
use crate::error::{Error, HypothesisFailure, Result};
use crate::parabolic::{
    check_maximum_principle, cutoff_chi, step_u, NewtonSettings, NewtonWorkspace, RegularizedLog,
};
use crate::problem::{Field, Grid, PhysicalParams};
use crate::profiles::{
    dv_bar_at, effective_velocity_about_wave, effective_velocity_from_log, traveling_wave, u_bar_at, v_bar_at,
};

/// Smallest admissible `u₋ − w⁰(ỹ)`.
pub const DENOM_FLOOR: f64 = 1e-8;
/// Endpoint tolerance for `v⁰(0) = 1` and `u⁰(0) = u₋`.
pub const ENDPOINT_TOL: f64 = 1e-10;
/// Perturbations must have decayed below this at `x = R`.
pub const DECAY_TOL: f64 = 1e-6;

/// `compat_tol = 10 (dx² + dt)`.
pub fn compat_tol(grid: &Grid, dt: f64) -> f64 {
    10.0 * (grid.dx() * grid.dx() + dt)
}

/// Discrete `H¹(0,T)` norm of nodal values with step `dt`.
pub fn h1_time_norm(f: &[f64], dt: f64) -> f64 {
    h1_time_sq(f, dt).sqrt()
}

pub(crate) fn h1_time_sq(f: &[f64], dt: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let l2 = l2_sq(f, dt);
    let d: f64 = f.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / dt;
    l2 + d
}

/// Discrete `H²(0,T)` norm; adds second differences to the `H¹` norm.
pub fn h2_time_norm(f: &[f64], dt: f64) -> f64 {
    let mut total = h1_time_sq(f, dt);
    if f.len() >= 3 {
        total += f
            .windows(3)
            .map(|w| {
                let s = (w[2] - 2.0 * w[1] + w[0]) / (dt * dt);
                s * s
            })
            .sum::<f64>()
            * dt;
    }
    total.sqrt()
}

/// Boundary position and speed on uniform time nodes `t_k = t₀ + k dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPath {
    t0: f64,
    dt: f64,
    y: Vec<f64>,
    ydot: Vec<f64>,
}

impl BoundaryPath {
    /// Path from `t = 0`, `y(0) = 0`, with `y` the cumulative trapezoid of `ydot`.
    pub fn from_speeds(dt: f64, ydot: Vec<f64>) -> Result<Self> {
        Self::from_speeds_at(0.0, 0.0, dt, ydot)
    }

    pub(crate) fn from_speeds_at(t0: f64, y0: f64, dt: f64, ydot: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InadmissiblePath(format!("time step must be positive, got {dt}")));
        }
        if ydot.is_empty() {
            return Err(Error::InadmissiblePath("empty path".into()));
        }
        if let Some(k) = ydot.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InadmissiblePath(format!(
                "boundary speed {} at t = {} is not positive",
                ydot[k],
                t0 + k as f64 * dt
            )));
        }
        let y = cumulative_trapezoid(&ydot, dt, y0);
        Ok(Self { t0, dt, y, ydot })
    }

    /// `y(t) = slope · t` over `steps` steps.
    pub fn line(slope: f64, dt: f64, steps: usize) -> Result<Self> {
        Self::from_speeds(dt, vec![slope; steps + 1])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.ydot.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ydot.is_empty()
    }
    pub fn steps(&self) -> usize {
        self.ydot.len() - 1
    }
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
    pub fn t_final(&self) -> f64 {
        self.t(self.steps())
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn ydot(&self) -> &[f64] {
        &self.ydot
    }

    /// `β = ẏ − s` per node.
    pub fn beta(&self, params: &PhysicalParams) -> Vec<f64> {
        self.ydot.iter().map(|v| v - params.s()).collect()
    }

    /// Running `‖ẏ − s‖_{H¹(0,t_k)}` for every node.
    pub fn running_beta_h1(&self, params: &PhysicalParams) -> Vec<f64> {
        let beta = self.beta(params);
        let mut out = Vec::with_capacity(beta.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..beta.len() {
            let (a, b) = (beta[k - 1], beta[k]);
            acc += 0.5 * self.dt * (a * a + b * b) + (b - a) * (b - a) / self.dt;
            out.push(acc.sqrt());
        }
        out
    }

    fn append(&mut self, other: &BoundaryPath) {
        self.y.extend_from_slice(&other.y[1..]);
        self.ydot.extend_from_slice(&other.ydot[1..]);
    }
}

/// One checked item of the initial-data validation.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisItem {
    pub label: &'static str,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HypothesisReport {
    pub items: Vec<HypothesisItem>,
    /// `[−(∂ₓu⁰)²/∂ₓv⁰ − μ∂ₓv⁰∂ₓu⁰ + μ∂ₓ²u⁰]` at `0⁺`.
    pub compatibility_residual: f64,
    pub compatibility_tol: f64,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// Validated initial data with its derived fields.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub v0: Field,
    pub u0: Field,
    /// `u⁰ − μ∂ₓ ln v⁰`
    pub w0: Field,
    pub dw0: Field,
    pub d2w0: Field,
    /// `−∫ₓ^R (v⁰ − v̄)`
    pub big_v0: Field,
    /// `−∫ₓ^R (w⁰ − u₊)`
    pub big_w0: Field,
    pub hypothesis_report: HypothesisReport,
    w0_tab: Tabulated,
    dw0_tab: Tabulated,
    d2w0_tab: Tabulated,
    source_tab: Tabulated,
}

impl InitialData {
    /// `w⁰(y)` by monotone cubic interpolation, `u₊` beyond `R`.
    pub fn w0_at(&self, y: f64) -> f64 {
        self.w0_tab.eval(y)
    }
    pub fn dw0_at(&self, y: f64) -> f64 {
        self.dw0_tab.eval(y)
    }
    pub fn d2w0_at(&self, y: f64) -> f64 {
        self.d2w0_tab.eval(y)
    }
    pub fn w0_table(&self) -> &Tabulated {
        &self.w0_tab
    }
    pub fn dw0_table(&self) -> &Tabulated {
        &self.dw0_tab
    }
    /// `χ_R ∂ₓw⁰`, vanishing beyond `R`.
    pub fn source_table(&self) -> &Tabulated {
        &self.source_tab
    }

    /// Data speed `−∂ₓu⁰(0)/∂ₓv⁰(0)`.
    pub fn compatible_speed(&self, grid: &Grid) -> Result<f64> {
        Ok(-trace0(&self.u0, grid, 1)? / trace0(&self.v0, grid, 1)?)
    }
}

/// Checks (H3)-(H5) on the grid and derives `w⁰, V⁰, W⁰`.
pub fn validate_hypotheses(
    v0: &Field,
    u0: &Field,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<InitialData> {
    if v0.len() != grid.n() || u0.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: v0.len().min(u0.len()) });
    }
    let mu = params.mu();
    let dv = trace0(v0, grid, 1)?;
    let du = trace0(u0, grid, 1)?;
    let ddu = trace0(u0, grid, 2)?;
    let compat = -du * du / dv - mu * dv * du + mu * ddu;
    let scale = 1.0 + (du * du / dv).abs() + (mu * dv * du).abs() + (mu * ddu).abs();
    let compat_tol = 10.0 * grid.dx() * grid.dx() * scale;
    let r = grid.r();
    let v_gap = v0.values()[1..].iter().map(|&v| 1.0 - v).fold(f64::NEG_INFINITY, f64::max);

    let mut items = vec![
        HypothesisItem {
            label: "H3: v0(0) = 1",
            residual: v0[0] - 1.0,
            passed: (v0[0] - 1.0).abs() <= ENDPOINT_TOL,
        },
        HypothesisItem {
            label: "H3: u0(0) = u_minus",
            residual: u0[0] - params.u_minus(),
            passed: (u0[0] - params.u_minus()).abs()
                <= ENDPOINT_TOL * params.u_minus().abs().max(1.0),
        },
        HypothesisItem {
            label: "H4: non-degeneracy, dv0(0+) > 0",
            residual: dv,
            passed: dv > 0.0,
        },
        HypothesisItem {
            label: "H4: non-degeneracy, du0(0+) < 0",
            residual: du,
            passed: du < 0.0,
        },
        HypothesisItem { label: "H4: v0 > 1 on x > 0", residual: v_gap, passed: v_gap < 0.0 },
        HypothesisItem {
            label: "H5: decay of v0 - v_bar at R",
            residual: v0.last() - v_bar_at(params, r),
            passed: (v0.last() - v_bar_at(params, r)).abs() <= DECAY_TOL,
        },
        HypothesisItem {
            label: "H5: decay of u0 - u_bar at R",
            residual: u0.last() - u_bar_at(params, r),
            passed: (u0.last() - u_bar_at(params, r)).abs() <= DECAY_TOL,
        },
    ];
    // the compatibility bracket divides by dv0(0+)
    if dv > 0.0 {
        items.push(HypothesisItem {
            label: "H3: compatibility",
            residual: compat,
            passed: compat.abs() <= compat_tol,
        });
    }
    let failures: Vec<HypothesisFailure> = items
        .iter()
        .filter(|i| !i.passed)
        .map(|i| HypothesisFailure { label: i.label.to_string(), residual: i.residual })
        .collect();
    if !failures.is_empty() {
        return Err(Error::HypothesisViolated(failures));
    }

    let profiles = traveling_wave(params, grid);
    if let Some(index) = v0.values().iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositive { index, value: v0[index] });
    }
    let w0 = Field::from_vec_unchecked(effective_velocity_about_wave(
        u0.values(),
        v0.values(),
        &profiles,
        params,
        grid.dx(),
    ));
    let dx = grid.dx();
    let dw0 = Field::from_vec_unchecked(d1(w0.values(), dx));
    let d2w0 = Field::from_vec_unchecked(d2(w0.values(), dx));
    let dv0: Vec<f64> = v0.values().iter().zip(profiles.v_bar.values()).map(|(a, b)| a - b).collect();
    let big_v0 = Field::from_vec_unchecked(tail_integral(&dv0, dx));
    let dw: Vec<f64> = w0.values().iter().map(|w| w - params.u_plus()).collect();
    let big_w0 = Field::from_vec_unchecked(tail_integral(&dw, dx));
    let source: Vec<f64> =
        dw0.values().iter().enumerate().map(|(i, d)| d * cutoff_chi(grid.x(i), r)).collect();
    let w0_tab = Tabulated::new(&w0, grid, params.u_plus())?;
    let dw0_tab = Tabulated::new(&dw0, grid, 0.0)?;
    let d2w0_tab = Tabulated::new(&d2w0, grid, 0.0)?;
    let source_tab = Tabulated::new(&Field::from_vec_unchecked(source), grid, 0.0)?;
    Ok(InitialData {
        v0: v0.clone(),
        u0: u0.clone(),
        w0,
        dw0,
        d2w0,
        big_v0,
        big_w0,
        hypothesis_report: HypothesisReport {
            items,
            compatibility_residual: compat,
            compatibility_tol: compat_tol,
        },
        w0_tab,
        dw0_tab,
        d2w0_tab,
        source_tab,
    })
}

/// `x̃′ = −μ ∂ₓu(0⁺) / (u₋ − w⁰(x̃))`.
pub fn boundary_velocity(
    u: &Field,
    w0_at_y: f64,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<f64> {
    boundary_velocity_slice(u.values(), w0_at_y, grid.dx(), params)
}

fn boundary_velocity_slice(u: &[f64], w0_at_y: f64, dx: f64, params: &PhysicalParams) -> Result<f64> {
    let denominator = params.u_minus() - w0_at_y;
    if !(denominator >= DENOM_FLOOR) {
        return Err(Error::DenominatorTooSmall { denominator, floor: DENOM_FLOOR });
    }
    Ok(-params.mu() * trace0_slice(u, dx, 1)? / denominator)
}

/// `−μ∂ₓu(0⁺) ≈ ẏ A + B` read off the conservative flux of the u-scheme,
/// `F = ẏu + (μ/v)∂ₓu`, at the first half node, corrected by the half-cell
/// balance `F(0) = F_{1/2} − (F_{3/2} − F_{1/2})/8`. Every discrete steady
/// wave then returns exactly its own speed.
fn boundary_flux(u: &[f64], v: &[f64], dx: f64, mu: f64) -> (f64, f64) {
    let m0 = 0.5 * (u[0] + u[1]);
    let m1 = 0.5 * (u[1] + u[2]);
    let d0 = 0.5 * mu * (1.0 / v[0] + 1.0 / v[1]) * (u[1] - u[0]) / dx;
    let d1 = 0.5 * mu * (1.0 / v[1] + 1.0 / v[2]) * (u[2] - u[1]) / dx;
    (u[0] - m0 + (m1 - m0) / 8.0, -d0 + (d1 - d0) / 8.0)
}

/// Numerical settings of the coupled solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub dt: f64,
    pub newton: NewtonSettings,
    /// Picard stopping tolerance on the discrete `H¹` distance of speeds.
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Window length; `None` means `0.25 / s`.
    pub window: Option<f64>,
    /// Snapshot every `stride` steps (the first and last step are always kept).
    pub stride: usize,
}

impl SolverSettings {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            newton: NewtonSettings::default(),
            picard_tol: 1e-8,
            max_iter: 30,
            window: None,
            stride: 10,
        }
    }

    fn window_steps(&self, params: &PhysicalParams) -> usize {
        let w = self.window.unwrap_or(0.25 / params.s());
        ((w / self.dt).round() as usize).max(1)
    }
}

/// Scalar norms of one time node; the field-derivative items need one or two
/// previous nodes and are absent at the start.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    pub t: f64,
    /// Speed the fields were advanced with.
    pub ydot_in: f64,
    pub p_s: f64,
    pub l2_v_err: f64,
    pub h1_v_err: f64,
    pub linf_v_err: f64,
    pub l1_v_err: f64,
    pub l2_u_err: f64,
    /// `‖V‖²` and `V(0)` for the integrated perturbation.
    pub big_v_l2_sq: f64,
    pub big_v_at0: f64,
    /// `‖∂ₓg‖², ‖∂ₓ²g‖², ‖∂ₓ³g‖²` with `g = v − v̄`.
    pub dxg_sq: f64,
    pub dxxg_sq: f64,
    pub dxxxg_sq: f64,
    /// `‖h‖², ‖∂ₓh‖², ‖∂ₓ²h‖²` with `h = u − ū`.
    pub h_sq: f64,
    pub dxh_sq: f64,
    pub dxxh_sq: f64,
    /// `‖G‖²` for `G = χ_R∂ₓw⁰(·+ỹ) + (ỹ′−s)∂ₓv̄`.
    pub source_sq: f64,
    pub first: Option<TimeDerivatives>,
    pub second: Option<SecondTimeDerivatives>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimeDerivatives {
    pub dtv_sq: f64,
    pub dtdxg_sq: f64,
    pub dtdxxg_sq: f64,
    pub dth_sq: f64,
    pub dtdxh_sq: f64,
    pub dtdxxh_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SecondTimeDerivatives {
    pub dttg_sq: f64,
    pub dtth_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub v: Field,
    pub u: Field,
}

/// Convergence history of one Picard window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowLog {
    pub t_start: f64,
    pub t_end: f64,
    /// `H¹` distances between successive speed iterates.
    pub distances: Vec<f64>,
    pub h2_distances: Vec<f64>,
}

impl WindowLog {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    /// `d_{k+1}/d_k` for consecutive iterates.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: BoundaryPath,
    pub p_s: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub windows: Vec<WindowLog>,
    /// `|ẏ(0) + ∂ₓu⁰(0)/∂ₓv⁰(0)|` on the converged path.
    pub initial_speed_mismatch: f64,
    /// `C̄` of the regularized logarithm.
    pub bar_c: f64,
    pub newton_halvings: usize,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.path.dt()
    }
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
    pub fn picard_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations()).sum()
    }
}

#[derive(Clone)]
struct State {
    v: Vec<f64>,
    u: Vec<f64>,
    dtv: Option<Vec<f64>>,
    dtu: Option<Vec<f64>>,
    /// Speed of the step that produced this state.
    ydot: Option<f64>,
}

struct WindowOutput {
    out_ydot: Vec<f64>,
    end: State,
    p_s: Vec<f64>,
    records: Vec<StepRecord>,
    snapshots: Vec<Snapshot>,
    halvings: usize,
}

/// Shared data of one coupled solve.
struct Engine<'a> {
    init: &'a InitialData,
    grid: &'a Grid,
    params: &'a PhysicalParams,
    reg: RegularizedLog,
    settings: SolverSettings,
    v_bar: Vec<f64>,
    u_bar: Vec<f64>,
    dv_bar: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        init: &'a InitialData,
        grid: &'a Grid,
        params: &'a PhysicalParams,
        settings: SolverSettings,
    ) -> Result<(Self, State)> {
        if !(settings.dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", settings.dt)));
        }
        let profiles = traveling_wave(params, grid);
        let r = grid.r();
        let vr = v_bar_at(params, r);
        let ur = u_bar_at(params, r);
        // truncated data: v⁰χ_R + v̄(R)(1 − χ_R), likewise for u⁰
        let v: Vec<f64> = (0..grid.n())
            .map(|i| {
                let c = cutoff_chi(grid.x(i), r);
                init.v0[i] * c + vr * (1.0 - c)
            })
            .collect();
        let u: Vec<f64> = (0..grid.n())
            .map(|i| {
                let c = cutoff_chi(grid.x(i), r);
                init.u0[i] * c + ur * (1.0 - c)
            })
            .collect();
        let reg = RegularizedLog::for_data(&init.v0)?;
        let dv_bar = grid.nodes().iter().map(|&x| dv_bar_at(params, x)).collect();
        let engine = Self {
            init,
            grid,
            params,
            reg,
            settings,
            v_bar: profiles.v_bar.into_values(),
            u_bar: profiles.u_bar.into_values(),
            dv_bar,
        };
        Ok((engine, State { v, u, dtv: None, dtu: None, ydot: None }))
    }

    /// `(ẏ, p_s)` from the boundary flux of the u-scheme; `ydot = None` solves
    /// the relation for the speed itself.
    fn velocity(&self, u: &[f64], v: &[f64], ydot: Option<f64>, y: f64, t: f64) -> Result<(f64, f64)> {
        let denominator = self.params.u_minus() - self.init.w0_at(y);
        if !(denominator >= DENOM_FLOOR) {
            return Err(Error::DenominatorTooSmall { denominator, floor: DENOM_FLOOR }.at_time(t));
        }
        let (a, b) = boundary_flux(u, v, self.grid.dx(), self.params.mu());
        let ydot = match ydot {
            Some(c) => c,
            None => b / (denominator - a),
        };
        let p_s = ydot * a + b;
        Ok((p_s / denominator, p_s))
    }

    /// Advances `start` along the given path; `record` collects norms and snapshots.
    fn run(
        &self,
        start: &State,
        path: &BoundaryPath,
        first_step: usize,
        record: bool,
    ) -> Result<WindowOutput> {
        let n = self.grid.n();
        let dt = path.dt();
        let steps = path.steps();
        let mut out_ydot = Vec::with_capacity(steps + 1);
        let mut p_s = Vec::with_capacity(steps + 1);
        let (y0, p0) = self.velocity(&start.u, &start.v, start.ydot, path.y()[0], path.t(0))?;
        out_ydot.push(y0);
        p_s.push(p0);
        let mut state = start.clone();
        let mut source = vec![0.0; n];
        let mut ws = NewtonWorkspace::new(n);
        let mut records = Vec::new();
        let mut snapshots = Vec::new();
        let mut halvings = 0;
        let right = v_bar_at(self.params, self.grid.r());
        for k in 1..=steps {
            let t = path.t(k);
            let ydot = path.ydot()[k];
            shift_sample_into(self.init.source_table(), path.y()[k], &mut source);
            let (v_new, halved) = self.step_v(&mut ws, &state.v, ydot, &source, dt, right)
                .map_err(|e| e.at_time(t))?;
            halvings += halved as usize;
            let u_field = Field::from_vec_unchecked(std::mem::take(&mut state.u));
            let v_field = Field::from_vec_unchecked(v_new);
            let u_new = step_u(&u_field, &v_field, ydot, self.grid, dt, self.params)
                .map_err(|e| e.at_time(t))?;
            let (v_new, u_old) = (v_field.into_values(), u_field.into_values());
            let u_new = u_new.into_values();
            let (yk, pk) = self.velocity(&u_new, &v_new, Some(ydot), path.y()[k], t)?;
            out_ydot.push(yk);
            p_s.push(pk);
            let dtv: Vec<f64> = v_new.iter().zip(&state.v).map(|(a, b)| (a - b) / dt).collect();
            let dtu: Vec<f64> = u_new.iter().zip(&u_old).map(|(a, b)| (a - b) / dt).collect();
            let step = first_step + k;
            if record {
                let mut rec = self.record(t, ydot, *p_s.last().unwrap(), &v_new, &u_new, &source);
                rec.first = Some(self.first_derivatives(&dtv, &dtu));
                if let (Some(pv), Some(pu)) = (&state.dtv, &state.dtu) {
                    let dttg: Vec<f64> = dtv.iter().zip(pv).map(|(a, b)| (a - b) / dt).collect();
                    let dtth: Vec<f64> = dtu.iter().zip(pu).map(|(a, b)| (a - b) / dt).collect();
                    let dx = self.grid.dx();
                    rec.second = Some(SecondTimeDerivatives {
                        dttg_sq: l2_sq(&dttg, dx),
                        dtth_sq: l2_sq(&dtth, dx),
                    });
                }
                records.push(rec);
                if step % self.settings.stride == 0 || k == steps {
                    snapshots.push(Snapshot {
                        step,
                        t,
                        v: Field::new(self.grid, v_new.clone())?,
                        u: Field::new(self.grid, u_new.clone())?,
                    });
                }
            }
            state = State { v: v_new, u: u_new, dtv: Some(dtv), dtu: Some(dtu), ydot: Some(ydot) };
        }
        Ok(WindowOutput { out_ydot, end: state, p_s, records, snapshots, halvings })
    }

    fn step_v(
        &self,
        ws: &mut NewtonWorkspace,
        v: &[f64],
        ydot: f64,
        source: &[f64],
        dt: f64,
        right: f64,
    ) -> Result<(Vec<f64>, bool)> {
        let (g, p, reg, nt) = (self.grid, self.params, &self.reg, &self.settings.newton);
        let (out, halved) = match ws.solve(v, ydot, source, g, dt, reg, p, right, nt) {
            Ok((out, _)) => (out, false),
            Err(Error::NewtonDiverged { .. }) => {
                let (half, _) = ws.solve(v, ydot, source, g, 0.5 * dt, reg, p, right, nt)?;
                (ws.solve(&half, ydot, source, g, 0.5 * dt, reg, p, right, nt)?.0, true)
            }
            Err(e) => return Err(e),
        };
        check_maximum_principle(&out, reg)?;
        Ok((out, halved))
    }

    fn record(
        &self,
        t: f64,
        ydot: f64,
        p_s: f64,
        v: &[f64],
        u: &[f64],
        source: &[f64],
    ) -> StepRecord {
        let dx = self.grid.dx();
        let g: Vec<f64> = v.iter().zip(&self.v_bar).map(|(a, b)| a - b).collect();
        let h: Vec<f64> = u.iter().zip(&self.u_bar).map(|(a, b)| a - b).collect();
        let dg = d1(&g, dx);
        let dgg = d2(&g, dx);
        let dggg = d1(&dgg, dx);
        let dh = d1(&h, dx);
        let dhh = d2(&h, dx);
        let big_v = tail_integral(&g, dx);
        let beta = ydot - self.params.s();
        let big_g: Vec<f64> = source.iter().zip(&self.dv_bar).map(|(s, d)| s + beta * d).collect();
        let abs_g: Vec<f64> = g.iter().map(|x| x.abs()).collect();
        let g_sq = l2_sq(&g, dx);
        let dxg_sq = l2_sq(&dg, dx);
        let h_sq = l2_sq(&h, dx);
        StepRecord {
            t,
            ydot_in: ydot,
            p_s,
            l2_v_err: g_sq.sqrt(),
            h1_v_err: (g_sq + dxg_sq).sqrt(),
            linf_v_err: g.iter().fold(0.0, |m, x| m.max(x.abs())),
            l1_v_err: crate::discrete::trapezoid(&abs_g, dx),
            l2_u_err: h_sq.sqrt(),
            big_v_l2_sq: l2_sq(&big_v, dx),
            big_v_at0: big_v[0],
            dxg_sq,
            dxxg_sq: l2_sq(&dgg, dx),
            dxxxg_sq: l2_sq(&dggg, dx),
            h_sq,
            dxh_sq: l2_sq(&dh, dx),
            dxxh_sq: l2_sq(&dhh, dx),
            source_sq: l2_sq(&big_g, dx),
            first: None,
            second: None,
        }
    }

    fn first_derivatives(&self, dtv: &[f64], dtu: &[f64]) -> TimeDerivatives {
        // v̄ and ū are time independent, so ∂ₜg = ∂ₜv and ∂ₜh = ∂ₜu
        let dx = self.grid.dx();
        TimeDerivatives {
            dtv_sq: l2_sq(dtv, dx),
            dtdxg_sq: l2_sq(&d1(dtv, dx), dx),
            dtdxxg_sq: l2_sq(&d2(dtv, dx), dx),
            dth_sq: l2_sq(dtu, dx),
            dtdxh_sq: l2_sq(&d1(dtu, dx), dx),
            dtdxxh_sq: l2_sq(&d2(dtu, dx), dx),
        }
    }

    fn initial_speed(&self, state: &State) -> Result<(f64, f64)> {
        self.velocity(&state.u, &state.v, None, 0.0, 0.0)
    }
}

/// One application of the map `T` to a path starting at `t = 0`.
pub fn apply_t(
    path_in: &BoundaryPath,
    init: &InitialData,
    grid: &Grid,
    params: &PhysicalParams,
    newton: &NewtonSettings,
) -> Result<BoundaryPath> {
    if path_in.t(0) != 0.0 || path_in.y()[0] != 0.0 {
        return Err(Error::InadmissiblePath("path must start at y(0) = 0".into()));
    }
    let mut settings = SolverSettings::new(path_in.dt());
    settings.newton = *newton;
    let (engine, state) = Engine::new(init, grid, params, settings)?;
    let out = engine.run(&state, path_in, 0, false)?;
    BoundaryPath::from_speeds(path_in.dt(), out.out_ydot)
}

/// Picard iteration of `T` on consecutive windows up to `t_final`.
pub fn picard_solve(
    init: &InitialData,
    grid: &Grid,
    params: &PhysicalParams,
    t_final: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    let mut settings = SolverSettings::new(dt);
    settings.picard_tol = tol;
    settings.max_iter = max_iter;
    picard_solve_with(init, grid, params, t_final, &settings)
}

pub fn picard_solve_with(
    init: &InitialData,
    grid: &Grid,
    params: &PhysicalParams,
    t_final: f64,
    settings: &SolverSettings,
) -> Result<Trajectory> {
    if settings.stride == 0 || settings.max_iter == 0 {
        return Err(Error::InvalidParams("stride and max_iter must be positive".into()));
    }
    let (engine, mut state) = Engine::new(init, grid, params, *settings)?;
    let dt = settings.dt;
    let total_steps = ((t_final / dt).round() as usize).max(1);
    let window_steps = settings.window_steps(params);

    let (ydot0, p0) = engine.initial_speed(&state)?;
    let mut path = BoundaryPath::from_speeds(dt, vec![ydot0])?;
    let mut p_s = vec![p0];
    let mut first = engine.record(0.0, ydot0, p_s[0], &state.v, &state.u, &{
        let mut s = vec![0.0; grid.n()];
        shift_sample_into(init.source_table(), 0.0, &mut s);
        s
    });
    first.t = 0.0;
    let mut records = vec![first];
    let mut snapshots = vec![Snapshot {
        step: 0,
        t: 0.0,
        v: Field::new(grid, state.v.clone())?,
        u: Field::new(grid, state.u.clone())?,
    }];
    let mut windows = Vec::new();
    let mut halvings = 0;

    let mut done = 0;
    while done < total_steps {
        let steps = window_steps.min(total_steps - done);
        let t0 = done as f64 * dt;
        let y0 = *path.y().last().unwrap();
        let start_speed = *path.ydot().last().unwrap();
        let mut guess = BoundaryPath::from_speeds_at(t0, y0, dt, vec![start_speed; steps + 1])?;
        let mut log = WindowLog { t_start: t0, t_end: t0 + steps as f64 * dt, ..Default::default() };
        let mut last_input;
        loop {
            let out = engine.run(&state, &guess, done, false)?;
            let next = BoundaryPath::from_speeds_at(t0, y0, dt, out.out_ydot)?;
            let diff: Vec<f64> = next.ydot().iter().zip(guess.ydot()).map(|(a, b)| a - b).collect();
            let d = h1_time_norm(&diff, dt);
            log.distances.push(d);
            log.h2_distances.push(h2_time_norm(&diff, dt));
            last_input = std::mem::replace(&mut guess, next);
            if d <= settings.picard_tol {
                break;
            }
            if log.distances.len() >= settings.max_iter {
                let ratio = log.ratios().last().copied().unwrap_or(f64::NAN);
                return Err(Error::PicardStalled { iterations: log.distances.len(), distance: d, ratio }
                    .at_time(t0));
            }
        }
        // rerun the accepted input once more to collect norms and snapshots
        let out = engine.run(&state, &last_input, done, true)?;
        halvings += out.halvings;
        path.append(&guess);
        p_s.extend_from_slice(&out.p_s[1..]);
        records.extend(out.records);
        snapshots.extend(out.snapshots);
        state = out.end;
        windows.push(log);
        done += steps;
    }
    let dv = trace0(&init.v0, grid, 1)?;
    let du = trace0(&init.u0, grid, 1)?;
    for (rec, (&t, &yd)) in records.iter_mut().zip(
        (0..path.len()).map(|k| path.t(k)).collect::<Vec<_>>().iter().zip(path.ydot()),
    ) {
        rec.t = t;
        let _ = yd;
    }
    Ok(Trajectory {
        initial_speed_mismatch: (path.ydot()[0] + du / dv).abs(),
        path,
        p_s,
        records,
        snapshots,
        windows,
        bar_c: engine.reg.bar_c(),
        newton_halvings: halvings,
    })
}

/// Membership of a path in `{ M⁻¹ ≤ ẏ ≤ M, ‖ẏ − s‖_{H¹} ≤ M }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantSetReport {
    pub min_ydot: f64,
    pub max_ydot: f64,
    pub beta_h1: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub h1_ok: bool,
}

impl InvariantSetReport {
    pub fn passed(&self) -> bool {
        self.lower_ok && self.upper_ok && self.h1_ok
    }
}

pub fn invariant_set_check(path: &BoundaryPath, m: f64, params: &PhysicalParams) -> InvariantSetReport {
    let min_ydot = path.ydot().iter().copied().fold(f64::INFINITY, f64::min);
    let max_ydot = path.ydot().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let beta_h1 = h1_time_norm(&path.beta(params), path.dt());
    InvariantSetReport {
        min_ydot,
        max_ydot,
        beta_h1,
        lower_ok: min_ydot >= 1.0 / m,
        upper_ok: max_ydot <= m,
        h1_ok: beta_h1 <= m,
    }
}

/// Two-sided solution in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FullLineSnapshot {
    pub t: f64,
    pub xtilde: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
}

/// Snapshot `index` of the trajectory on `[x̃ − R/4, x̃ + R]`.
pub fn assemble_solution(
    traj: &Trajectory,
    grid: &Grid,
    params: &PhysicalParams,
    index: usize,
) -> Result<FullLineSnapshot> {
    let snap = traj.snapshots.get(index).ok_or_else(|| {
        Error::InvalidParams(format!("snapshot index {index} out of range"))
    })?;
    let xt = traj.path.y()[snap.step];
    let ps = traj.p_s[snap.step];
    let left = (grid.n() - 1) / 4;
    let dx = grid.dx();
    let ln_v: Vec<f64> = snap.v.values().iter().map(|v| v.ln()).collect();
    let w = effective_velocity_from_log(snap.u.values(), &ln_v, dx, params.mu());
    let cap = left + grid.n();
    let (mut x, mut v, mut u, mut ww, mut p) =
        (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    for j in (1..=left).rev() {
        x.push(xt - j as f64 * dx);
        v.push(1.0);
        u.push(params.u_minus());
        ww.push(params.u_minus());
        p.push(ps);
    }
    for i in 0..grid.n() {
        x.push(xt + grid.x(i));
        v.push(snap.v[i]);
        u.push(snap.u[i]);
        ww.push(w[i]);
        p.push(0.0);
    }
    Ok(FullLineSnapshot { t: snap.t, xtilde: xt, x, v, u, w: ww, p })
}

/// `‖w_s − w⁰(· + x̃(t))‖_{L²}` at every snapshot, as `(t, residual)`.
pub fn w_reconstruction_check(
    traj: &Trajectory,
    init: &InitialData,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(traj.snapshots.len());
    let profiles = traveling_wave(params, grid);
    let mut shifted = vec![0.0; grid.n()];
    for snap in &traj.snapshots {
        if let Some(index) = snap.v.values().iter().position(|&x| !(x > 0.0)) {
            return Err(Error::NonPositive { index, value: snap.v[index] });
        }
        let ws = effective_velocity_about_wave(snap.u.values(), snap.v.values(), &profiles, params, grid.dx());
        shift_sample_into(init.w0_table(), traj.path.y()[snap.step], &mut shifted);
        let diff: Vec<f64> = ws.iter().zip(&shifted).map(|(a, b)| a - b).collect();
        out.push((snap.t, l2_sq(&diff, grid.dx()).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::Perturbation;

    fn wave(n: usize, r: f64) -> (PhysicalParams, Grid, InitialData) {
        let p = PhysicalParams::reference();
        let g = Grid::new(r, n).unwrap();
        let (v0, u0) = Perturbation::none().initial_fields(&p, &g).unwrap();
        let init = validate_hypotheses(&v0, &u0, &g, &p).unwrap();
        (p, g, init)
    }

    #[test]
    fn wave_passes_validation_with_zero_w0_integral() {
        let (_p, g, init) = wave(801, 20.0);
        assert!(init.hypothesis_report.passed());
        assert!(init.hypothesis_report.compatibility_residual.abs() <= 20.0 * g.dx() * g.dx());
        assert!(init.big_w0.values().iter().all(|w| w.abs() < 10.0 * g.dx() * g.dx()));
        assert!(init.big_v0.values().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn negative_slope_is_rejected() {
        let p = PhysicalParams::reference();
        let g = Grid::new(20.0, 401).unwrap();
        let v0 = Field::from_fn(&g, |x| v_bar_at(&p, x) - 0.5 * x * (-2.0 * x).exp() * 4.0).unwrap();
        let u0 = Field::from_fn(&g, |x| u_bar_at(&p, x)).unwrap();
        match validate_hypotheses(&v0, &u0, &g, &p) {
            Err(Error::HypothesisViolated(items)) => {
                assert!(items.iter().any(|f| f.label.starts_with("H4: non-degeneracy")));
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn boundary_velocity_examples() {
        let (p, g, init) = wave(2001, 20.0);
        let s = boundary_velocity(&init.u0, p.u_plus(), &g, &p).unwrap();
        assert!((s - p.s()).abs() < 1e-4);
        let flat = Field::constant(&g, p.u_minus()).unwrap();
        assert_eq!(boundary_velocity(&flat, p.u_plus(), &g, &p).unwrap(), 0.0);
        assert!(matches!(
            boundary_velocity(&init.u0, p.u_minus(), &g, &p),
            Err(Error::DenominatorTooSmall { .. })
        ));
    }

    #[test]
    fn map_output_starts_at_data_speed() {
        let (p, g, init) = wave(801, 20.0);
        let half = BoundaryPath::line(0.5 * p.s(), 1e-2, 20).unwrap();
        let out = apply_t(&half, &init, &g, &p, &NewtonSettings::default()).unwrap();
        assert_eq!(out.y()[0], 0.0);
        let data_speed = init.compatible_speed(&g).unwrap();
        assert!((out.ydot()[0] - data_speed).abs() < compat_tol(&g, 1e-2));
        assert!((out.ydot()[0] - p.s()).abs() < 1e-3);
    }

    #[test]
    fn wave_is_a_fixed_point() {
        let (p, g, init) = wave(801, 20.0);
        let dt = 1e-2;
        let line = BoundaryPath::line(p.s(), dt, 50).unwrap();
        let out = apply_t(&line, &init, &g, &p, &NewtonSettings::default()).unwrap();
        let dev = out.ydot().iter().map(|v| (v - p.s()).abs()).fold(0.0, f64::max);
        assert!(dev < 10.0 * (g.dx() * g.dx() + dt), "{dev}");
    }

    #[test]
    fn picard_on_wave_converges_quickly() {
        let (p, g, init) = wave(801, 20.0);
        let traj = picard_solve(&init, &g, &p, 0.5, 1e-2, 1e-8, 10).unwrap();
        for w in &traj.windows {
            assert!(w.iterations() <= 12, "{:?}", w.distances);
            assert!(w.ratios().iter().all(|&r| r < 0.5), "{:?}", w.distances);
        }
        // the first iterate already sits at the discretization level
        let level = g.dx() * g.dx() + 1e-2;
        assert!(traj.windows[0].distances[0] < 0.1 * level);
        let coarse = picard_solve(&init, &g, &p, 0.5, 1e-2, 1e-2 * level, 10).unwrap();
        assert!(coarse.windows.iter().all(|w| w.iterations() <= 3));
        let beta = h1_time_norm(&traj.path.beta(&p), traj.dt());
        assert!(beta < 10.0 * (g.dx() * g.dx() + 1e-2), "{beta}");
        assert_eq!(traj.records.len(), traj.path.len());
        assert!(traj.initial_speed_mismatch < compat_tol(&g, 1e-2));
    }

    #[test]
    fn infinite_tolerance_is_one_application() {
        let (p, g, init) = wave(401, 20.0);
        let dt = 2e-2;
        let mut settings = SolverSettings::new(dt);
        settings.picard_tol = f64::INFINITY;
        settings.window = Some(0.4);
        let traj = picard_solve_with(&init, &g, &p, 0.4, &settings).unwrap();
        assert_eq!(traj.picard_iterations(), 1);
        let s0 = init.compatible_speed(&g).unwrap();
        let guess = BoundaryPath::line(traj.path.ydot()[0], dt, 20).unwrap();
        let once = apply_t(&guess, &init, &g, &p, &NewtonSettings::default()).unwrap();
        assert_eq!(once.ydot(), traj.path.ydot());
        assert!((s0 - traj.path.ydot()[0]).abs() < compat_tol(&g, dt));
    }

    #[test]
    fn invariant_set_examples() {
        let p = PhysicalParams::reference();
        let line = BoundaryPath::line(p.s(), 0.01, 100).unwrap();
        let r = invariant_set_check(&line, 2.0, &p);
        assert!(r.passed());
        assert_eq!(r.beta_h1, 0.0);
        let fast = BoundaryPath::line(4.0, 0.01, 100).unwrap();
        let r = invariant_set_check(&fast, 2.0, &p);
        assert!(!r.upper_ok && !r.passed());
    }

    #[test]
    fn path_rejects_nonpositive_speed() {
        assert!(BoundaryPath::from_speeds(0.1, vec![1.0, 0.0, 1.0]).is_err());
        let p = BoundaryPath::from_speeds(0.5, vec![1.0, 3.0]).unwrap();
        assert_eq!(p.y(), &[0.0, 1.0]);
    }

    #[test]
    fn assembled_wave_is_continuous_and_pressureless_on_free_side() {
        let (p, g, init) = wave(401, 20.0);
        let traj = picard_solve(&init, &g, &p, 0.2, 1e-2, 1e-8, 10).unwrap();
        let last = traj.snapshots.len() - 1;
        let snap = assemble_solution(&traj, &g, &p, last).unwrap();
        let k = snap.x.iter().position(|&x| x >= snap.xtilde).unwrap();
        assert_eq!(snap.v[k - 1], 1.0);
        assert!((snap.v[k] - 1.0).abs() < 1e-12);
        assert!(snap.p[k..].iter().all(|&x| x == 0.0));
        assert!((snap.p[0] - p.p_minus()).abs() < 1e-2);
        for (i, &x) in snap.x.iter().enumerate().skip(k) {
            let expect = v_bar_at(&p, x - p.s() * snap.t);
            assert!((snap.v[i] - expect).abs() < 1e-2, "x = {x}");
        }
    }

    #[test]
    fn reconstruction_vanishes_at_start() {
        let p = PhysicalParams::reference();
        let g = Grid::new(20.0, 401).unwrap();
        let (v0, u0) = Perturbation::bump(0.01, 1.0, 4.0).initial_fields(&p, &g).unwrap();
        let init = validate_hypotheses(&v0, &u0, &g, &p).unwrap();
        let traj = picard_solve(&init, &g, &p, 0.1, 1e-2, 1e-8, 10).unwrap();
        let res = w_reconstruction_check(&traj, &init, &g, &p).unwrap();
        assert_eq!(res[0].0, 0.0);
        assert!(res[0].1 < 1e-14);
    }
}
