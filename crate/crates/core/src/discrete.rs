//! Finite-difference stencils, trapezoidal norms, boundary traces and
//! shifted sampling of tabulated functions.
//!
//! Every stencil is second order and exact on quadratics: central in the
//! interior, one-sided at both ends.

use crate::error::{Error, Result};
use crate::problem::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    L2,
    H1,
    H2,
    H3,
    Linf,
    L1,
    /// `(∫ x f²)^{1/2}`
    WeightedSqrtX,
    /// `(∫ (1 + √x)² f²)^{1/2}`
    WeightedOnePlusSqrtX,
}

pub(crate) fn d1(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let h2 = 2.0 * dx;
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / h2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / h2;
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / h2;
    out
}

pub(crate) fn d2(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let q = dx * dx;
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / q;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / q;
    }
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / q;
    out
}

/// Discrete `∂ₓᵏ f` for `k ∈ {1, 2}`.
pub fn derivative(f: &Field, grid: &Grid, k: usize) -> Result<Field> {
    check_len(f, grid)?;
    let values = match k {
        1 => d1(f.values(), grid.dx()),
        2 => d2(f.values(), grid.dx()),
        _ => return Err(Error::UnsupportedOrder(k)),
    };
    Ok(Field::from_vec_unchecked(values))
}

/// One-sided estimate of `∂ₓᵏ f(0⁺)` for `k ∈ {0, 1, 2}`.
pub fn trace0(f: &Field, grid: &Grid, k: usize) -> Result<f64> {
    check_len(f, grid)?;
    trace0_slice(f.values(), grid.dx(), k)
}

pub(crate) fn trace0_slice(f: &[f64], dx: f64, k: usize) -> Result<f64> {
    match k {
        0 => Ok(f[0]),
        1 => Ok((-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx)),
        2 => Ok((2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (dx * dx)),
        _ => Err(Error::UnsupportedOrder(k)),
    }
}

pub(crate) fn trapezoid(f: &[f64], dx: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    dx * (inner + 0.5 * (f[0] + f[n - 1]))
}

pub(crate) fn l2_sq(f: &[f64], dx: f64) -> f64 {
    let n = f.len();
    let inner: f64 = f[1..n - 1].iter().map(|v| v * v).sum();
    dx * (inner + 0.5 * (f[0] * f[0] + f[n - 1] * f[n - 1]))
}

/// `F_i = -∫_{x_i}^{R} f`, so that `F(R) = 0`.
pub(crate) fn tail_integral(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in (0..n - 1).rev() {
        out[i] = out[i + 1] - 0.5 * dx * (f[i] + f[i + 1]);
    }
    out
}

/// `F_i = ∫_0^{t_i} f` on a uniform mesh of step `h`.
pub(crate) fn cumulative_trapezoid(f: &[f64], h: f64, start: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = start;
    out.push(acc);
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Squared `Hᵏ` seminorm contributions `‖f‖², ‖Df‖², ‖D²f‖², ‖D³f‖²` up to `k`.
pub(crate) fn sobolev_sq(f: &[f64], dx: f64, k: usize) -> f64 {
    let mut total = l2_sq(f, dx);
    if k >= 1 {
        total += l2_sq(&d1(f, dx), dx);
    }
    if k >= 2 {
        let f2 = d2(f, dx);
        total += l2_sq(&f2, dx);
        if k >= 3 {
            total += l2_sq(&d1(&f2, dx), dx);
        }
    }
    total
}

pub fn norm(f: &Field, grid: &Grid, kind: NormKind) -> Result<f64> {
    check_len(f, grid)?;
    Ok(norm_slice(f.values(), grid, kind))
}

pub(crate) fn norm_slice(f: &[f64], grid: &Grid, kind: NormKind) -> f64 {
    let dx = grid.dx();
    match kind {
        NormKind::L2 => l2_sq(f, dx).sqrt(),
        NormKind::H1 => sobolev_sq(f, dx, 1).sqrt(),
        NormKind::H2 => sobolev_sq(f, dx, 2).sqrt(),
        NormKind::H3 => sobolev_sq(f, dx, 3).sqrt(),
        NormKind::Linf => f.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormKind::L1 => {
            let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
            trapezoid(&abs, dx)
        }
        NormKind::WeightedSqrtX => {
            let w: Vec<f64> = f.iter().enumerate().map(|(i, v)| grid.x(i) * v * v).collect();
            trapezoid(&w, dx).sqrt()
        }
        NormKind::WeightedOnePlusSqrtX => {
            let w: Vec<f64> = f
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let q = 1.0 + grid.x(i).sqrt();
                    q * q * v * v
                })
                .collect();
            trapezoid(&w, dx).sqrt()
        }
    }
}

fn check_len(f: &Field, grid: &Grid) -> Result<()> {
    if f.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: f.len() });
    }
    Ok(())
}

/// Monotone piecewise-cubic Hermite interpolant of nodal data on `[0, R]`,
/// extended by a constant `far` value beyond `R`.
#[derive(Debug, Clone)]
pub struct Tabulated {
    values: Vec<f64>,
    slopes: Vec<f64>,
    dx: f64,
    r: f64,
    far: f64,
}

impl Tabulated {
    pub fn new(f: &Field, grid: &Grid, far: f64) -> Result<Self> {
        check_len(f, grid)?;
        if !far.is_finite() {
            return Err(Error::NonFinite { index: grid.n() });
        }
        let values = f.values().to_vec();
        let slopes = pchip_slopes(&values, grid.dx());
        Ok(Self { values, slopes, dx: grid.dx(), r: grid.r(), far })
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x > self.r {
            return self.far;
        }
        let x = x.max(0.0);
        let n = self.values.len();
        let mut j = (x / self.dx).floor() as usize;
        if j >= n - 1 {
            j = n - 2;
        }
        let theta = ((x - j as f64 * self.dx) / self.dx).clamp(0.0, 1.0);
        self.hermite(j, theta)
    }

    fn hermite(&self, j: usize, theta: f64) -> f64 {
        let [h00, h10, h01, h11] = hermite_basis(theta);
        self.values[j] * h00
            + self.dx * self.slopes[j] * h10
            + self.values[j + 1] * h01
            + self.dx * self.slopes[j + 1] * h11
    }

    fn shifted_into(&self, y: f64, out: &mut [f64]) {
        let n = self.values.len();
        let m = (y / self.dx).floor();
        let mut theta = y / self.dx - m;
        let mut m = m as usize;
        // absorb roundoff so that grid-aligned shifts hit nodes exactly
        if theta > 1.0 - 1e-12 {
            m += 1;
            theta = 0.0;
        } else if theta < 1e-12 {
            theta = 0.0;
        }
        let basis = hermite_basis(theta);
        for (i, o) in out.iter_mut().enumerate() {
            let j = i + m;
            *o = if j + 1 < n {
                let [h00, h10, h01, h11] = basis;
                self.values[j] * h00
                    + self.dx * self.slopes[j] * h10
                    + self.values[j + 1] * h01
                    + self.dx * self.slopes[j + 1] * h11
            } else if j == n - 1 && theta == 0.0 {
                self.values[n - 1]
            } else {
                self.far
            };
        }
    }
}

fn hermite_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2]
}

/// Fritsch-Carlson slopes with harmonic-mean interior values and the
/// shape-preserving three-point end formula.
fn pchip_slopes(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let delta: Vec<f64> = f.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b > 0.0 {
            d[k] = 2.0 / (1.0 / a + 1.0 / b);
        }
    }
    d[0] = end_slope(delta[0], delta[1]);
    d[n - 1] = end_slope(delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(d0: f64, d1: f64) -> f64 {
    let d = 0.5 * (3.0 * d0 - d1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Samples `f0(x_i + y)` on the grid; beyond `R` the declared far value is used.
pub fn shift_sample(f0: &Tabulated, y: f64, grid: &Grid) -> Result<Field> {
    if y < 0.0 || !y.is_finite() {
        return Err(Error::NegativeShift(y));
    }
    let mut out = vec![0.0; grid.n()];
    f0.shifted_into(y, &mut out);
    Ok(Field::from_vec_unchecked(out))
}

pub(crate) fn shift_sample_into(f0: &Tabulated, y: f64, out: &mut [f64]) {
    f0.shifted_into(y.max(0.0), out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(r: f64, n: usize) -> Grid {
        Grid::new(r, n).unwrap()
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = grid(3.0, 31);
        let f = Field::from_fn(&g, |x| 1.0 - 2.0 * x + 0.5 * x * x).unwrap();
        let d = derivative(&f, &g, 1).unwrap();
        let dd = derivative(&f, &g, 2).unwrap();
        for i in 0..g.n() {
            assert!((d[i] - (-2.0 + g.x(i))).abs() < 1e-12, "node {i}");
            assert!((dd[i] - 1.0).abs() < 1e-10, "node {i}");
        }
        let sq = Field::from_fn(&g, |x| x * x).unwrap();
        assert!((trace0(&sq, &g, 2).unwrap() - 2.0).abs() < 1e-10);
        let lin = Field::from_fn(&g, |x| 3.0 + 2.0 * x).unwrap();
        assert!((trace0(&lin, &g, 1).unwrap() - 2.0).abs() < 1e-13);
        assert_eq!(trace0(&lin, &g, 0).unwrap(), 3.0);
        assert!(matches!(trace0(&lin, &g, 3), Err(Error::UnsupportedOrder(3))));
        assert!(matches!(derivative(&lin, &g, 3), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn derivative_is_second_order() {
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let g = grid(3.0, n + 1);
                let f = Field::from_fn(&g, f64::sin).unwrap();
                let d = derivative(&f, &g, 1).unwrap();
                (0..g.n()).map(|i| (d[i] - g.x(i).cos()).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9 && order < 2.1, "order {order}");
        }
    }

    #[test]
    fn norm_examples() {
        let g = grid(7.0, 701);
        let z = Field::zeros(&g);
        for kind in [
            NormKind::L2,
            NormKind::H1,
            NormKind::H2,
            NormKind::H3,
            NormKind::Linf,
            NormKind::L1,
            NormKind::WeightedSqrtX,
            NormKind::WeightedOnePlusSqrtX,
        ] {
            assert_eq!(norm(&z, &g, kind).unwrap(), 0.0);
        }
        let one = Field::constant(&g, 1.0).unwrap();
        assert!((norm(&one, &g, NormKind::L2).unwrap() - 7f64.sqrt()).abs() < 1e-13);

        let g = grid(40.0, 8001);
        let e = Field::from_fn(&g, |x| (-x).exp()).unwrap();
        let w = norm(&e, &g, NormKind::WeightedSqrtX).unwrap();
        assert!((w - 0.5).abs() < 1e-5, "{w}");
    }

    #[test]
    fn h1_is_sum_of_squares() {
        let g = grid(2.0, 101);
        let f = Field::from_fn(&g, |x| (3.0 * x).sin() * (-x).exp()).unwrap();
        let l2 = norm(&f, &g, NormKind::L2).unwrap();
        let d = derivative(&f, &g, 1).unwrap();
        let dl2 = norm(&d, &g, NormKind::L2).unwrap();
        let h1 = norm(&f, &g, NormKind::H1).unwrap();
        assert!((h1 * h1 - (l2 * l2 + dl2 * dl2)).abs() < 1e-13);
    }

    #[test]
    fn shift_examples() {
        let g = grid(10.0, 1001);
        let f = Field::from_fn(&g, |x| (-x).exp()).unwrap();
        let tab = Tabulated::new(&f, &g, 0.0).unwrap();
        let same = shift_sample(&tab, 0.0, &g).unwrap();
        assert_eq!(same, f);

        let c = Tabulated::new(&Field::constant(&g, 2.5).unwrap(), &g, 2.5).unwrap();
        let sc = shift_sample(&c, 0.3721, &g).unwrap();
        assert!(sc.values().iter().all(|&v| (v - 2.5).abs() < 1e-15));

        let s1 = shift_sample(&tab, 1.0, &g).unwrap();
        for i in 0..g.n() {
            let x = g.x(i) + 1.0;
            let expect = if x > 10.0 { 0.0 } else { (-x).exp() };
            assert!((s1[i] - expect).abs() < 1e-6, "node {i}");
        }
        let s2 = shift_sample(&tab, 0.123, &g).unwrap();
        for i in 0..g.n() {
            let x = g.x(i) + 0.123;
            let expect = if x > 10.0 { 0.0 } else { (-x).exp() };
            assert!((s2[i] - expect).abs() < 1e-6, "node {i}");
        }
        assert!(matches!(shift_sample(&tab, -0.1, &g), Err(Error::NegativeShift(_))));
    }

    #[test]
    fn tail_integral_of_exponential() {
        let g = grid(40.0, 4001);
        let f: Vec<f64> = g.nodes().iter().map(|x| (-x).exp()).collect();
        let t = tail_integral(&f, g.dx());
        assert_eq!(t[g.n() - 1], 0.0);
        for (i, v) in t.iter().enumerate().step_by(50) {
            assert!((v + (-g.x(i)).exp()).abs() < 1e-4);
        }
    }
}
