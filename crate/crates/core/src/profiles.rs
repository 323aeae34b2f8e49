//! The explicit traveling wave and the effective velocity `w = u - μ ∂ₓ ln v`.
//!
//! The wave is anchored by `v̄(0) = 1`: congested (`v̄ = 1`, `ū = u₋`,
//! `p̄ = p₋`) on `x < 0` and logistic on `x > 0`.

use std::io::{self, Write};

use crate::discrete::{d1, d2, l2_sq, trace0};
use crate::error::{Error, Result};
use crate::format_number;
use crate::problem::{Field, Grid, PhysicalParams};

/// `v̄(x)`; equal to 1 on `x ≤ 0`.
pub fn v_bar_at(params: &PhysicalParams, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let vp = params.v_plus();
    vp / (1.0 + (vp - 1.0) * (-params.tail_rate() * x).exp())
}

/// `ln v̄(x)` without the cancellation of `ln` near `v̄ = 1`.
pub fn ln_v_bar_at(params: &PhysicalParams, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let vp = params.v_plus();
    vp.ln() - ((vp - 1.0) * (-params.tail_rate() * x).exp()).ln_1p()
}

/// `∂ₓv̄(x) = (s/μ) v̄ (v₊ - v̄)` on `x > 0`.
pub fn dv_bar_at(params: &PhysicalParams, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let v = v_bar_at(params, x);
    params.s() / params.mu() * v * (params.v_plus() - v)
}

pub fn u_bar_at(params: &PhysicalParams, x: f64) -> f64 {
    if x <= 0.0 {
        return params.u_minus();
    }
    params.u_plus() + params.s() * (params.v_plus() - v_bar_at(params, x))
}

#[derive(Debug, Clone)]
pub struct Profiles {
    pub v_bar: Field,
    pub u_bar: Field,
    pub ln_v_bar: Field,
    /// `w̄` on `x > 0`, equal to `u₊`.
    pub w_bar_right: f64,
    /// `p̄` on `x < 0`, equal to `p₋`.
    pub p_bar_left: f64,
}

pub fn traveling_wave(params: &PhysicalParams, grid: &Grid) -> Profiles {
    let v: Vec<f64> = grid.nodes().iter().map(|&x| v_bar_at(params, x)).collect();
    let ln_v: Vec<f64> = grid.nodes().iter().map(|&x| ln_v_bar_at(params, x)).collect();
    let shift = params.u_plus() + params.s() * params.v_plus();
    let u: Vec<f64> = v.iter().map(|&vb| shift - params.s() * vb).collect();
    Profiles {
        v_bar: Field::from_vec_unchecked(v),
        u_bar: Field::from_vec_unchecked(u),
        ln_v_bar: Field::from_vec_unchecked(ln_v),
        w_bar_right: params.u_plus(),
        p_bar_left: params.p_minus(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileResidual {
    /// Interior L² norm of `s Dv̄ + μ D² ln v̄`.
    pub ode_residual_norm: f64,
    /// Sup norm of `ū - (u₊ + s v₊ - s v̄)`.
    pub algebraic_residual_norm: f64,
    /// One-sided `∂ₓv̄(0⁺)`.
    pub slope0: f64,
}

pub fn profile_residual(
    profiles: &Profiles,
    params: &PhysicalParams,
    grid: &Grid,
) -> Result<ProfileResidual> {
    let dx = grid.dx();
    let dv = d1(profiles.v_bar.values(), dx);
    let dd = d2(profiles.ln_v_bar.values(), dx);
    let n = grid.n();
    let r: Vec<f64> = (1..n - 1).map(|i| params.s() * dv[i] + params.mu() * dd[i]).collect();
    let shift = params.u_plus() + params.s() * params.v_plus();
    let algebraic = profiles
        .u_bar
        .values()
        .iter()
        .zip(profiles.v_bar.values())
        .map(|(&u, &v)| (u - (shift - params.s() * v)).abs())
        .fold(0.0, f64::max);
    Ok(ProfileResidual {
        ode_residual_norm: l2_sq(&r, dx).sqrt(),
        algebraic_residual_norm: algebraic,
        slope0: trace0(&profiles.v_bar, grid, 1)?,
    })
}

/// `u - μ Dₓ ln v`.
pub fn effective_velocity(u: &Field, v: &Field, grid: &Grid, mu: f64) -> Result<Field> {
    if u.len() != grid.n() || v.len() != grid.n() {
        return Err(Error::LengthMismatch {
            expected: grid.n(),
            found: if u.len() != grid.n() { u.len() } else { v.len() },
        });
    }
    if let Some(index) = v.values().iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositive { index, value: v[index] });
    }
    let ln_v: Vec<f64> = v.values().iter().map(|x| x.ln()).collect();
    Ok(effective_velocity_from_log(u.values(), &ln_v, grid.dx(), mu))
}

pub(crate) fn effective_velocity_from_log(u: &[f64], ln_v: &[f64], dx: f64, mu: f64) -> Field {
    let d = d1(ln_v, dx);
    Field::from_vec_unchecked(u.iter().zip(&d).map(|(&a, &b)| a - mu * b).collect())
}

/// `u − μ∂ₓ ln v` computed as `u₊ + (u − ū) − μ∂ₓ(ln v − ln v̄)`: the wave
/// part is constant analytically, so its discretization error is removed.
pub(crate) fn effective_velocity_about_wave(
    u: &[f64],
    v: &[f64],
    profiles: &Profiles,
    params: &PhysicalParams,
    dx: f64,
) -> Vec<f64> {
    let dlog: Vec<f64> = v.iter().zip(profiles.ln_v_bar.values()).map(|(a, b)| a.ln() - b).collect();
    let d = d1(&dlog, dx);
    (0..u.len())
        .map(|i| params.u_plus() + (u[i] - profiles.u_bar[i]) - params.mu() * d[i])
        .collect()
}

/// Writes `x v u w` rows for the wave.
pub fn write_profile_snapshot<W: Write>(
    out: &mut W,
    profiles: &Profiles,
    params: &PhysicalParams,
    grid: &Grid,
) -> io::Result<()> {
    let w = effective_velocity_from_log(
        profiles.u_bar.values(),
        profiles.ln_v_bar.values(),
        grid.dx(),
        params.mu(),
    );
    writeln!(out, "x v u w")?;
    for i in 0..grid.n() {
        writeln!(
            out,
            "{} {} {} {}",
            format_number(grid.x(i)),
            format_number(profiles.v_bar[i]),
            format_number(profiles.u_bar[i]),
            format_number(w[i])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (PhysicalParams, Grid, Profiles) {
        let p = PhysicalParams::reference();
        let g = Grid::new(20.0, n).unwrap();
        let pr = traveling_wave(&p, &g);
        (p, g, pr)
    }

    #[test]
    fn closed_form_values() {
        let p = PhysicalParams::reference();
        assert_eq!(v_bar_at(&p, 0.0), 1.0);
        assert_eq!(u_bar_at(&p, 0.0), 1.0);
        // 2/(1+e^{-1}) evaluated independently
        assert!((v_bar_at(&p, 0.5) - 1.462_117_157_260_009_8).abs() < 1e-15);
        assert!((v_bar_at(&p, 60.0) - 2.0).abs() < 1e-15);
        assert!(u_bar_at(&p, 60.0).abs() < 1e-15);
        for &x in &[1e-9, 0.3, 2.0, 9.0] {
            assert!((ln_v_bar_at(&p, x) - v_bar_at(&p, x).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn profile_invariants() {
        let (p, _g, pr) = setup(401);
        assert_eq!(pr.v_bar[0], 1.0);
        assert_eq!(pr.u_bar[0], p.u_minus());
        // strict until the profile saturates in double precision
        assert!(pr.v_bar.values().windows(2).all(|w| w[1] > w[0] || p.v_plus() - w[0] < 1e-12));
        assert!(pr.v_bar.values().iter().all(|&v| v <= p.v_plus()));
        assert_eq!(pr.w_bar_right, p.u_plus());
        assert_eq!(pr.p_bar_left, p.p_minus());
    }

    #[test]
    fn residual_is_second_order() {
        let res: Vec<ProfileResidual> = [401usize, 801, 1601]
            .iter()
            .map(|&n| {
                let (p, g, pr) = setup(n);
                profile_residual(&pr, &p, &g).unwrap()
            })
            .collect();
        for w in res.windows(2) {
            let order = (w[0].ode_residual_norm / w[1].ode_residual_norm).log2();
            assert!((order - 2.0).abs() < 0.15, "order {order}");
        }
        for r in &res {
            assert!(r.algebraic_residual_norm <= 1e-14);
        }
        let last = res.last().unwrap();
        assert!((last.slope0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pressure_consistency() {
        let errs: Vec<f64> = [201usize, 401, 801]
            .iter()
            .map(|&n| {
                let (p, g, pr) = setup(n);
                (-p.mu() * trace0(&pr.u_bar, &g, 1).unwrap() - p.p_minus()).abs()
            })
            .collect();
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5);
    }

    #[test]
    fn effective_velocity_examples() {
        let (p, g, pr) = setup(801);
        let w = effective_velocity(&pr.u_bar, &pr.v_bar, &g, p.mu()).unwrap();
        let dev = w.values().iter().skip(1).map(|x| (x - p.u_plus()).abs()).fold(0.0, f64::max);
        assert!(dev < 20.0 * g.dx() * g.dx(), "{dev}");

        let u = Field::from_fn(&g, |x| x.sin()).unwrap();
        let c = Field::constant(&g, 3.0).unwrap();
        let same = effective_velocity(&u, &c, &g, 2.0).unwrap();
        assert!(same.values().iter().zip(u.values()).all(|(a, b)| (a - b).abs() < 1e-13));

        let coarse = Grid::new(1.0, 17).unwrap();
        let ex = Field::from_fn(&coarse, f64::exp).unwrap();
        let w = effective_velocity(&Field::zeros(&coarse), &ex, &coarse, 1.0).unwrap();
        assert!(w.values().iter().all(|v| (v + 1.0).abs() < 1e-12));

        let bad = Field::from_fn(&coarse, |x| x - 0.5).unwrap();
        assert!(matches!(
            effective_velocity(&Field::zeros(&coarse), &bad, &coarse, 1.0),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn snapshot_export_has_header_and_rows() {
        let (p, g, pr) = setup(17);
        let mut buf = Vec::new();
        write_profile_snapshot(&mut buf, &pr, &p, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x v u w");
        assert_eq!(lines.len(), 18);
        assert_eq!(lines[1].split_whitespace().count(), 4);
    }
}
