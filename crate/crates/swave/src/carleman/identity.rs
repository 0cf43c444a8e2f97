//! Residual of the deterministic pointwise weighted identity.
//!
//! For a smooth `v(t, x)` put `z = v / theta` and `vhat = v_t`. With no
//! noise the identity reads
//!
//! ```text
//! theta (-2 ell_t vhat + 2 a ell_x v_x + Psi v) (z_tt - (a z_x)_x)
//!   + d/dx [a^2 ell_x v_x^2 - 2 ell_t a v_x vhat + a ell_x vhat^2
//!           + Psi a v_x v - Psi_x a v^2 / 2 - 𝓐 a ell_x v^2]
//!   + d/dt [ell_t a v_x^2 + ell_t vhat^2 - 2 a ell_x v_x vhat - Psi v vhat
//!           + (𝓐 ell_t + Psi_t / 2) v^2]
//! = (ell_tt + (a ell_x)_x - Psi) vhat^2 + c11 v_x^2
//!   - 2 ((a ell_x)_t + a ell_tx) v_x vhat + 𝓑 v^2
//!   + (-2 ell_t vhat + 2 a ell_x v_x + Psi v)^2
//! ```
//!
//! The weight quantities are exact; every derivative of `v` and `z` and both
//! divergences are centred differences, so the residual is `O(h^2)`.

use super::{weight_at, CarlemanConfig, WeightPoint};
use crate::spatial::{Grid, Profile};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    pub cells: Vec<usize>,
    /// `sum |LHS - RHS| dx dt` over the interior of the space-time grid.
    pub residuals: Vec<f64>,
    /// Observed orders between consecutive refinements.
    pub orders: Vec<f64>,
    /// Smallest of `orders`.
    pub order: f64,
    /// Set when the observed order drops below one, i.e. the input is too
    /// rough for the differencing to resolve.
    pub flagged: bool,
}

/// Residual on a grid with `cells` spatial cells on `(0, L)` and the time
/// step tied to the space step (`nt = round(T / dx)`).
pub fn identity_residual_at(
    length: f64,
    profile: Profile,
    cfg: &CarlemanConfig,
    v: &dyn Fn(f64, f64) -> f64,
    cells: usize,
) -> Result<f64> {
    let grid = Grid::new(length, cells - 1, profile)?;
    let n = cells;
    let dx = grid.dx();
    let nt = ((cfg.horizon / dx).round() as usize).max(5);
    let dt = cfg.horizon / nt as f64;
    let idx = |j: usize, i: usize| j * (n + 1) + i;

    let mut vv = vec![0.0; (nt + 1) * (n + 1)];
    let mut zz = vec![0.0; (nt + 1) * (n + 1)];
    let mut w = vec![WeightPoint::default(); (nt + 1) * (n + 1)];
    for j in 0..=nt {
        let t = j as f64 * dt;
        for i in 0..=n {
            let x = i as f64 * dx;
            let p = weight_at(&grid, cfg, t, x);
            let val = v(t, x);
            vv[idx(j, i)] = val;
            zz[idx(j, i)] = val / p.theta;
            w[idx(j, i)] = p;
        }
    }

    let vx = |j: usize, i: usize| (vv[idx(j, i + 1)] - vv[idx(j, i - 1)]) / (2.0 * dx);
    let vt = |j: usize, i: usize| (vv[idx(j + 1, i)] - vv[idx(j - 1, i)]) / (2.0 * dt);
    let space_flux = |j: usize, i: usize| {
        let p = &w[idx(j, i)];
        let (v0, v_x, v_t) = (vv[idx(j, i)], vx(j, i), vt(j, i));
        p.a * p.a * p.ell_x * v_x * v_x - 2.0 * p.ell_t * p.a * v_x * v_t
            + p.a * p.ell_x * v_t * v_t
            + p.psi * p.a * v_x * v0
            - 0.5 * p.psi_x * p.a * v0 * v0
            - p.a_field * p.a * p.ell_x * v0 * v0
    };
    let time_density = |j: usize, i: usize| {
        let p = &w[idx(j, i)];
        let (v0, v_x, v_t) = (vv[idx(j, i)], vx(j, i), vt(j, i));
        p.ell_t * p.a * v_x * v_x + p.ell_t * v_t * v_t - 2.0 * p.a * p.ell_x * v_x * v_t - p.psi * v0 * v_t
            + (p.a_field * p.ell_t + 0.5 * p.psi_t) * v0 * v0
    };

    let mut total = 0.0;
    for j in 2..nt - 1 {
        for i in 2..n - 1 {
            let p = &w[idx(j, i)];
            let (v0, v_x, v_t) = (vv[idx(j, i)], vx(j, i), vt(j, i));
            let z_tt = (zz[idx(j + 1, i)] - 2.0 * zz[idx(j, i)] + zz[idx(j - 1, i)]) / (dt * dt);
            let x = i as f64 * dx;
            let (am, ap) = (profile.value(x - 0.5 * dx), profile.value(x + 0.5 * dx));
            let az_xx =
                (ap * (zz[idx(j, i + 1)] - zz[idx(j, i)]) - am * (zz[idx(j, i)] - zz[idx(j, i - 1)])) / (dx * dx);
            let mult = -2.0 * p.ell_t * v_t + 2.0 * p.a * p.ell_x * v_x + p.psi * v0;
            let lhs = p.theta * mult * (z_tt - az_xx)
                + (space_flux(j, i + 1) - space_flux(j, i - 1)) / (2.0 * dx)
                + (time_density(j + 1, i) - time_density(j - 1, i)) / (2.0 * dt);
            let rhs = p.vhat_coef * v_t * v_t
                + p.c11 * v_x * v_x
                + p.cross_coef * v_x * v_t
                + p.b_field * v0 * v0
                + mult * mult;
            total += (lhs - rhs).abs();
        }
    }
    Ok(total * dx * dt)
}

/// Refinement study over the given cell counts (each at least 8).
pub fn identity_residual(
    length: f64,
    profile: Profile,
    cfg: &CarlemanConfig,
    v: &dyn Fn(f64, f64) -> f64,
    cells: &[usize],
) -> Result<IdentityReport> {
    let residuals = cells
        .iter()
        .map(|&n| identity_residual_at(length, profile, cfg, v, n))
        .collect::<Result<Vec<_>>>()?;
    let orders: Vec<f64> = cells
        .windows(2)
        .zip(residuals.windows(2))
        .map(|(c, r)| (r[0] / r[1]).ln() / (c[1] as f64 / c[0] as f64).ln())
        .collect();
    let order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(IdentityReport {
        cells: cells.to_vec(),
        residuals,
        flagged: !(order >= 1.0),
        orders,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> CarlemanConfig {
        CarlemanConfig {
            x0: -1.0,
            alpha: 4.0,
            mu0: 8.0,
            c0: 0.1,
            c1: 0.5,
            lambda: 0.2,
            horizon: 3.0,
        }
    }

    fn smooth(t: f64, x: f64) -> f64 {
        (PI * x).sin() * t.sin()
    }

    #[test]
    fn zero_input_has_zero_residual() {
        let r = identity_residual_at(1.0, Profile::Constant(1.0), &cfg(), &|_, _| 0.0, 20).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn second_order_for_smooth_input() {
        let rep = identity_residual(1.0, Profile::Constant(1.0), &cfg(), &smooth, &[20, 40, 80]).unwrap();
        assert!(rep.order >= 1.8, "{rep:?}");
        assert!(!rep.flagged);
    }

    #[test]
    fn second_order_with_variable_coefficient() {
        let prof = Profile::Sine {
            base: 1.0,
            amplitude: 0.2,
            wavenumber: 3.0,
        };
        let rep = identity_residual(1.0, prof, &cfg(), &smooth, &[20, 40, 80]).unwrap();
        assert!(rep.order >= 1.8, "{rep:?}");
    }

    #[test]
    fn residual_is_quadratic_in_input() {
        let c = cfg();
        let r1 = identity_residual_at(1.0, Profile::Constant(1.0), &c, &smooth, 40).unwrap();
        let r2 = identity_residual_at(1.0, Profile::Constant(1.0), &c, &|t, x| 2.0 * smooth(t, x), 40).unwrap();
        assert!((r2 - 4.0 * r1).abs() < 1e-9 * r2);
    }

    #[test]
    fn rough_input_is_flagged() {
        // A kink at x = 1/2 is not resolved by the centred stencils.
        let rough = |t: f64, x: f64| (x - 0.5).abs() * (1.0 + t);
        let rep = identity_residual(1.0, Profile::Constant(1.0), &cfg(), &rough, &[20, 40, 80]).unwrap();
        assert!(rep.order < 1.8);
    }
}
