//! Carleman weight machinery in one space dimension.
//!
//! The weight is `phi(x) = alpha (x - x0)^2` with `x0` outside the domain.
//! This module checks the convexity and size conditions on `phi`, picks the
//! constants `c0`, `c1`, derives the controlled boundary set, and tabulates
//! the weight fields used by the pointwise identity.

mod identity;
mod weights;

pub use identity::{identity_residual, identity_residual_at, IdentityReport};
pub use weights::{certify_lambda, time_windows, weight_at, weight_fields, WeightFields, WeightPoint, Windows};

use crate::spatial::{BoundarySpec, CoefficientSet, Grid, Side};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarlemanConfig {
    pub x0: f64,
    pub alpha: f64,
    pub mu0: f64,
    pub c0: f64,
    pub c1: f64,
    pub lambda: f64,
    pub horizon: f64,
}

impl CarlemanConfig {
    pub fn phi(&self, x: f64) -> f64 {
        self.alpha * (x - self.x0).powi(2)
    }

    pub fn dphi(&self, x: f64) -> f64 {
        2.0 * self.alpha * (x - self.x0)
    }

    pub fn ddphi(&self) -> f64 {
        2.0 * self.alpha
    }

    /// `R0^2 = min phi` over the closed grid.
    pub fn r0_sq(&self, grid: &Grid) -> f64 {
        closed_nodes(grid).map(|x| self.phi(x)).fold(f64::INFINITY, f64::min)
    }

    /// `R1^2 = max phi` over the closed grid.
    pub fn r1_sq(&self, grid: &Grid) -> f64 {
        closed_nodes(grid)
            .map(|x| self.phi(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn r1(&self, grid: &Grid) -> f64 {
        self.r1_sq(grid).sqrt()
    }

    /// `T0 = 2 R1`.
    pub fn t0(&self, grid: &Grid) -> f64 {
        2.0 * self.r1(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.x0,
            self.alpha,
            self.mu0,
            self.c0,
            self.c1,
            self.lambda,
            self.horizon,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("Carleman parameters must be finite".into()));
        }
        if self.alpha < 0.0 || self.lambda < 0.0 || self.horizon <= 0.0 {
            return Err(Error::InvalidParameter(
                "alpha and lambda must be non-negative and the horizon positive".into(),
            ));
        }
        Ok(())
    }
}

fn closed_nodes(grid: &Grid) -> impl Iterator<Item = f64> + '_ {
    (0..grid.m() + 2).map(|i| grid.x(i))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Condition1Report {
    /// Convexity inequality holds with the returned `mu0_max > 0` and no
    /// critical point was found.
    pub holds: bool,
    /// Largest admissible `mu0` under the half-normalised reduction
    /// `(a phi')' - a' phi' / 2 >= mu0`; this equals `2 alpha` when `a = 1`.
    pub mu0_max: f64,
    /// `min (2a(a phi')' - a' a phi') / a`, the unnormalised left side.
    pub lhs_min_over_a: f64,
    pub min_abs_dphi: f64,
    /// Location of a critical point of `phi` in the closed domain.
    pub critical_point: Option<f64>,
}

/// Pointwise convexity check of `phi` against the coefficient `a`.
pub fn check_condition1(grid: &Grid, cfg: &CarlemanConfig) -> Condition1Report {
    let prof = grid.profile();
    let mut lhs_min = f64::INFINITY;
    let mut min_dphi = f64::INFINITY;
    for x in closed_nodes(grid) {
        let a = prof.value(x);
        let da = prof.derivative(x, 1);
        let lhs = 2.0 * a * (da * cfg.dphi(x) + a * cfg.ddphi()) - da * a * cfg.dphi(x);
        lhs_min = lhs_min.min(lhs / a);
        min_dphi = min_dphi.min(cfg.dphi(x).abs());
    }
    let critical_point = if cfg.alpha == 0.0 {
        Some(0.0)
    } else if (0.0..=grid.length()).contains(&cfg.x0) {
        Some(cfg.x0)
    } else {
        None
    };
    let mu0_max = 0.5 * lhs_min;
    Condition1Report {
        holds: critical_point.is_none() && min_dphi > 0.0 && mu0_max > 0.0,
        mu0_max,
        lhs_min_over_a: lhs_min,
        min_abs_dphi: min_dphi,
        critical_point,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Condition2Report {
    pub r0_sq: f64,
    pub r1_sq: f64,
    pub t0: f64,
    /// `min (a phi'^2 / 4) - R1^2` (non-strict).
    pub slack1: f64,
    /// `T - 2 R1`.
    pub slack2: f64,
    /// Distance of `c1` to the nearer end of its open interval.
    pub slack3: f64,
    /// `mu0 - 4 c1 - c0 - sqrt(R1)`.
    pub slack4: f64,
    pub c1_lower: f64,
    pub c1_upper: f64,
    pub items: [bool; 4],
    pub holds: bool,
}

/// Evaluates the four size conditions linking `phi`, `mu0`, `c0`, `c1` and `T`.
pub fn check_condition2(grid: &Grid, cfg: &CarlemanConfig, coeffs: &CoefficientSet) -> Condition2Report {
    let prof = grid.profile();
    let r0_sq = cfg.r0_sq(grid);
    let r1_sq = cfg.r1_sq(grid);
    let r1 = r1_sq.sqrt();
    let t0 = 2.0 * r1;
    let quarter_min = closed_nodes(grid)
        .map(|x| 0.25 * prof.value(x) * cfg.dphi(x).powi(2))
        .fold(f64::INFINITY, f64::min);
    let slack1 = quarter_min - r1_sq;
    let slack2 = cfg.horizon - t0;
    let (c1_lower, c1_upper) = c1_interval(r1, cfg.horizon, coeffs.sup_a5());
    let slack3 = (cfg.c1 - c1_lower).min(c1_upper - cfg.c1);
    let slack4 = cfg.mu0 - 4.0 * cfg.c1 - cfg.c0 - r1.sqrt();
    let items = [
        slack1 >= 0.0 && r1_sq >= r0_sq,
        slack2 > 0.0,
        slack3 > 0.0 && cfg.c0 > 0.0,
        slack4 > 0.0,
    ];
    Condition2Report {
        r0_sq,
        r1_sq,
        t0,
        slack1,
        slack2,
        slack3,
        slack4,
        c1_lower,
        c1_upper,
        items,
        holds: items.iter().all(|b| *b),
    }
}

/// Open interval for `c1`: `((2R1/T)^2, min{2R1/T, 1, 1/(16 |a5|^4)})`.
fn c1_interval(r1: f64, horizon: f64, sup_a5: f64) -> (f64, f64) {
    let q = 2.0 * r1 / horizon;
    let a5_cap = if sup_a5 > 0.0 {
        1.0 / (16.0 * sup_a5.powi(4))
    } else {
        f64::INFINITY
    };
    (q * q, q.min(1.0).min(a5_cap))
}

/// Chooses `(c0, c1)` for a given `mu0` and horizon.
///
/// `c1` is scanned over 999 interior points of its admissible interval and,
/// for each, `c0 = min(c1 / 2, (mu0 - 4 c1 - sqrt(R1)) / 2)` splits the
/// item-(4) margin evenly while keeping `0 < c0 < c1`. The pair maximising
/// the smaller of the item-(3) and item-(4) slacks wins; ties keep the
/// smaller `c1`. When the interval is empty the midpoint of its end points
/// is returned and the report will show the failing items.
pub fn search_constants(grid: &Grid, cfg: &CarlemanConfig, coeffs: &CoefficientSet) -> (f64, f64) {
    let r1 = cfg.r1(grid);
    let (lo, hi) = c1_interval(r1, cfg.horizon, coeffs.sup_a5());
    let pick_c0 = |c1: f64| (0.5 * c1).min(0.5 * (cfg.mu0 - 4.0 * c1 - r1.sqrt()));
    if !(lo < hi) {
        let c1 = 0.5 * (lo + hi.min(1.0));
        return (pick_c0(c1).max(0.0), c1);
    }
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for j in 1..1000 {
        let c1 = lo + (hi - lo) * j as f64 / 1000.0;
        let c0 = pick_c0(c1);
        let s3 = (c1 - lo).min(hi - c1);
        let s4 = cfg.mu0 - 4.0 * c1 - c0 - r1.sqrt();
        let score = s3.min(s4).min(c0);
        if score > best.0 {
            best = (score, c0, c1);
        }
    }
    (best.1, best.2)
}

/// Endpoints where `a phi' nu > 0`.
pub fn compute_gamma0(grid: &Grid, cfg: &CarlemanConfig) -> BoundarySpec {
    let prof = grid.profile();
    let flux = |side: Side| {
        let x = match side {
            Side::Left => 0.0,
            Side::Right => grid.length(),
        };
        prof.value(x) * cfg.dphi(x) * side.normal()
    };
    BoundarySpec {
        left: flux(Side::Left) > 0.0,
        right: flux(Side::Right) > 0.0,
    }
}
