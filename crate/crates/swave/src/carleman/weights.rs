use super::{closed_nodes, CarlemanConfig};
use crate::spatial::Grid;

/// Weight quantities at one space-time point, from exact derivatives of
/// `ell = lambda (phi(x) - c1 (t - T/2)^2)` and of the coefficient profile.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WeightPoint {
    pub a: f64,
    pub da: f64,
    pub ell: f64,
    pub ell_t: f64,
    pub ell_tt: f64,
    pub ell_x: f64,
    pub ell_xx: f64,
    pub theta: f64,
    pub psi: f64,
    pub psi_t: f64,
    pub psi_x: f64,
    /// `𝓐`
    pub a_field: f64,
    /// `𝓑`
    pub b_field: f64,
    pub c11: f64,
    /// Coefficient of `vhat^2` on the right side: `ell_tt + (a ell_x)_x - Psi`.
    pub vhat_coef: f64,
    /// Coefficient of `v_x vhat`: `-2 ((a ell_x)_t + a ell_tx)`.
    pub cross_coef: f64,
}

pub fn weight_at(grid: &Grid, cfg: &CarlemanConfig, t: f64, x: f64) -> WeightPoint {
    let prof = grid.profile();
    let (a, da, dda, ddda) = (
        prof.value(x),
        prof.derivative(x, 1),
        prof.derivative(x, 2),
        prof.derivative(x, 3),
    );
    let lam = cfg.lambda;
    let tau = t - 0.5 * cfg.horizon;
    let ell = lam * (cfg.phi(x) - cfg.c1 * tau * tau);
    let ell_t = -2.0 * lam * cfg.c1 * tau;
    let ell_tt = -2.0 * lam * cfg.c1;
    let ell_x = lam * cfg.dphi(x);
    let ell_xx = lam * cfg.ddphi();
    // phi is quadratic and a is time independent, so ell_xxx = ell_tx = 0.
    let a_ellx_x = da * ell_x + a * ell_xx;
    let a_ellx_xx = dda * ell_x + 2.0 * da * ell_xx;
    let psi = ell_tt + a_ellx_x - cfg.c0 * lam;
    let psi_x = a_ellx_xx;
    let psi_xx = ddda * ell_x + 3.0 * dda * ell_xx;
    let (psi_t, psi_tt) = (0.0, 0.0);

    let big_a = (ell_t * ell_t - ell_tt) - (a * ell_x * ell_x - a_ellx_x) - psi;
    let big_a_t = 2.0 * ell_t * ell_tt;
    let big_a_x = -(da * ell_x * ell_x + 2.0 * a * ell_x * ell_xx) + a_ellx_xx - psi_x;
    let a_ell_t_t = big_a_t * ell_t + big_a * ell_tt;
    let a_a_ellx_x = big_a_x * a * ell_x + big_a * a_ellx_x;
    let a_psix_x = da * psi_x + a * psi_xx;
    let big_b = big_a * psi + a_ell_t_t - a_a_ellx_x + 0.5 * (psi_tt - a_psix_x);

    let a2_ellx_x = 2.0 * a * da * ell_x + a * a * ell_xx;
    let c11 = a * ell_tt + 2.0 * a * a_ellx_x - a2_ellx_x + psi * a;

    WeightPoint {
        a,
        da,
        ell,
        ell_t,
        ell_tt,
        ell_x,
        ell_xx,
        theta: ell.exp(),
        psi,
        psi_t,
        psi_x,
        a_field: big_a,
        b_field: big_b,
        c11,
        vhat_coef: ell_tt + a_ellx_x - psi,
        cross_coef: 0.0,
    }
}

/// Tabulated weight fields on `times x nodes 0..=M+1`, row-major in time.
#[derive(Clone, Debug)]
pub struct WeightFields {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub points: Vec<WeightPoint>,
}

impl WeightFields {
    pub fn at(&self, it: usize, ix: usize) -> &WeightPoint {
        &self.points[it * self.x.len() + ix]
    }

    /// Rows `(t, x, ell, theta, Psi, A, B, c11)`.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 8]> + '_ {
        self.t.iter().enumerate().flat_map(move |(it, &t)| {
            self.x.iter().enumerate().map(move |(ix, &x)| {
                let p = self.at(it, ix);
                [t, x, p.ell, p.theta, p.psi, p.a_field, p.b_field, p.c11]
            })
        })
    }

    pub const HEADER: [&'static str; 8] = ["t", "x", "ell", "theta", "Psi", "A", "B", "c11"];
}

pub fn weight_fields(grid: &Grid, cfg: &CarlemanConfig, times: &[f64]) -> WeightFields {
    let x: Vec<f64> = closed_nodes(grid).collect();
    let points = times
        .iter()
        .flat_map(|&t| x.iter().map(move |&xx| weight_at(grid, cfg, t, xx)))
        .collect();
    WeightFields {
        t: times.to_vec(),
        x,
        points,
    }
}

/// Half-widths (as fractions of `T`) of the time windows around `T/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Windows {
    /// Largest `eps0` with `Q0 ⊆ Λ0`.
    pub eps0: f64,
    /// Smallest `eps1` with `Λ2 ⊆ Q1` and `ell < 0` outside `Q1`.
    pub eps1: f64,
}

/// Grid search over `eps = j / 1000`, `j = 1..=499`.
///
/// The level sets are `Λ_i = {phi - c1 (t - T/2)^2 > R0^2 / (2 (i + 2))}`.
/// Since `phi - c1 tau^2` decreases in `|tau|`, each inclusion is decided on
/// the window edge `|tau| = eps T` at every grid node. Returns `None` when no
/// admissible `eps1` exists (which happens exactly when `c1 T^2 / 4 <= R1^2`)
/// or no `eps0` is admissible.
pub fn time_windows(grid: &Grid, cfg: &CarlemanConfig) -> Option<Windows> {
    let r0_sq = cfg.r0_sq(grid);
    let at_edge = |eps: f64| -> Vec<f64> {
        let tau = eps * cfg.horizon;
        closed_nodes(grid).map(|x| cfg.phi(x) - cfg.c1 * tau * tau).collect()
    };
    let mut candidates = (1..500).map(|j| j as f64 / 1000.0);
    let eps1 = candidates.clone().find(|&eps| {
        let vals = at_edge(eps);
        vals.iter().all(|v| *v <= r0_sq / 8.0) && vals.iter().all(|v| *v < 0.0)
    })?;
    let eps0 = candidates.rfind(|&eps| at_edge(eps).iter().all(|v| *v >= r0_sq / 4.0))?;
    Some(Windows { eps0, eps1 })
}

/// Smallest `lambda` on the ladder `2^{j/4}`, `j = -16..=64`, from which on
/// every ladder value passes both pointwise coefficient checks on
/// `times x nodes`:
///
/// * `c11 >= lambda (mu0 - 4 c1 - c0) a`
/// * `𝓑 >= lambda^3 [(mu0 + 4 c1 + c0) a phi'^2 - 8 c1^2 (4 c1 + c0) (t - T/2)^2]`
///
/// The second check has no explicit `lambda^2` allowance: the cubic part of
/// `𝓑` exceeds the bracket by a positive margin, so it absorbs the remainder
/// once `lambda` is large. Returns `None` if the largest ladder value fails.
pub fn certify_lambda(grid: &Grid, cfg: &CarlemanConfig, times: &[f64]) -> Option<f64> {
    let ladder: Vec<f64> = (-16..=64).map(|j| 2f64.powf(j as f64 / 4.0)).collect();
    let passes = |lam: f64| {
        let c = CarlemanConfig { lambda: lam, ..*cfg };
        times.iter().all(|&t| {
            closed_nodes(grid).all(|x| {
                let p = weight_at(grid, &c, t, x);
                let tau = t - 0.5 * cfg.horizon;
                let c11_floor = lam * (cfg.mu0 - 4.0 * cfg.c1 - cfg.c0) * p.a;
                let cubic = (cfg.mu0 + 4.0 * cfg.c1 + cfg.c0) * p.a * cfg.dphi(x).powi(2)
                    - 8.0 * cfg.c1 * cfg.c1 * (4.0 * cfg.c1 + cfg.c0) * tau * tau;
                let tol = 1e-12 * lam.powi(3) * (1.0 + cubic.abs());
                p.c11 >= c11_floor - 1e-12 * lam * (1.0 + c11_floor.abs() / lam)
                    && p.b_field >= lam.powi(3) * cubic - tol
            })
        })
    };
    let mut certified = None;
    for &lam in ladder.iter().rev() {
        if passes(lam) {
            certified = Some(lam);
        } else {
            break;
        }
    }
    certified
}
