//! Per-level linear maps shared by all schemes.
//!
//! One tree level `[t_k, t_k + dt]` is covered by `n` symplectic Euler
//! substeps of the deterministic wave part followed by the Brownian jump.
//! For a state `u = (y, yhat)` the refined forward level map is
//!
//! ```text
//! mean  m = P u + G (a5 g) + H h
//! jump  j = N u + (f, g),      N u = (a4 y, a3 y)
//! children u± = m ± sqrt(dt) j
//! ```
//!
//! where `G` is the response to a forcing held constant over the level and
//! `H` the response to Dirichlet data, which may change from one substep to
//! the next. Every other scheme is derived from
//! these matrices: the backward controlled scheme inverts the map, the dual
//! scheme is its transpose with respect to the pairing
//! `ω(u, w) = <yhat, z> - <y, zhat>`, and the reference scheme inverts the
//! dual one.

use nalgebra::{DMatrix, DVector};

use super::{boundary_slot, TimeGrid};
use crate::spatial::{CoefficientSet, Grid, Side};
use crate::tree::BinaryTree;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct LevelOperators {
    pub(crate) time: TimeGrid,
    pub(crate) m: usize,
    pub(crate) a3: Vec<f64>,
    pub(crate) a4: Vec<f64>,
    pub(crate) a5: Vec<f64>,
    /// Deterministic propagator over one level.
    pub(crate) p: DMatrix<f64>,
    /// Response to a constant forcing of the second equation.
    pub(crate) g: DMatrix<f64>,
    /// Response to unit Dirichlet data held during one substep, indexed by
    /// [`boundary_slot`].
    pub(crate) h: Vec<DVector<f64>>,
    /// `(P - [G diag(a5 a3), 0])^{-1}`
    pub(crate) mb_inv: DMatrix<f64>,
    /// Dual scheme: `m_w = qd w + rd φ`, `j_w = φ - sd m_w`.
    pub(crate) qd: DMatrix<f64>,
    pub(crate) qd_inv: DMatrix<f64>,
    pub(crate) rd: DMatrix<f64>,
    pub(crate) sd: DMatrix<f64>,
    /// Boundary observation rows: `trace[slot] = trace_rows[slot] · m_w`.
    pub(crate) trace_rows: Vec<DVector<f64>>,
}

impl LevelOperators {
    pub fn new(grid: &Grid, coeffs: &CoefficientSet, time: &TimeGrid) -> Result<Self> {
        coeffs.check(grid)?;
        time.check_cfl(grid)?;
        let m = grid.m();
        let dx = grid.dx();
        let dt = time.tree().dt();
        let delta = time.substep();
        let interior = |f: &[f64]| CoefficientSet::interior(f).to_vec();
        let (a1, a2, a3, a4, a5) = (
            interior(&coeffs.a1),
            interior(&coeffs.a2),
            interior(&coeffs.a3),
            interior(&coeffs.a4),
            interior(&coeffs.a5),
        );

        // L = A + diag(a1) D + diag(a2)
        let mut l =
            grid.elliptic_matrix() + DMatrix::from_diagonal(&DVector::from_vec(a1.clone())) * grid.gradient_matrix();
        for i in 0..m {
            l[(i, i)] += a2[i];
        }

        let n2 = 2 * m;
        let mut step = DMatrix::<f64>::identity(n2, n2);
        for i in 0..m {
            step[(i, m + i)] = delta;
        }
        // yhat' = yhat + delta L y' with y' = y + delta yhat
        let dl = &l * delta;
        step.view_mut((m, 0), (m, m)).copy_from(&dl);
        let lower_right = DMatrix::<f64>::identity(m, m) + &dl * delta;
        step.view_mut((m, m), (m, m)).copy_from(&lower_right);

        let mut p = DMatrix::<f64>::identity(n2, n2);
        let mut g = DMatrix::<f64>::zeros(n2, m);
        for _ in 0..time.substeps() {
            p = &step * &p;
            g = &step * &g;
            for i in 0..m {
                g[(m + i, i)] += delta;
            }
        }

        // Dirichlet data enters the stencil as a forcing of the second equation,
        // through the elliptic part and the centred convection.
        let inv_dx2 = 1.0 / (dx * dx);
        let mut left = DVector::zeros(m);
        left[0] = grid.a_boundary(Side::Left) * inv_dx2 - a1[0] / (2.0 * dx);
        let mut right = DVector::zeros(m);
        right[m - 1] = grid.a_boundary(Side::Right) * inv_dx2 + a1[m - 1] / (2.0 * dx);
        let n_sub = time.substeps();
        let mut h = vec![DVector::zeros(n2); 2 * n_sub];
        for (side, b) in [(Side::Left, left), (Side::Right, right)] {
            let mut v = DVector::zeros(n2);
            v.rows_mut(m, m).copy_from(&(b * delta));
            for j in (0..n_sub).rev() {
                h[boundary_slot(side, j, n_sub)] = v.clone();
                v = &step * v;
            }
        }

        let mut ga53 = g.clone();
        for (j, mut col) in ga53.column_iter_mut().enumerate() {
            col *= a5[j] * a3[j];
        }
        let mut mb = p.clone();
        {
            let mut block = mb.view_mut((0, 0), (n2, m));
            block -= &ga53;
        }
        let mb_inv = mb
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("level propagator is singular".into()))?;

        let omega = omega_matrix(m, dx);
        let omega_inv = omega_inv_matrix(m, dx);
        let qd = &omega_inv * mb_inv.transpose() * &omega;
        let qd_inv = &omega_inv * mb.transpose() * &omega;

        let mut n = DMatrix::<f64>::zeros(n2, n2);
        for i in 0..m {
            n[(i, i)] = a4[i];
            n[(m + i, i)] = a3[i];
        }
        let rd = -(&omega_inv * mb_inv.transpose() * n.transpose() * &omega) * dt;

        let mut ga5 = g.clone();
        for (j, mut col) in ga5.column_iter_mut().enumerate() {
            col *= a5[j];
        }
        let mut e_hat = DMatrix::<f64>::zeros(n2, m);
        for i in 0..m {
            e_hat[(m + i, i)] = 1.0;
        }
        let sd = (&omega_inv * e_hat * ga5.transpose() * &omega) / dt;

        let trace_rows = h.iter().map(|col| -(omega.transpose() * col) / delta).collect();

        Ok(Self {
            time: *time,
            m,
            a3,
            a4,
            a5,
            p,
            g,
            h,
            mb_inv,
            qd,
            qd_inv,
            rd,
            sd,
            trace_rows,
        })
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn tree(&self) -> BinaryTree {
        self.time.tree()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub(crate) fn h(&self, slot: usize) -> &DVector<f64> {
        &self.h[slot]
    }

    pub(crate) fn trace_row(&self, slot: usize) -> &DVector<f64> {
        &self.trace_rows[slot]
    }

    /// Deterministic level propagator, exposed for energy studies.
    pub fn propagator(&self) -> &DMatrix<f64> {
        &self.p
    }
}

/// `Ω = dx [[0, -I], [I, 0]]`, so that `uᵀ Ω w = <yhat, z> - <y, zhat>`.
fn omega_matrix(m: usize, dx: f64) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        o[(i, m + i)] = -dx;
        o[(m + i, i)] = dx;
    }
    o
}

fn omega_inv_matrix(m: usize, dx: f64) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        o[(i, m + i)] = 1.0 / dx;
        o[(m + i, i)] = -1.0 / dx;
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Profile;

    #[test]
    fn pure_wave_propagator_is_symplectic() {
        let grid = Grid::new(
            1.0,
            7,
            Profile::Sine {
                base: 1.0,
                amplitude: 0.3,
                wavenumber: 2.0,
            },
        )
        .unwrap();
        let tree = BinaryTree::new(3, 1.0).unwrap();
        let time = TimeGrid::auto(tree, &grid);
        let ops = LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &time).unwrap();
        let omega = omega_matrix(7, grid.dx());
        let defect = ops.p.transpose() * &omega * &ops.p - &omega;
        assert!(defect.amax() < 1e-10 * omega.amax());
        // With no lower-order terms the dual propagator is the primal one.
        assert!((&ops.qd - &ops.p).amax() < 1e-9);
    }

    #[test]
    fn omega_inverse() {
        let o = omega_matrix(4, 0.2);
        let oi = omega_inv_matrix(4, 0.2);
        assert!((o * oi - DMatrix::<f64>::identity(8, 8)).amax() < 1e-15);
    }
}
