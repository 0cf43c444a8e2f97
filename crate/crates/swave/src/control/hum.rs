use nalgebra::DVector;

use super::gramian::boundary_map;
use super::Gramian;
use crate::solvers::{solve_backward_controlled, BackwardQuad, LevelOperators};
use crate::spatial::Grid;
use crate::tree::AdaptedField;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct HumResult {
    /// Boundary control on `Γ0`.
    pub h: AdaptedField,
    /// Controlled backward solution; `(Y, Yhat)` are the internal controls.
    pub quad: BackwardQuad,
    /// Minimiser of the HUM functional in `(z0, zhat0)` coordinates.
    pub dual_data: Vec<f64>,
    pub iterations: usize,
    /// Relative CG residual after each iteration.
    pub cg_history: Vec<f64>,
    /// HUM functional `wᵀΛw/2 - rhsᵀw` after each iteration; non-increasing.
    pub functional_history: Vec<f64>,
    /// Achieved minus desired initial data, energy norm.
    pub residual: f64,
    /// `residual` over the energy norm of the defect to be corrected.
    pub relative_residual: f64,
}

/// Steers the backward controlled system from `(yT, yhatT)` to the
/// deterministic initial state `target0`. Equivalently, the returned
/// `(f, g, h) = (Y, Yhat, h)` drive the refined forward system from
/// `target0` to the terminal data.
pub fn hum_synthesize(
    ops: &LevelOperators,
    grid: &Grid,
    gramian: &Gramian,
    target0: (&[f64], &[f64]),
    y_terminal: &AdaptedField,
    yhat_terminal: &AdaptedField,
) -> Result<HumResult> {
    let m = grid.m();
    let gamma0 = gramian.gamma0;
    if !gramian.is_definite() {
        return Err(Error::Precondition(
            "Gramian is singular: observability fails on this boundary".into(),
        ));
    }
    let free = solve_backward_controlled(
        ops,
        gamma0,
        y_terminal,
        yhat_terminal,
        &crate::solvers::boundary_field(ops.time()),
    )?;
    let defect_y: Vec<f64> = target0.0.iter().zip(free.y.node(0, 0)).map(|(a, b)| a - b).collect();
    let defect_v: Vec<f64> = target0.1.iter().zip(free.yhat.node(0, 0)).map(|(a, b)| a - b).collect();
    // With h = -B w and zero terminal data the initial state u_0 satisfies
    // Λ w = Ω u_0, Ω u = dx (-yhat, y).
    let dx = grid.dx();
    let mut rhs = DVector::zeros(2 * m);
    for i in 0..m {
        rhs[i] = -dx * defect_v[i];
        rhs[m + i] = dx * defect_y[i];
    }
    let sym = (&gramian.matrix + gramian.matrix.transpose()) * 0.5;
    // Λ is spectrally equivalent to the energy mass matrix (observability
    // from below, hidden regularity from above), so it is the natural
    // preconditioner: unpreconditioned CG stalls once M grows.
    let mass = super::gramian::mass_matrix(grid)
        .cholesky()
        .ok_or_else(|| Error::Numerical("energy mass matrix is not positive definite".into()))?;
    let precond = |r: &DVector<f64>| mass.solve(r);
    let (w, cg_history, functional_history) = conjugate_gradient(&sym, &rhs, &precond, 1e-10, 4 * m)?;
    let mut h = boundary_map(ops, gamma0, &w.as_slice()[..m], &w.as_slice()[m..])?;
    h.scale(-1.0);
    let quad = solve_backward_controlled(ops, gamma0, y_terminal, yhat_terminal, &h)?;
    let err_y: Vec<f64> = quad.y.node(0, 0).iter().zip(target0.0).map(|(a, b)| a - b).collect();
    let err_v: Vec<f64> = quad.yhat.node(0, 0).iter().zip(target0.1).map(|(a, b)| a - b).collect();
    let residual = (grid.h01_sq(&err_y) + grid.l2_sq(&err_v)).sqrt();
    let defect = (grid.h01_sq(&defect_y) + grid.l2_sq(&defect_v)).sqrt();
    Ok(HumResult {
        h,
        quad,
        dual_data: w.as_slice().to_vec(),
        iterations: cg_history.len(),
        cg_history,
        functional_history,
        residual,
        relative_residual: if defect > 0.0 { residual / defect } else { residual },
    })
}

/// Preconditioned CG for an SPD matrix; returns the solution, the relative
/// residual history `|b - Ax| / |b|` and the values of the quadratic
/// functional, which decrease monotonically.
fn conjugate_gradient(
    a: &nalgebra::DMatrix<f64>,
    b: &DVector<f64>,
    precond: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, Vec<f64>, Vec<f64>)> {
    let bnorm = b.norm();
    let mut x = DVector::zeros(b.len());
    if bnorm == 0.0 {
        return Ok((x, Vec::new(), Vec::new()));
    }
    let mut r = b.clone();
    let mut zr = precond(&r);
    let mut p = zr.clone();
    let mut rz = r.dot(&zr);
    let mut history = Vec::new();
    let mut functional = Vec::new();
    for _ in 0..max_iter {
        let ap = a * &p;
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rnorm = r.norm();
        history.push(rnorm / bnorm);
        // With r = b - A x: xᵀAx/2 - bᵀx = -(bᵀx + rᵀx)/2.
        functional.push(-0.5 * (b.dot(&x) + r.dot(&x)));
        if rnorm <= tol * bnorm {
            return Ok((x, history, functional));
        }
        zr = precond(&r);
        let rz_new = r.dot(&zr);
        p = &zr + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::Numerical(format!(
        "CG did not reach relative residual {tol:e} in {max_iter} iterations (last {:.3e})",
        history.last().copied().unwrap_or(1.0)
    )))
}
