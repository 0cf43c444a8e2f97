use nalgebra::DVector;

use super::forward::{add_boundary, stack};
use super::{expect_shape, AdjointQuad, BackwardQuad, LevelOperators, RefCoefficients, TimeGrid};
use crate::spatial::{BoundarySpec, Grid};
use crate::tree::{AdaptedField, BinaryTree};
use crate::Result;

/// Backward sweep from leaf data. `node_map(k, n, mean, jump)` returns the
/// node state and the two martingale integrands.
fn sweep_backward(
    tree: BinaryTree,
    m: usize,
    terminal: (&AdaptedField, &AdaptedField),
    mut node_map: impl FnMut(usize, usize, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>),
) -> (AdaptedField, AdaptedField, AdaptedField, AdaptedField) {
    let k_max = tree.steps();
    let mut y = AdaptedField::state(tree, m);
    let mut yhat = AdaptedField::state(tree, m);
    let mut big_y = AdaptedField::integrand(tree, m);
    let mut big_yhat = AdaptedField::integrand(tree, m);
    y.level_mut(k_max).copy_from_slice(terminal.0.level(k_max));
    yhat.level_mut(k_max).copy_from_slice(terminal.1.level(k_max));
    let s = tree.sqrt_dt();
    for k in (0..k_max).rev() {
        for n in 0..BinaryTree::level_size(k) {
            let (up, down) = BinaryTree::children(n);
            let plus = stack(y.node(k + 1, up), yhat.node(k + 1, up));
            let minus = stack(y.node(k + 1, down), yhat.node(k + 1, down));
            let mean = (&plus + &minus) * 0.5;
            let jump = (&plus - &minus) / (2.0 * s);
            let (u, integrands) = node_map(k, n, &mean, &jump);
            y.node_mut(k, n).copy_from_slice(&u.as_slice()[..m]);
            yhat.node_mut(k, n).copy_from_slice(&u.as_slice()[m..]);
            big_y.node_mut(k, n).copy_from_slice(&integrands.as_slice()[..m]);
            big_yhat.node_mut(k, n).copy_from_slice(&integrands.as_slice()[m..]);
        }
    }
    (y, big_y, yhat, big_yhat)
}

/// Backward controlled system with Dirichlet control `h` on `gamma0`. This
/// inverts the refined forward level map node by node, so `(Y, Yhat)` are
/// exactly the internal controls `(f, g)` that steer the refined forward
/// system from `(y_0, yhat_0)` to the terminal data.
pub fn solve_backward_controlled(
    ops: &LevelOperators,
    gamma0: BoundarySpec,
    y_terminal: &AdaptedField,
    yhat_terminal: &AdaptedField,
    h: &AdaptedField,
) -> Result<BackwardQuad> {
    let tree = ops.tree();
    let (m, k) = (ops.m, tree.steps());
    expect_shape(y_terminal, &tree, m, k, "yT")?;
    expect_shape(yhat_terminal, &tree, m, k, "yhatT")?;
    expect_shape(h, &tree, 2 * ops.time.substeps(), k - 1, "h")?;
    let (y, big_y, yhat, big_yhat) = sweep_backward(tree, m, (y_terminal, yhat_terminal), |k, n, mean, jump| {
        let a5j = DVector::from_iterator(m, (0..m).map(|i| ops.a5[i] * jump[m + i]));
        let mut rhs = mean - &ops.g * a5j;
        add_boundary(ops, &mut rhs, gamma0, h.node(k, n), -1.0);
        let u = &ops.mb_inv * rhs;
        let mut integrands = DVector::zeros(2 * m);
        for i in 0..m {
            integrands[i] = jump[i] - ops.a4[i] * u[i];
            integrands[m + i] = jump[m + i] - ops.a3[i] * u[i];
        }
        (u, integrands)
    });
    Ok(BackwardQuad {
        y,
        big_y,
        yhat,
        big_yhat,
    })
}

/// Backward reference equation with coefficients `b`. The node system is the
/// inverse of the forward dual level map, so feeding `(Z, Zhat)` back into
/// [`super::solve_forward_dual`] reproduces `(z, zhat)` on every path.
pub fn solve_backward_reference(
    grid: &Grid,
    b: &RefCoefficients,
    time: &TimeGrid,
    z_terminal: &AdaptedField,
    zhat_terminal: &AdaptedField,
) -> Result<AdjointQuad> {
    let ops = LevelOperators::new(grid, &b.forward_coefficients(grid), time)?;
    solve_backward_reference_with(&ops, z_terminal, zhat_terminal)
}

/// As [`solve_backward_reference`], reusing operators built from
/// `b.forward_coefficients(grid)`.
pub fn solve_backward_reference_with(
    ops: &LevelOperators,
    z_terminal: &AdaptedField,
    zhat_terminal: &AdaptedField,
) -> Result<AdjointQuad> {
    let tree = ops.tree();
    let (m, k) = (ops.m, tree.steps());
    expect_shape(z_terminal, &tree, m, k, "zT")?;
    expect_shape(zhat_terminal, &tree, m, k, "zhatT")?;
    let (z, big_z, zhat, big_zhat) = sweep_backward(tree, m, (z_terminal, zhat_terminal), |_, _, mean, jump| {
        let phi = jump + &ops.sd * mean;
        let w = &ops.qd_inv * (mean - &ops.rd * &phi);
        (w, phi)
    });
    Ok(AdjointQuad {
        z,
        big_z,
        zhat,
        big_zhat,
    })
}
