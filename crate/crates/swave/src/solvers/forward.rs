use nalgebra::DVector;

use super::{boundary_slots, expect_len, expect_shape, ControlTriple, DualSolution, LevelOperators, StatePair};
use crate::spatial::BoundarySpec;
use crate::tree::{AdaptedField, BinaryTree};
use crate::Result;

pub(crate) fn stack(a: &[f64], b: &[f64]) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b).copied())
}

/// Runs a forward sweep from a deterministic root state. `level_map(k, n, u)`
/// returns the conditional mean and the jump coefficient at node `(k, n)`.
fn sweep_forward(
    tree: BinaryTree,
    m: usize,
    root: DVector<f64>,
    mut level_map: impl FnMut(usize, usize, &DVector<f64>) -> (DVector<f64>, DVector<f64>),
) -> StatePair {
    let mut y = AdaptedField::state(tree, m);
    let mut yhat = AdaptedField::state(tree, m);
    y.node_mut(0, 0).copy_from_slice(&root.as_slice()[..m]);
    yhat.node_mut(0, 0).copy_from_slice(&root.as_slice()[m..]);
    let s = tree.sqrt_dt();
    for k in 0..tree.steps() {
        for n in 0..BinaryTree::level_size(k) {
            let u = stack(y.node(k, n), yhat.node(k, n));
            let (mean, jump) = level_map(k, n, &u);
            let (up, down) = BinaryTree::children(n);
            for (child, sign) in [(up, 1.0), (down, -1.0)] {
                let v = &mean + &jump * (sign * s);
                y.node_mut(k + 1, child).copy_from_slice(&v.as_slice()[..m]);
                yhat.node_mut(k + 1, child).copy_from_slice(&v.as_slice()[m..]);
            }
        }
    }
    StatePair { y, yhat }
}

pub(crate) fn add_boundary(ops: &LevelOperators, mean: &mut DVector<f64>, gamma0: BoundarySpec, h: &[f64], sign: f64) {
    for slot in boundary_slots(gamma0, ops.time.substeps()) {
        if h[slot] != 0.0 {
            mean.axpy(sign * h[slot], ops.h(slot), 1.0);
        }
    }
}

/// Classical system: the noise enters only the velocity equation,
/// `dv = (A y + a1 Dy + a2 y + g1) dt + (a3 y + g2) dW`, with Dirichlet data
/// `h` on `gamma0`.
#[allow(clippy::too_many_arguments)]
pub fn solve_forward_classical(
    ops: &LevelOperators,
    gamma0: BoundarySpec,
    y0: &[f64],
    y1: &[f64],
    g1: &AdaptedField,
    g2: &AdaptedField,
    h: &AdaptedField,
) -> Result<StatePair> {
    let tree = ops.tree();
    let (m, k) = (ops.m, tree.steps());
    expect_len(y0, m, "y0")?;
    expect_len(y1, m, "y1")?;
    expect_shape(g1, &tree, m, k - 1, "g1")?;
    expect_shape(g2, &tree, m, k - 1, "g2")?;
    expect_shape(h, &tree, 2 * ops.time.substeps(), k - 1, "h")?;
    Ok(sweep_forward(tree, m, stack(y0, y1), |k, n, u| {
        let mut mean = &ops.p * u + &ops.g * DVector::from_column_slice(g1.node(k, n));
        add_boundary(ops, &mut mean, gamma0, h.node(k, n), 1.0);
        let mut jump = DVector::zeros(2 * m);
        let forcing = g2.node(k, n);
        for i in 0..m {
            jump[m + i] = ops.a3[i] * u[i] + forcing[i];
        }
        (mean, jump)
    }))
}

/// Refined system: `dy = yhat dt + (a4 y + f) dW`,
/// `dyhat = (A y + a1 Dy + a2 y + a5 g) dt + (a3 y + g) dW`.
pub fn solve_forward_refined(
    ops: &LevelOperators,
    gamma0: BoundarySpec,
    y0: &[f64],
    yhat0: &[f64],
    controls: &ControlTriple,
) -> Result<StatePair> {
    let tree = ops.tree();
    let (m, k) = (ops.m, tree.steps());
    expect_len(y0, m, "y0")?;
    expect_len(yhat0, m, "yhat0")?;
    expect_shape(&controls.f, &tree, m, k - 1, "f")?;
    expect_shape(&controls.g, &tree, m, k - 1, "g")?;
    expect_shape(&controls.h, &tree, 2 * ops.time.substeps(), k - 1, "h")?;
    Ok(sweep_forward(tree, m, stack(y0, yhat0), |k, n, u| {
        let (f, g) = (controls.f.node(k, n), controls.g.node(k, n));
        let a5g = DVector::from_iterator(m, (0..m).map(|i| ops.a5[i] * g[i]));
        let mut mean = &ops.p * u + &ops.g * a5g;
        add_boundary(ops, &mut mean, gamma0, controls.h.node(k, n), 1.0);
        let mut jump = DVector::zeros(2 * m);
        for i in 0..m {
            jump[i] = ops.a4[i] * u[i] + f[i];
            jump[m + i] = ops.a3[i] * u[i] + g[i];
        }
        (mean, jump)
    }))
}

/// Forward dual equation with zero Dirichlet data:
/// `dz = zhat dt + (f_src - a5 z) dW`,
/// `dzhat = (A z - a1 Dz + (-div a1 + a2 - a3 a5) z + a3 f_src - a4 fhat_src) dt + fhat_src dW`.
/// The scheme is the transpose of the refined forward level map, so the
/// recorded trace is exactly the boundary observation dual to Dirichlet
/// control.
pub fn solve_forward_dual(
    ops: &LevelOperators,
    z0: &[f64],
    zhat0: &[f64],
    f_src: &AdaptedField,
    fhat_src: &AdaptedField,
) -> Result<DualSolution> {
    let tree = ops.tree();
    let (m, k) = (ops.m, tree.steps());
    expect_len(z0, m, "z0")?;
    expect_len(zhat0, m, "zhat0")?;
    expect_shape(f_src, &tree, m, k - 1, "f_src")?;
    expect_shape(fhat_src, &tree, m, k - 1, "fhat_src")?;
    let mut trace = super::boundary_field(&ops.time);
    let pair = sweep_forward(tree, m, stack(z0, zhat0), |k, n, w| {
        let phi = stack(f_src.node(k, n), fhat_src.node(k, n));
        let mean = &ops.qd * w + &ops.rd * &phi;
        let jump = &phi - &ops.sd * &mean;
        for (slot, out) in trace.node_mut(k, n).iter_mut().enumerate() {
            *out = ops.trace_row(slot).dot(&mean);
        }
        (mean, jump)
    });
    Ok(DualSolution {
        z: pair.y,
        zhat: pair.yhat,
        trace,
    })
}
