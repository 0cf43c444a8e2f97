//! Forward and backward stochastic wave solvers on the binary tree.
//!
//! All schemes share one set of per-level matrices ([`LevelOperators`]); the
//! backward controlled scheme is the exact inverse of the refined forward
//! map, the dual scheme is its transpose for the pairing
//! `<yhat, z> - <y, zhat>`, and the reference scheme is the exact inverse of
//! the dual scheme. Discrete duality therefore holds to rounding error.

mod backward;
mod energy;
mod forward;
mod ops;

pub use backward::{solve_backward_controlled, solve_backward_reference, solve_backward_reference_with};
pub use energy::{energy_and_hidden_regularity, EnergyReport};
pub use forward::{solve_forward_classical, solve_forward_dual, solve_forward_refined};
pub use ops::LevelOperators;

use crate::spatial::{BoundarySpec, CoefficientSet, Grid, Side};
use crate::tree::{AdaptedField, BinaryTree};
use crate::{Error, Result};

/// A tree together with the number of deterministic substeps per level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    tree: BinaryTree,
    substeps: usize,
}

impl TimeGrid {
    pub fn new(tree: BinaryTree, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidParameter("at least one substep per level".into()));
        }
        Ok(Self { tree, substeps })
    }

    /// Fewest substeps that satisfy the CFL bound.
    pub fn auto(tree: BinaryTree, grid: &Grid) -> Self {
        let ratio = tree.dt() / grid.cfl_limit();
        let substeps = ((ratio - 1e-12).ceil() as usize).max(1);
        Self { tree, substeps }
    }

    pub fn tree(&self) -> BinaryTree {
        self.tree
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn substep(&self) -> f64 {
        self.tree.dt() / self.substeps as f64
    }

    pub fn check_cfl(&self, grid: &Grid) -> Result<()> {
        let limit = grid.cfl_limit();
        let substep = self.substep();
        if substep > limit * (1.0 + 1e-12) {
            Err(Error::Cfl { substep, limit })
        } else {
            Ok(())
        }
    }
}

/// Coefficients `b1..b5` of the backward reference equation, sampled at
/// nodes `0..=M+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RefCoefficients {
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
    pub b4: Vec<f64>,
    pub b5: Vec<f64>,
}

impl RefCoefficients {
    pub fn zero(grid: &Grid) -> Self {
        let z = vec![0.0; grid.m() + 2];
        Self {
            b1: z.clone(),
            b2: z.clone(),
            b3: z.clone(),
            b4: z.clone(),
            b5: z,
        }
    }

    /// The choice that makes the reference equation dual to the refined
    /// forward system with coefficients `a`:
    /// `b = (-a1, -div a1 + a2 - a3 a5, a3, -a4, -a5)`.
    pub fn transposition_of(grid: &Grid, a: &CoefficientSet) -> Self {
        let div = nodal_divergence(grid, &a.a1);
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let b2 = (0..a.a2.len()).map(|i| -div[i] + a.a2[i] - a.a3[i] * a.a5[i]).collect();
        Self {
            b1: neg(&a.a1),
            b2,
            b3: a.a3.clone(),
            b4: neg(&a.a4),
            b5: neg(&a.a5),
        }
    }

    /// Inverse of [`RefCoefficients::transposition_of`].
    pub fn forward_coefficients(&self, grid: &Grid) -> CoefficientSet {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let a1 = neg(&self.b1);
        let a5 = neg(&self.b5);
        let div = nodal_divergence(grid, &a1);
        let a2 = (0..self.b2.len())
            .map(|i| self.b2[i] + div[i] + self.b3[i] * a5[i])
            .collect();
        CoefficientSet {
            a1,
            a2,
            a3: self.b3.clone(),
            a4: neg(&self.b4),
            a5,
        }
    }
}

/// Centred derivative at interior nodes, copied to the two boundary nodes.
fn nodal_divergence(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let inner = grid.nodal_derivative(f);
    let mut out = Vec::with_capacity(inner.len() + 2);
    out.push(inner[0]);
    out.extend_from_slice(&inner);
    out.push(*inner.last().expect("M >= 1"));
    out
}

/// `(y, yhat)` on every level.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePair {
    pub y: AdaptedField,
    pub yhat: AdaptedField,
}

/// Solution of the backward controlled system: states on levels `0..=K`,
/// martingale integrands on `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardQuad {
    pub y: AdaptedField,
    pub big_y: AdaptedField,
    pub yhat: AdaptedField,
    pub big_yhat: AdaptedField,
}

/// Solution of the backward reference equation.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointQuad {
    pub z: AdaptedField,
    pub big_z: AdaptedField,
    pub zhat: AdaptedField,
    pub big_zhat: AdaptedField,
}

/// Solution of the forward dual equation with its boundary observation
/// `a dz/dnu` per side and substep (laid out as in [`boundary_slot`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub z: AdaptedField,
    pub zhat: AdaptedField,
    pub trace: AdaptedField,
}

/// Internal controls `f`, `g` and boundary control `h`. Per node `h` holds
/// one value per side and substep (see [`boundary_slot`]); entries outside
/// the controlled part of the boundary are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTriple {
    pub f: AdaptedField,
    pub g: AdaptedField,
    pub h: AdaptedField,
}

impl ControlTriple {
    pub fn zero(time: &TimeGrid, m: usize) -> Self {
        Self {
            f: AdaptedField::integrand(time.tree(), m),
            g: AdaptedField::integrand(time.tree(), m),
            h: boundary_field(time),
        }
    }
}

/// Zero boundary process on levels `0..K`, `2 * substeps` values per node.
pub fn boundary_field(time: &TimeGrid) -> AdaptedField {
    AdaptedField::integrand(time.tree(), 2 * time.substeps())
}

/// Position of the value for `side` during substep `j` in a boundary field.
/// Boundary data are piecewise constant on substeps and fixed at the start
/// of each tree level, hence adapted.
pub fn boundary_slot(side: Side, j: usize, substeps: usize) -> usize {
    side_column(side) * substeps + j
}

/// Slots belonging to the sides in `gamma0`.
pub fn boundary_slots(gamma0: BoundarySpec, substeps: usize) -> Vec<usize> {
    gamma0
        .sides()
        .into_iter()
        .flat_map(|s| (0..substeps).map(move |j| boundary_slot(s, j, substeps)))
        .collect()
}

pub(crate) fn side_column(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

pub(crate) fn expect_shape(field: &AdaptedField, tree: &BinaryTree, dim: usize, top: usize, what: &str) -> Result<()> {
    if field.tree() != tree || field.dim() != dim || field.top() < top {
        return Err(Error::shape(format!(
            "{what}: expected dim {dim} up to level {top}, got dim {} up to level {}",
            field.dim(),
            field.top()
        )));
    }
    Ok(())
}

pub(crate) fn expect_len(v: &[f64], m: usize, what: &str) -> Result<()> {
    if v.len() != m {
        return Err(Error::shape(format!("{what}: expected length {m}, got {}", v.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
