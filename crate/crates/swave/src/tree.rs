//! Exhaustive binary-tree surrogate for a one-dimensional Brownian motion.
//!
//! A tree with `K` steps has `2^k` nodes at level `k`. Node `n` at level `k`
//! has children `2n` (increment `+sqrt(dt)`) and `2n + 1` (increment
//! `-sqrt(dt)`) at level `k + 1`, so the binary digits of `n` spell out the
//! path from the root, most significant step first. Each branch has
//! probability one half.
//!
//! An [`AdaptedField`] stores one spatial vector per node, level-major, so a
//! whole level is a contiguous slice.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryTree {
    steps: usize,
    horizon: f64,
}

impl BinaryTree {
    /// Memory budget: `2^17 - 1` nodes per field.
    pub const MAX_STEPS: usize = 16;

    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 || steps > Self::MAX_STEPS {
            return Err(Error::InvalidParameter(format!(
                "tree step count {steps} outside 1..={}",
                Self::MAX_STEPS
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt().sqrt()
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt()
    }

    pub fn level_size(level: usize) -> usize {
        1usize << level
    }

    /// Total node count on levels `0..=top`.
    pub fn node_count(top: usize) -> usize {
        (1usize << (top + 1)) - 1
    }

    pub fn children(node: usize) -> (usize, usize) {
        (2 * node, 2 * node + 1)
    }

    pub fn parent(node: usize) -> usize {
        node >> 1
    }

    /// Brownian increment on the branch leading into `child`.
    pub fn increment_into(&self, child: usize) -> f64 {
        if child & 1 == 0 {
            self.sqrt_dt()
        } else {
            -self.sqrt_dt()
        }
    }

    /// Increments along the path from the root to `node` at `level`.
    pub fn path_increments(&self, level: usize, node: usize) -> Vec<f64> {
        (1..=level).map(|j| self.increment_into(node >> (level - j))).collect()
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.steps {
            Err(Error::LevelOutOfRange { level, max: self.steps })
        } else {
            Ok(())
        }
    }
}

/// One spatial vector of length `dim` per node on levels `0..=top`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedField {
    tree: BinaryTree,
    dim: usize,
    top: usize,
    data: Vec<f64>,
}

impl AdaptedField {
    pub fn zeros(tree: BinaryTree, dim: usize, top: usize) -> Result<Self> {
        tree.check_level(top)?;
        Ok(Self {
            tree,
            dim,
            top,
            data: vec![0.0; BinaryTree::node_count(top) * dim],
        })
    }

    /// A state field on every level `0..=K`.
    pub fn state(tree: BinaryTree, dim: usize) -> Self {
        Self::zeros(tree, dim, tree.steps).expect("top level is K")
    }

    /// An integrand field on the non-leaf levels `0..K`.
    pub fn integrand(tree: BinaryTree, dim: usize) -> Self {
        Self::zeros(tree, dim, tree.steps - 1).expect("top level is K - 1")
    }

    /// Field filled node by node; `fill(level, node, out)`.
    pub fn from_fn(
        tree: BinaryTree,
        dim: usize,
        top: usize,
        mut fill: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut field = Self::zeros(tree, dim, top)?;
        for k in 0..=top {
            for n in 0..BinaryTree::level_size(k) {
                fill(k, n, field.node_mut(k, n));
            }
        }
        Ok(field)
    }

    /// Field with the same deterministic vector at every node.
    pub fn constant(tree: BinaryTree, top: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(tree, value.len(), top, |_, _, out| out.copy_from_slice(value))
    }

    pub fn tree(&self) -> &BinaryTree {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn top(&self) -> usize {
        self.top
    }

    fn offset(&self, level: usize, node: usize) -> usize {
        ((1usize << level) - 1 + node) * self.dim
    }

    pub fn node(&self, level: usize, node: usize) -> &[f64] {
        let o = self.offset(level, node);
        &self.data[o..o + self.dim]
    }

    pub fn node_mut(&mut self, level: usize, node: usize) -> &mut [f64] {
        let o = self.offset(level, node);
        &mut self.data[o..o + self.dim]
    }

    pub fn level(&self, level: usize) -> &[f64] {
        let o = self.offset(level, 0);
        &self.data[o..o + (self.dim << level)]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let o = self.offset(level, 0);
        let len = self.dim << level;
        &mut self.data[o..o + len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &AdaptedField) -> Result<()> {
        if self.dim != other.dim || self.top != other.top || self.tree != other.tree {
            return Err(Error::shape("axpy on fields of different shape"));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest deviation between any node of a level and node 0 of that
    /// level, over all levels. Zero exactly when the field is path independent.
    pub fn cross_path_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..=self.top {
            let lvl = self.level(k);
            let first = &lvl[..self.dim];
            for chunk in lvl.chunks(self.dim) {
                for (a, b) in chunk.iter().zip(first) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }
}

/// `E[X_k] = 2^{-k} sum over level-k nodes`.
pub fn expectation(x: &AdaptedField, level: usize) -> Result<Vec<f64>> {
    if level > x.top {
        return Err(Error::LevelOutOfRange { level, max: x.top });
    }
    let weight = 1.0 / BinaryTree::level_size(level) as f64;
    let mut out = vec![0.0; x.dim];
    for chunk in x.level(level).chunks(x.dim) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o *= weight);
    Ok(out)
}

/// The martingale `E[X_level | F_k]` for `k = 0..=level`, as a field with
/// top level `level`.
pub fn conditional_expectations(x: &AdaptedField, level: usize) -> Result<AdaptedField> {
    if level > x.top {
        return Err(Error::LevelOutOfRange { level, max: x.top });
    }
    let mut out = AdaptedField::zeros(x.tree, x.dim, level)?;
    out.level_mut(level).copy_from_slice(x.level(level));
    for k in (0..level).rev() {
        for n in 0..BinaryTree::level_size(k) {
            let (up, down) = BinaryTree::children(n);
            let (u, d) = (out.node(k + 1, up).to_vec(), out.node(k + 1, down).to_vec());
            for ((o, a), b) in out.node_mut(k, n).iter_mut().zip(&u).zip(&d) {
                *o = 0.5 * (a + b);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct MartingaleRepresentation {
    /// `E[xi]`, the level-0 value.
    pub alpha: Vec<f64>,
    /// Identically zero: the tree representation carries no drift.
    pub drift: AdaptedField,
    /// Integrand on levels `0..K`.
    pub z: AdaptedField,
}

/// Writes `xi = alpha + sum_k Z_k dW_k` for a leaf field `xi`.
///
/// Only the leaf level of `xi` is read.
pub fn martingale_representation(xi: &AdaptedField) -> Result<MartingaleRepresentation> {
    let tree = xi.tree;
    if xi.top != tree.steps {
        return Err(Error::shape(format!(
            "martingale representation needs a leaf field (top level {}, got {})",
            tree.steps, xi.top
        )));
    }
    let m = conditional_expectations(xi, tree.steps)?;
    let inv = 1.0 / (2.0 * tree.sqrt_dt());
    let mut z = AdaptedField::integrand(tree, xi.dim);
    for k in 0..tree.steps {
        for n in 0..BinaryTree::level_size(k) {
            let (up, down) = BinaryTree::children(n);
            let (u, d) = (m.node(k + 1, up), m.node(k + 1, down));
            for ((o, a), b) in z.node_mut(k, n).iter_mut().zip(u).zip(d) {
                *o = (a - b) * inv;
            }
        }
    }
    Ok(MartingaleRepresentation {
        alpha: m.node(0, 0).to_vec(),
        drift: AdaptedField::integrand(tree, xi.dim),
        z,
    })
}

/// Forward reconstruction `x_{k+1} = x_k + Z_k dW_k` from `x_0 = alpha`.
pub fn reconstruct(alpha: &[f64], z: &AdaptedField) -> Result<AdaptedField> {
    let tree = z.tree;
    if z.top + 1 != tree.steps || z.dim != alpha.len() {
        return Err(Error::shape("reconstruct needs an integrand field on levels 0..K"));
    }
    let mut x = AdaptedField::state(tree, alpha.len());
    x.node_mut(0, 0).copy_from_slice(alpha);
    for k in 0..tree.steps {
        for n in 0..BinaryTree::level_size(k) {
            let parent = x.node(k, n).to_vec();
            let zk = z.node(k, n);
            let (up, down) = BinaryTree::children(n);
            for child in [up, down] {
                let dw = tree.increment_into(child);
                for ((o, p), zz) in x.node_mut(k + 1, child).iter_mut().zip(&parent).zip(zk) {
                    *o = p + zz * dw;
                }
            }
        }
    }
    Ok(x)
}

/// `Var(xi | F_{K-1})` per level-(K-1) node, summed over spatial components:
/// `sum_i ((x+_i - x-_i) / 2)^2`.
pub fn conditional_variance_last_step(xi: &AdaptedField) -> Result<Vec<f64>> {
    let tree = xi.tree;
    if xi.top != tree.steps {
        return Err(Error::shape("conditional variance needs a leaf field"));
    }
    let k = tree.steps - 1;
    Ok((0..BinaryTree::level_size(k))
        .map(|n| {
            let (up, down) = BinaryTree::children(n);
            xi.node(k + 1, up)
                .iter()
                .zip(xi.node(k + 1, down))
                .map(|(a, b)| (0.5 * (a - b)).powi(2))
                .sum()
        })
        .collect())
}
