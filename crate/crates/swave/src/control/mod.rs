//! Observability, HUM control synthesis, reduction checks and the negative
//! controllability certificates.
//!
//! Sign conventions live in one place: [`pairing`] is the bilinear form
//! `ω((y, yhat), (z, zhat)) = <yhat, z> - <y, zhat>` and every identity in
//! this module is stated through it. For the backward controlled state `u`
//! and the forward dual state `w` the tree scheme satisfies exactly
//!
//! ```text
//! E ω(u_K, w_K) - ω(u_0, w_0)
//!   = E sum_k [dt (<Yhat, f> - <Y, fhat>) - δ sum_{Γ0, substeps} h · trace(w)]
//! ```
//!
//! with `δ = dt / substeps`, boundary data being piecewise constant on substeps.

mod gramian;
mod hum;
mod negative;
mod reduction;

pub use gramian::{
    boundary_inner, boundary_map, gramian_assemble, gramian_direct, mass_matrix, observability_ratio, Gramian,
    Observability,
};
pub use hum::{hum_synthesize, HumResult};
pub use negative::{
    negative_classical, negative_localized, negative_no_boundary, ClassicalCertificate, LocalizedCertificate,
    LocalizedTarget, NoBoundaryCertificate,
};
pub use reduction::{reduction_check, ReductionReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::solvers::{solve_backward_controlled, solve_forward_dual, LevelOperators};
use crate::spatial::{BoundarySpec, Grid};
use crate::tree::{AdaptedField, BinaryTree};
use crate::Result;

/// `<yhat, z> - <y, zhat>`.
pub fn pairing(grid: &Grid, y: &[f64], yhat: &[f64], z: &[f64], zhat: &[f64]) -> f64 {
    grid.inner(yhat, z) - grid.inner(y, zhat)
}

/// Named metrics of one experiment run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub id: String,
    pub parameters: Vec<(String, String)>,
    pub metrics: Vec<(String, f64)>,
    pub verdict: bool,
}

impl ExperimentResult {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            parameters: Vec::new(),
            metrics: Vec::new(),
            verdict: true,
        }
    }

    pub fn param(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.parameters.push((name.to_string(), value.to_string()));
        self
    }

    pub fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.push((name.to_string(), value));
        self
    }

    /// Records a metric together with its threshold test.
    pub fn check(&mut self, name: &str, value: f64, pass: bool) -> &mut Self {
        self.metrics.push((name.to_string(), value));
        self.verdict &= pass;
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Both sides of the discrete duality identity for one random instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Sum of the absolute values of all terms, the scale for the relative gap.
    pub scale: f64,
}

impl DualityCheck {
    pub fn relative_gap(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / self.scale
        }
    }
}

/// Seeded source of test data, uniform on `[-1, 1)`.
pub struct Sampler(ChaCha8Rng);

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn vec(&mut self, m: usize) -> Vec<f64> {
        random_vec(m, &mut self.0)
    }

    /// Field of dimension `dim` on levels `0..=top`.
    pub fn field(&mut self, tree: BinaryTree, dim: usize, top: usize) -> AdaptedField {
        random_field(tree, dim, top, &mut self.0)
    }
}

pub(crate) fn random_field(tree: BinaryTree, dim: usize, top: usize, rng: &mut ChaCha8Rng) -> AdaptedField {
    AdaptedField::from_fn(tree, dim, top, |_, _, out| {
        out.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))
    })
    .expect("level within tree")
}

pub(crate) fn random_vec(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Evaluates the duality identity between [`solve_backward_controlled`]
/// (operators `primal`) and [`solve_forward_dual`] (operators `dual`) on
/// random terminal data, boundary control, sources and initial data.
/// Passing the same operators twice gives the adjoint-matched pair.
pub fn duality_check(
    primal: &LevelOperators,
    dual: &LevelOperators,
    grid: &Grid,
    gamma0: BoundarySpec,
    seed: u64,
) -> Result<DualityCheck> {
    let tree = primal.tree();
    let (m, k) = (grid.m(), tree.steps());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let yt = random_field(tree, m, k, &mut rng);
    let yht = random_field(tree, m, k, &mut rng);
    let h = random_field(tree, 2 * primal.time().substeps(), k - 1, &mut rng);
    let f = random_field(tree, m, k - 1, &mut rng);
    let fh = random_field(tree, m, k - 1, &mut rng);
    let z0 = random_vec(m, &mut rng);
    let zh0 = random_vec(m, &mut rng);
    let q = solve_backward_controlled(primal, gamma0, &yt, &yht, &h)?;
    let d = solve_forward_dual(dual, &z0, &zh0, &f, &fh)?;
    let omega = |lvl: usize, n: usize| {
        pairing(
            grid,
            q.y.node(lvl, n),
            q.yhat.node(lvl, n),
            d.z.node(lvl, n),
            d.zhat.node(lvl, n),
        )
    };
    let leaves = BinaryTree::level_size(k);
    let terminal = (0..leaves).map(|n| omega(k, n)).sum::<f64>() / leaves as f64;
    let initial = omega(0, 0);
    let mut rhs = 0.0;
    let mut scale = terminal.abs() + initial.abs();
    let slots = crate::solvers::boundary_slots(gamma0, primal.time().substeps());
    let delta = primal.time().substep();
    for lvl in 0..k {
        let p = 1.0 / BinaryTree::level_size(lvl) as f64;
        for n in 0..BinaryTree::level_size(lvl) {
            let a = tree.dt() * grid.inner(q.big_yhat.node(lvl, n), f.node(lvl, n));
            let b = tree.dt() * grid.inner(q.big_y.node(lvl, n), fh.node(lvl, n));
            let bd: f64 = delta
                * slots
                    .iter()
                    .map(|&c| h.node(lvl, n)[c] * d.trace.node(lvl, n)[c])
                    .sum::<f64>();
            rhs += p * (a - b - bd);
            scale += p * (a.abs() + b.abs() + bd.abs());
        }
    }
    Ok(DualityCheck {
        lhs: terminal - initial,
        rhs,
        scale,
    })
}
