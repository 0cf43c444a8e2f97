use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::random_vec;
use crate::solvers::{boundary_slots, solve_backward_controlled, solve_forward_dual, LevelOperators};
use crate::spatial::{BoundarySpec, Grid};
use crate::tree::{AdaptedField, BinaryTree};
use crate::{Error, Result};

/// Boundary observation of the unforced dual solution started from
/// `(z0, zhat0)`, restricted to `gamma0` (the other column is zero).
pub fn boundary_map(ops: &LevelOperators, gamma0: BoundarySpec, z0: &[f64], zhat0: &[f64]) -> Result<AdaptedField> {
    let tree = ops.tree();
    let zero = AdaptedField::integrand(tree, ops.m());
    let mut trace = solve_forward_dual(ops, z0, zhat0, &zero, &zero)?.trace;
    mask_boundary(&mut trace, gamma0);
    Ok(trace)
}

pub(crate) fn mask_boundary(field: &mut AdaptedField, gamma0: BoundarySpec) {
    let dim = field.dim();
    let keep = boundary_slots(gamma0, dim / 2);
    for node in field.as_mut_slice().chunks_mut(dim) {
        for (slot, v) in node.iter_mut().enumerate() {
            if !keep.contains(&slot) {
                *v = 0.0;
            }
        }
    }
}

/// `E int_0^T sum_{Γ0} a b dt` for boundary fields holding one value per
/// side and substep.
pub fn boundary_inner(tree: &BinaryTree, gamma0: BoundarySpec, a: &AdaptedField, b: &AdaptedField) -> f64 {
    let substeps = a.dim() / 2;
    let slots = boundary_slots(gamma0, substeps);
    let delta = tree.dt() / substeps as f64;
    let mut total = 0.0;
    for k in 0..tree.steps() {
        let w = delta / BinaryTree::level_size(k) as f64;
        for n in 0..BinaryTree::level_size(k) {
            let (x, y) = (a.node(k, n), b.node(k, n));
            total += w * slots.iter().map(|&c| x[c] * y[c]).sum::<f64>();
        }
    }
    total
}

/// `blockdiag(dx (-A), dx I)`: the Gram matrix of the `H^1_0 x L^2` energy
/// norm in `(z0, zhat0)` coordinates.
pub fn mass_matrix(grid: &Grid) -> DMatrix<f64> {
    let m = grid.m();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m))
        .copy_from(&(grid.elliptic_matrix() * -grid.dx()));
    for i in 0..m {
        out[(m + i, m + i)] = grid.dx();
    }
    out
}

/// Controllability Gramian in `(z0, zhat0)` coordinates.
#[derive(Clone, Debug)]
pub struct Gramian {
    pub gamma0: BoundarySpec,
    pub matrix: DMatrix<f64>,
    /// `max |Λ - Λᵀ| / max |Λ|` before any symmetrisation.
    pub asymmetry: f64,
    /// Eigenvalues of the symmetric part, ascending.
    pub eigenvalues: Vec<f64>,
}

impl Gramian {
    fn from_matrix(gamma0: BoundarySpec, matrix: DMatrix<f64>) -> Self {
        let amax = matrix.amax();
        let asymmetry = if amax > 0.0 {
            (&matrix - matrix.transpose()).amax() / amax
        } else {
            0.0
        };
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        Self {
            gamma0,
            matrix,
            asymmetry,
            eigenvalues,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let v = DVector::from_column_slice(w);
        v.dot(&(&self.matrix * &v))
    }

    /// Positive definite relative to its own scale.
    pub fn is_definite(&self) -> bool {
        self.lambda_max() > 0.0 && self.lambda_min() > 1e-12 * self.lambda_max()
    }
}

/// `Λ = Bᵀ W B` assembled column by column: column `j` is the initial state
/// of the backward controlled system driven by `h = B e_j` from zero
/// terminal data, read through the pairing. Symmetry is checked, not imposed.
pub fn gramian_assemble(ops: &LevelOperators, grid: &Grid, gamma0: BoundarySpec) -> Result<Gramian> {
    let m = grid.m();
    let tree = ops.tree();
    let zero_state = AdaptedField::state(tree, m);
    let columns: Vec<Result<Vec<f64>>> = (0..2 * m)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; 2 * m];
            e[j] = 1.0;
            let h = boundary_map(ops, gamma0, &e[..m], &e[m..])?;
            let q = solve_backward_controlled(ops, gamma0, &zero_state, &zero_state, &h)?;
            // ω(u_0, w) = <Bw, h>_W for every w, so (Λ e_j)ᵀ w = ω(u_0, w).
            let dx = grid.dx();
            let mut col: Vec<f64> = q.yhat.node(0, 0).iter().map(|v| dx * v).collect();
            col.extend(q.y.node(0, 0).iter().map(|v| -dx * v));
            Ok(col)
        })
        .collect();
    let mut matrix = DMatrix::zeros(2 * m, 2 * m);
    for (j, col) in columns.into_iter().enumerate() {
        matrix.set_column(j, &DVector::from_vec(col?));
    }
    let g = Gramian::from_matrix(gamma0, matrix);
    if g.asymmetry > 1e-10 {
        return Err(Error::Numerical(format!(
            "Gramian asymmetry {:.3e} exceeds 1e-10: primal and dual schemes are not adjoint",
            g.asymmetry
        )));
    }
    Ok(g)
}

/// `Bᵀ W B` from the trace fields alone; an independent route used to
/// validate [`gramian_assemble`].
pub fn gramian_direct(ops: &LevelOperators, gamma0: BoundarySpec) -> Result<Gramian> {
    let m = ops.m();
    let tree = ops.tree();
    let traces = (0..2 * m)
        .map(|j| {
            let mut e = vec![0.0; 2 * m];
            e[j] = 1.0;
            boundary_map(ops, gamma0, &e[..m], &e[m..])
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        boundary_inner(&tree, gamma0, &traces[i], &traces[j])
    });
    Ok(Gramian::from_matrix(gamma0, matrix))
}

/// Observability constant `sup |w|_E^2 / wᵀ Λ w` measured two ways.
#[derive(Clone, Debug, PartialEq)]
pub struct Observability {
    /// `1 / λ_min(Λ, mass)`, infinite when Λ is singular.
    pub eigen_constant: f64,
    /// Worst ratio over random samples refined by inverse iteration.
    pub worst_ratio: f64,
    /// Relative disagreement of the two routes.
    pub agreement: f64,
    pub observable: bool,
    /// Energy-normalised minimiser of the Rayleigh quotient.
    pub extremal: Vec<f64>,
}

pub fn observability_ratio(gramian: &Gramian, grid: &Grid, samples: usize, seed: u64) -> Result<Observability> {
    let mass = mass_matrix(grid);
    let n = gramian.dim();
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("energy mass matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular mass factor".into()))?;
    let lam = (&gramian.matrix + gramian.matrix.transpose()) * 0.5;
    let reduced = &l_inv * &lam * l_inv.transpose();
    let eig = SymmetricEigen::new(reduced);
    let (imin, mu_min) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let mu_max = eig.eigenvalues.amax();
    let observable = mu_max > 0.0 && mu_min > 1e-12 * mu_max;
    let extremal = (l_inv.transpose() * eig.eigenvectors.column(imin)).as_slice().to_vec();
    if !observable {
        return Ok(Observability {
            eigen_constant: f64::INFINITY,
            worst_ratio: f64::INFINITY,
            agreement: 0.0,
            observable,
            extremal,
        });
    }
    let ratio = |w: &DVector<f64>| w.dot(&(&mass * w)) / w.dot(&(&lam * w));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = DVector::from_vec(random_vec(n, &mut rng));
    for _ in 1..samples.max(1) {
        let w = DVector::from_vec(random_vec(n, &mut rng));
        if ratio(&w) > ratio(&best) {
            best = w;
        }
    }
    // Inverse iteration on the pencil (Λ, mass) from the worst sample.
    let lu = lam.clone().lu();
    let mut worst = ratio(&best);
    for _ in 0..200 {
        let Some(next) = lu.solve(&(&mass * &best)) else {
            break;
        };
        let norm = next.dot(&(&mass * &next)).sqrt();
        best = next / norm;
        let r = ratio(&best);
        let done = (r - worst).abs() <= 1e-13 * r;
        worst = worst.max(r);
        if done {
            break;
        }
    }
    let eigen_constant = 1.0 / mu_min;
    Ok(Observability {
        eigen_constant,
        worst_ratio: worst,
        agreement: (worst - eigen_constant).abs() / eigen_constant,
        observable,
        extremal,
    })
}
