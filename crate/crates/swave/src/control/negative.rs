//! Lower-bound certificates for the three non-controllability mechanisms.
//!
//! Each certificate pairs an analytic bound with a brute-force least-squares
//! minimisation over a spanning basis of admissible controls and initial
//! data, so the bound is checked rather than trusted.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::solvers::{
    boundary_field, boundary_slots, solve_backward_controlled, solve_backward_reference_with, solve_forward_classical,
    solve_forward_dual, solve_forward_refined, ControlTriple, LevelOperators, StatePair, TimeGrid,
};
use crate::spatial::{BoundarySpec, Grid};
use crate::tree::{conditional_variance_last_step, AdaptedField, BinaryTree};
use crate::{Error, Result};

/// Largest `dim(controls) x dim(outputs)` handled by the exhaustive minimisations.
const BRUTE_FORCE_BUDGET: usize = 1 << 22;

/// The target `xi * profile` on the leaves, with `xi = ΔW_{K-1} / sqrt(dt)`
/// when `last_increment`, else `xi = ΔW_0 / sqrt(dt)` (known before the last step).
fn leaf_target(tree: BinaryTree, profile: &[f64], last_increment: bool) -> AdaptedField {
    let k = tree.steps();
    let mut out = AdaptedField::state(tree, profile.len());
    for n in 0..BinaryTree::level_size(k) {
        let path = tree.path_increments(k, n);
        let inc = if last_increment { path[k - 1] } else { path[0] };
        let xi = inc / tree.sqrt_dt();
        out.node_mut(k, n)
            .iter_mut()
            .zip(profile)
            .for_each(|(o, p)| *o = xi * p);
    }
    out
}

fn unit_profile(grid: &Grid, profile: &[f64], what: &str) -> Result<Vec<f64>> {
    if profile.len() != grid.m() {
        return Err(Error::shape(format!("{what}: expected length {}", grid.m())));
    }
    let norm = grid.l2_sq(profile).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Precondition(format!("{what} must be non-zero")));
    }
    Ok(profile.iter().map(|v| v / norm).collect())
}

/// `E |X_K|^2_{L^2}`-weighted squared distance from `target` to the span of
/// `columns` (each a flattened leaf level).
fn least_squares_distance(columns: &[Vec<f64>], target: &[f64], weight: f64) -> f64 {
    let rows = target.len();
    let a = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(target);
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested");
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(f64::MIN_POSITIVE) * rows.max(columns.len()) as f64;
    let mut projected = 0.0;
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            projected += u.column(j).dot(&b).powi(2);
        }
    }
    weight * (b.norm_squared() - projected).max(0.0)
}

/// One basis direction per scalar entry of the listed fields.
fn for_each_basis_direction(
    time: &TimeGrid,
    m: usize,
    mut visit: impl FnMut(&[f64], &[f64], &ControlTriple) -> Result<()>,
    allow: [&dyn Fn(usize) -> bool; 2],
    slots: &[usize],
) -> Result<()> {
    let zero_vec = vec![0.0; m];
    let tree = time.tree();
    let base = ControlTriple::zero(time, m);
    for i in 0..2 * m {
        let mut e = vec![0.0; 2 * m];
        e[i] = 1.0;
        visit(&e[..m], &e[m..], &base)?;
    }
    for k in 0..tree.steps() {
        for n in 0..BinaryTree::level_size(k) {
            for (which, allowed) in allow.iter().enumerate() {
                for i in (0..m).filter(|&i| allowed(i)) {
                    let mut c = base.clone();
                    let field = if which == 0 { &mut c.f } else { &mut c.g };
                    field.node_mut(k, n)[i] = 1.0;
                    visit(&zero_vec, &zero_vec, &c)?;
                }
            }
            for &s in slots {
                let mut c = base.clone();
                c.h.node_mut(k, n)[s] = 1.0;
                visit(&zero_vec, &zero_vec, &c)?;
            }
        }
    }
    Ok(())
}

fn check_budget(time: &TimeGrid, m: usize) -> Result<()> {
    let tree = time.tree();
    let controls = BinaryTree::node_count(tree.steps()) * (2 * m + 2 * time.substeps());
    let outputs = BinaryTree::level_size(tree.steps()) * m;
    if controls * outputs > BRUTE_FORCE_BUDGET {
        return Err(Error::Precondition(format!(
            "exhaustive minimisation over {controls} controls and {outputs} outputs exceeds the budget; use smaller K or M"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalCertificate {
    /// `E[Var(xi | F_{K-1})] |psi|^2`.
    pub bound: f64,
    /// Smallest `E |y_K - xi psi|^2` over all initial data and controls.
    pub minimum: f64,
    /// Same target reached by the refined system with free `f`.
    pub refined_residual: f64,
    pub basis_size: usize,
}

/// Classical system versus the target `xi psi`. `ops_classical` carries the
/// classical coefficients (`a3` is the only noise coefficient used);
/// `ops_refined` is used for the contrast run.
pub fn negative_classical(
    ops_classical: &LevelOperators,
    ops_refined: &LevelOperators,
    grid: &Grid,
    gamma0: BoundarySpec,
    psi: &[f64],
    last_increment: bool,
) -> Result<ClassicalCertificate> {
    let tree = ops_classical.tree();
    let (m, k) = (grid.m(), tree.steps());
    check_budget(ops_classical.time(), m)?;
    let psi = unit_profile(grid, psi, "psi")?;
    let target = leaf_target(tree, &psi, last_increment);
    let weight = grid.dx() / BinaryTree::level_size(k) as f64;
    let var = conditional_variance_last_step(&target)?;
    let bound = grid.dx() * var.iter().sum::<f64>() / var.len() as f64;

    let slots = boundary_slots(gamma0, ops_classical.time().substeps());
    let mut columns = Vec::new();
    for_each_basis_direction(
        ops_classical.time(),
        m,
        |y0, y1, c| {
            // f plays the role of g1 and g of g2 in the classical system.
            let s = solve_forward_classical(ops_classical, gamma0, y0, y1, &c.f, &c.g, &c.h)?;
            columns.push(s.y.level(k).to_vec());
            Ok(())
        },
        [&|_| true, &|_| true],
        &slots,
    )?;
    let minimum = least_squares_distance(&columns, target.level(k), weight);

    let refined_residual = refined_contrast(ops_refined, grid, gamma0, &target)?;
    Ok(ClassicalCertificate {
        bound,
        minimum,
        refined_residual,
        basis_size: columns.len(),
    })
}

/// Reaches the leaf target on `y_K` exactly through the backward controlled solve
/// and reports the forward residual.
fn refined_contrast(ops: &LevelOperators, grid: &Grid, gamma0: BoundarySpec, target: &AdaptedField) -> Result<f64> {
    let tree = ops.tree();
    let k = tree.steps();
    let zero = AdaptedField::state(tree, grid.m());
    let h = boundary_field(ops.time());
    let q = solve_backward_controlled(ops, gamma0, target, &zero, &h)?;
    let ctl = ControlTriple {
        f: q.big_y,
        g: q.big_yhat,
        h,
    };
    let s: StatePair = solve_forward_refined(ops, gamma0, q.y.node(0, 0), q.yhat.node(0, 0), &ctl)?;
    let reached = &s.y;
    let leaves = BinaryTree::level_size(k);
    Ok((0..leaves)
        .map(|n| {
            let d: Vec<f64> = reached
                .node(k, n)
                .iter()
                .zip(target.node(k, n))
                .map(|(a, b)| a - b)
                .collect();
            grid.l2_sq(&d)
        })
        .sum::<f64>()
        / leaves as f64)
}

/// Which internal control is localised, and hence which component is targeted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalizedTarget {
    /// `f` restricted to the mask; target on `y_K`; needs `a4 rho = 0`.
    F,
    /// `g` restricted to the mask; target on `yhat_K`; needs `a3 rho = 0`.
    G,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedCertificate {
    /// `|rho|^2 = 1` when the hypotheses hold, else 0 (no certificate).
    pub bound: f64,
    pub minimum: f64,
    pub hypothesis_holds: bool,
    pub full_mask: bool,
}

/// Refined system with one internal control restricted to `mask` (interior
/// nodes where it may act), targeting `xi rho` with `rho` supported off the mask.
pub fn negative_localized(
    ops: &LevelOperators,
    grid: &Grid,
    gamma0: BoundarySpec,
    mask: &[bool],
    rho: &[f64],
    which: LocalizedTarget,
) -> Result<LocalizedCertificate> {
    let tree = ops.tree();
    let (m, k) = (grid.m(), tree.steps());
    if mask.len() != m {
        return Err(Error::shape(format!("mask: expected length {m}")));
    }
    check_budget(ops.time(), m)?;
    let rho = unit_profile(grid, rho, "rho")?;
    let full_mask = mask.iter().all(|&b| b);
    if !full_mask && rho.iter().zip(mask).any(|(r, &inside)| inside && *r != 0.0) {
        return Err(Error::Precondition("rho must vanish on the control region".into()));
    }
    let noise = match which {
        LocalizedTarget::F => &ops.a4,
        LocalizedTarget::G => &ops.a3,
    };
    let hypothesis_holds = !full_mask && rho.iter().zip(noise).all(|(r, a)| r * a == 0.0);
    let target = leaf_target(tree, &rho, true);
    let weight = grid.dx() / BinaryTree::level_size(k) as f64;
    let slots = boundary_slots(gamma0, ops.time().substeps());
    let in_mask = |i: usize| mask[i];
    let everywhere = |_: usize| true;
    let allow: [&dyn Fn(usize) -> bool; 2] = match which {
        LocalizedTarget::F => [&in_mask, &everywhere],
        LocalizedTarget::G => [&everywhere, &in_mask],
    };
    let mut columns = Vec::new();
    for_each_basis_direction(
        ops.time(),
        m,
        |y0, y1, c| {
            let s = solve_forward_refined(ops, gamma0, y0, y1, c)?;
            let out = match which {
                LocalizedTarget::F => &s.y,
                LocalizedTarget::G => &s.yhat,
            };
            columns.push(out.level(k).to_vec());
            Ok(())
        },
        allow,
        &slots,
    )?;
    let minimum = least_squares_distance(&columns, target.level(k), weight);
    Ok(LocalizedCertificate {
        bound: if hypothesis_holds { grid.l2_sq(&rho) } else { 0.0 },
        minimum,
        hypothesis_holds,
        full_mask,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoBoundaryCertificate {
    /// `|eta0|^2_{H^1_0} + |eta1|^2_{L^2}`.
    pub data_norm: f64,
    /// `E sum_k dt (|Z|^2 + |Zhat|^2)` for the deterministic wave solution.
    pub internal_observation: f64,
    /// Leaf terminal data `(z_K, zhat_K)` flattened node by node, unit length.
    pub kernel_vector: Vec<f64>,
    /// `|G v|` for the internal Gramian `G` and the kernel vector `v`.
    pub image_norm: f64,
    pub lambda_max: f64,
}

/// With `h = 0` only the internal observation `(Z, Zhat)` of the reference
/// equation is available. For `b5 = 0` and deterministic coefficients a
/// deterministic wave started from `(eta0, eta1)` has `Z = Zhat = 0`, so the
/// internal Gramian has a non-trivial kernel. `ops` must be built from the
/// reference coefficients (see `RefCoefficients::forward_coefficients`).
pub fn negative_no_boundary(
    ops: &LevelOperators,
    grid: &Grid,
    eta0: &[f64],
    eta1: &[f64],
) -> Result<NoBoundaryCertificate> {
    let tree = ops.tree();
    let (m, k) = (grid.m(), tree.steps());
    if eta0.len() != m || eta1.len() != m {
        return Err(Error::shape(format!("eta: expected length {m}")));
    }
    let data_norm = grid.h01_sq(eta0) + grid.l2_sq(eta1);
    if data_norm == 0.0 {
        return Err(Error::Precondition("initial data must be non-zero".into()));
    }
    if ops.a5.iter().any(|v| *v != 0.0) {
        return Err(Error::Precondition(
            "b5 must vanish for the deterministic wave to be unobserved".into(),
        ));
    }
    let leaves = BinaryTree::level_size(k);
    let n = 2 * m * leaves;
    let rows = 2 * m * (BinaryTree::node_count(k - 1));
    if n * rows > BRUTE_FORCE_BUDGET {
        return Err(Error::Precondition(
            "internal Gramian too large; use smaller K or M".into(),
        ));
    }
    let zero = AdaptedField::integrand(tree, m);
    let wave = solve_forward_dual(ops, eta0, eta1, &zero, &zero)?;
    let mut kernel_vector = Vec::with_capacity(n);
    for leaf in 0..leaves {
        kernel_vector.extend_from_slice(wave.z.node(k, leaf));
        kernel_vector.extend_from_slice(wave.zhat.node(k, leaf));
    }
    let norm = kernel_vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    kernel_vector.iter_mut().for_each(|x| *x /= norm);

    // Internal observation operator, one column per terminal datum, rows
    // weighted so that the Gramian is `E sum dt dx (Z^2 + Zhat^2)`.
    let observe = |v: &[f64]| -> Result<Vec<f64>> {
        let mut zt = AdaptedField::state(tree, m);
        let mut zht = AdaptedField::state(tree, m);
        for leaf in 0..leaves {
            let o = leaf * 2 * m;
            zt.node_mut(k, leaf).copy_from_slice(&v[o..o + m]);
            zht.node_mut(k, leaf).copy_from_slice(&v[o + m..o + 2 * m]);
        }
        let q = solve_backward_reference_with(ops, &zt, &zht)?;
        let mut out = Vec::with_capacity(rows);
        for lvl in 0..k {
            let w = (tree.dt() * grid.dx() / BinaryTree::level_size(lvl) as f64).sqrt();
            for node in 0..BinaryTree::level_size(lvl) {
                out.extend(q.big_z.node(lvl, node).iter().map(|x| w * x));
                out.extend(q.big_zhat.node(lvl, node).iter().map(|x| w * x));
            }
        }
        Ok(out)
    };
    let mut obs = DMatrix::zeros(rows, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        obs.set_column(j, &DVector::from_vec(observe(&e)?));
    }
    let gram = obs.transpose() * &obs;
    let v = DVector::from_column_slice(&kernel_vector);
    let image_norm = (&gram * &v).norm();
    let lambda_max = SymmetricEigen::new(gram).eigenvalues.max();
    let internal_observation = observe(&kernel_vector)?.iter().map(|x| x * x).sum();
    Ok(NoBoundaryCertificate {
        data_norm,
        internal_observation,
        kernel_vector,
        image_norm,
        lambda_max,
    })
}
