use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::spatial::{BoundarySpec, Profile};
use crate::tree::conditional_variance_last_step;

fn setup(m: usize, k: usize, horizon: f64) -> (Grid, TimeGrid) {
    let grid = Grid::new(
        1.0,
        m,
        Profile::Sine {
            base: 1.0,
            amplitude: 0.25,
            wavenumber: 2.0,
        },
    )
    .unwrap();
    let tree = BinaryTree::new(k, horizon).unwrap();
    let time = TimeGrid::auto(tree, &grid);
    (grid, time)
}

fn random_coeffs(grid: &Grid, rng: &mut ChaCha8Rng) -> CoefficientSet {
    let mut c = CoefficientSet::zero(grid);
    for f in [&mut c.a1, &mut c.a2, &mut c.a3, &mut c.a4, &mut c.a5] {
        let (p, q) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        for (i, v) in f.iter_mut().enumerate() {
            let x = grid.x(i);
            *v = 0.5 * p + 0.5 * q * (3.0 * x).sin();
        }
    }
    let last = c.a5.len() - 1;
    c.a5[0] = 0.0;
    c.a5[last] = 0.0;
    c
}

fn random_vec(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_field(tree: BinaryTree, dim: usize, top: usize, rng: &mut ChaCha8Rng) -> AdaptedField {
    AdaptedField::from_fn(tree, dim, top, |_, _, out| {
        out.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))
    })
    .unwrap()
}

fn max_diff(a: &AdaptedField, b: &AdaptedField) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn auto_substeps_meet_cfl_and_violation_is_an_error() {
    let (grid, time) = setup(15, 3, 2.0);
    assert!(time.check_cfl(&grid).is_ok());
    assert!(time.substeps() >= 1);
    let coarse = TimeGrid::new(time.tree(), 1).unwrap();
    assert!(matches!(coarse.check_cfl(&grid), Err(Error::Cfl { .. })));
    assert!(LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &coarse).is_err());
}

#[test]
fn zero_inputs_give_zero_outputs() {
    let (grid, time) = setup(7, 3, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ops = LevelOperators::new(&grid, &random_coeffs(&grid, &mut rng), &time).unwrap();
    let tree = time.tree();
    let zero = vec![0.0; 7];
    let zi = AdaptedField::integrand(tree, 7);
    let zs = AdaptedField::state(tree, 7);
    let zh = boundary_field(&time);
    let cl = solve_forward_classical(&ops, BoundarySpec::BOTH, &zero, &zero, &zi, &zi, &zh).unwrap();
    assert_eq!(cl.y.max_abs() + cl.yhat.max_abs(), 0.0);
    let rf = solve_forward_refined(&ops, BoundarySpec::BOTH, &zero, &zero, &ControlTriple::zero(&time, 7)).unwrap();
    assert_eq!(rf.y.max_abs() + rf.yhat.max_abs(), 0.0);
    let du = solve_forward_dual(&ops, &zero, &zero, &zi, &zi).unwrap();
    assert_eq!(du.z.max_abs() + du.trace.max_abs(), 0.0);
    let bc = solve_backward_controlled(&ops, BoundarySpec::BOTH, &zs, &zs, &zh).unwrap();
    assert_eq!(bc.y.max_abs() + bc.big_y.max_abs() + bc.big_yhat.max_abs(), 0.0);
    let br = solve_backward_reference_with(&ops, &zs, &zs).unwrap();
    assert_eq!(br.z.max_abs() + br.big_z.max_abs() + br.big_zhat.max_abs(), 0.0);
    let rep = energy_and_hidden_regularity(&grid, &br.z, &br.zhat, None, 3).unwrap();
    assert_eq!((rep.energy_ratio, rep.trace_ratio), (0.0, 0.0));
}

#[test]
fn classical_without_noise_is_path_independent_and_last_step_is_predictable() {
    let (grid, time) = setup(9, 4, 1.0);
    let tree = time.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut coeffs = random_coeffs(&grid, &mut rng);
    coeffs.a3.iter_mut().for_each(|v| *v = 0.0);
    let ops = LevelOperators::new(&grid, &coeffs, &time).unwrap();
    let y0 = random_vec(9, &mut rng);
    let y1 = random_vec(9, &mut rng);
    let g1 = AdaptedField::constant(tree, 3, &random_vec(9, &mut rng)).unwrap();
    let zero = AdaptedField::integrand(tree, 9);
    let n_sub = time.substeps();
    let h_node: Vec<f64> = (0..2 * n_sub).map(|j| if j < n_sub { 0.3 } else { -0.2 }).collect();
    let h = AdaptedField::constant(tree, 3, &h_node).unwrap();
    let sol = solve_forward_classical(&ops, BoundarySpec::BOTH, &y0, &y1, &g1, &zero, &h).unwrap();
    assert_eq!(sol.y.cross_path_deviation(), 0.0);
    assert_eq!(sol.yhat.cross_path_deviation(), 0.0);

    // With noise, y_K is still known one step ahead.
    let full = LevelOperators::new(&grid, &random_coeffs(&grid, &mut rng), &time).unwrap();
    let g2 = random_field(tree, 9, 3, &mut rng);
    let noisy = solve_forward_classical(&full, BoundarySpec::RIGHT, &y0, &y1, &g1, &g2, &h).unwrap();
    assert!(noisy.yhat.cross_path_deviation() > 1e-3);
    let var = conditional_variance_last_step(&noisy.y).unwrap();
    assert!(var.iter().all(|v| *v == 0.0), "{var:?}");
}

#[test]
fn refined_single_step_splits_by_the_internal_control() {
    let (grid, time) = setup(5, 1, 0.1);
    let tree = time.tree();
    let ops = LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &time).unwrap();
    let mut ctl = ControlTriple::zero(&time, 5);
    let f: Vec<f64> = (1..=5).map(|i| (i as f64 * 0.7).sin()).collect();
    ctl.f.node_mut(0, 0).copy_from_slice(&f);
    let y0 = vec![0.1, 0.2, 0.3, 0.2, 0.1];
    let sol = solve_forward_refined(&ops, BoundarySpec::EMPTY, &y0, &y0, &ctl).unwrap();
    let free = solve_forward_refined(&ops, BoundarySpec::EMPTY, &y0, &y0, &ControlTriple::zero(&time, 5)).unwrap();
    let s = tree.sqrt_dt();
    for (i, fi) in f.iter().enumerate() {
        assert!((sol.y.node(1, 0)[i] - free.y.node(1, 0)[i] - s * fi).abs() < 1e-14);
        assert!((sol.y.node(1, 1)[i] - free.y.node(1, 0)[i] + s * fi).abs() < 1e-14);
    }
    assert_eq!(sol.yhat.node(1, 0), free.yhat.node(1, 0));
}

#[test]
fn refined_with_cancelling_controls_is_a_random_coefficient_wave() {
    let (grid, time) = setup(9, 4, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // a5 = 0: the a5 g drift is frozen over a level, so with a5 != 0 the
    // reduction holds only up to O(dt).
    let mut coeffs = random_coeffs(&grid, &mut rng);
    coeffs.a5.iter_mut().for_each(|v| *v = 0.0);
    // The wave equation left after f = -a4 y and g = -a3 y.
    let mut reduced = coeffs.clone();
    reduced
        .a3
        .iter_mut()
        .chain(reduced.a4.iter_mut())
        .chain(reduced.a5.iter_mut())
        .for_each(|v| *v = 0.0);
    let y0 = random_vec(9, &mut rng);
    let y1 = random_vec(9, &mut rng);
    let det_ops = LevelOperators::new(&grid, &reduced, &time).unwrap();
    let det = solve_forward_refined(&det_ops, BoundarySpec::EMPTY, &y0, &y1, &ControlTriple::zero(&time, 9)).unwrap();
    assert!(det.y.cross_path_deviation() < 1e-14);

    let mut ctl = ControlTriple::zero(&time, 9);
    for k in 0..4 {
        for n in 0..BinaryTree::level_size(k) {
            let y = det.y.node(k, n).to_vec();
            for (i, yi) in y.iter().enumerate() {
                ctl.f.node_mut(k, n)[i] = -coeffs.a4[i + 1] * yi;
                ctl.g.node_mut(k, n)[i] = -coeffs.a3[i + 1] * yi;
            }
        }
    }
    let ops = LevelOperators::new(&grid, &coeffs, &time).unwrap();
    let sol = solve_forward_refined(&ops, BoundarySpec::EMPTY, &y0, &y1, &ctl).unwrap();
    assert!(sol.y.cross_path_deviation() < 1e-10);
    assert!(max_diff(&sol.y, &det.y) < 1e-10);
}

#[test]
fn reference_with_deterministic_data_has_no_martingale_part() {
    let (grid, time) = setup(7, 4, 1.0);
    let tree = time.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let zt = AdaptedField::constant(tree, 4, &random_vec(7, &mut rng)).unwrap();
    let zht = AdaptedField::constant(tree, 4, &random_vec(7, &mut rng)).unwrap();
    let mut b = RefCoefficients::zero(&grid);
    b.b1 = grid.interior_x().iter().map(|x| x.cos()).collect();
    b.b1.insert(0, 1.0);
    b.b1.push(1f64.cos());
    b.b2 = vec![0.4; 9];
    let q = solve_backward_reference(&grid, &b, &time, &zt, &zht).unwrap();
    assert!(q.big_z.max_abs() < 1e-12 && q.big_zhat.max_abs() < 1e-12);
    assert!(q.z.cross_path_deviation() < 1e-12);
}

#[test]
fn reference_single_level_inverts_the_deterministic_propagator() {
    let (grid, time) = setup(3, 1, 0.2);
    let tree = time.tree();
    let ops = LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &time).unwrap();
    let mut zt = AdaptedField::state(tree, 3);
    let mut zht = AdaptedField::state(tree, 3);
    zt.node_mut(1, 0).copy_from_slice(&[1.0, 0.0, -1.0]);
    zt.node_mut(1, 1).copy_from_slice(&[0.0, 2.0, 0.0]);
    zht.node_mut(1, 0).copy_from_slice(&[0.5, 0.5, 0.5]);
    let q = solve_backward_reference_with(&ops, &zt, &zht).unwrap();
    let s = tree.sqrt_dt();
    let z_mean = [0.5, 1.0, -0.5];
    let zh_mean = [0.25, 0.25, 0.25];
    let root = forward::stack(q.z.node(0, 0), q.zhat.node(0, 0));
    let pushed = ops.propagator() * root;
    for i in 0..3 {
        assert!((pushed[i] - z_mean[i]).abs() < 1e-13);
        assert!((pushed[3 + i] - zh_mean[i]).abs() < 1e-13);
        let dz = (zt.node(1, 0)[i] - zt.node(1, 1)[i]) / (2.0 * s);
        assert!((q.big_z.node(0, 0)[i] - dz).abs() < 1e-13);
        assert!((q.big_zhat.node(0, 0)[i] - 0.25 / s).abs() < 1e-13);
    }
}

#[test]
fn dual_reproduces_reference_path_by_path() {
    let (grid, time) = setup(9, 5, 1.0);
    let tree = time.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_coeffs(&grid, &mut rng);
    let b = RefCoefficients::transposition_of(&grid, &a);
    let zt = random_field(tree, 9, 5, &mut rng);
    let zht = random_field(tree, 9, 5, &mut rng);
    let q = solve_backward_reference(&grid, &b, &time, &zt, &zht).unwrap();
    let ops = LevelOperators::new(&grid, &a, &time).unwrap();
    let d = solve_forward_dual(&ops, q.z.node(0, 0), q.zhat.node(0, 0), &q.big_z, &q.big_zhat).unwrap();
    let scale = zt.max_abs().max(1.0);
    assert!(max_diff(&d.z, &q.z) < 1e-10 * scale, "{}", max_diff(&d.z, &q.z));
    assert!(max_diff(&d.zhat, &q.zhat) < 1e-9 * scale);
}

#[test]
fn transposition_coefficients_round_trip() {
    let (grid, _) = setup(9, 1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_coeffs(&grid, &mut rng);
    let back = RefCoefficients::transposition_of(&grid, &a).forward_coefficients(&grid);
    for (x, y) in a.named().iter().zip(back.named()) {
        for (u, v) in x.1.iter().zip(y.1) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}

#[test]
fn backward_controlled_is_an_exact_path_inverse() {
    let (grid, time) = setup(9, 5, 1.0);
    let tree = time.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ops = LevelOperators::new(&grid, &random_coeffs(&grid, &mut rng), &time).unwrap();
    let yt = random_field(tree, 9, 5, &mut rng);
    let yht = random_field(tree, 9, 5, &mut rng);
    let h = random_field(tree, 2 * time.substeps(), 4, &mut rng);
    let q = solve_backward_controlled(&ops, BoundarySpec::RIGHT, &yt, &yht, &h).unwrap();
    let ctl = ControlTriple {
        f: q.big_y.clone(),
        g: q.big_yhat.clone(),
        h,
    };
    let fwd = solve_forward_refined(&ops, BoundarySpec::RIGHT, q.y.node(0, 0), q.yhat.node(0, 0), &ctl).unwrap();
    assert!(max_diff(&fwd.y, &q.y) < 1e-10);
    assert!(max_diff(&fwd.yhat, &q.yhat) < 1e-9);
}

#[test]
fn discrete_duality_identity_holds() {
    let (grid, time) = setup(11, 6, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (seed, gamma0) in [
        (10, BoundarySpec::RIGHT),
        (11, BoundarySpec::BOTH),
        (12, BoundarySpec::LEFT),
    ] {
        let ops = LevelOperators::new(&grid, &random_coeffs(&grid, &mut rng), &time).unwrap();
        let check = crate::control::duality_check(&ops, &ops, &grid, gamma0, seed).unwrap();
        assert!(check.relative_gap() <= 1e-10, "{check:?}");
        assert!(check.lhs.abs() > 1e-3);
    }
}

#[test]
fn dual_trace_approximates_the_conormal_derivative() {
    let grid = Grid::new(1.0, 31, Profile::Constant(1.0)).unwrap();
    let tree = BinaryTree::new(2, 0.2).unwrap();
    let time = TimeGrid::auto(tree, &grid);
    let ops = LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &time).unwrap();
    let z0: Vec<f64> = grid
        .interior_x()
        .iter()
        .map(|x| (std::f64::consts::PI * x).sin())
        .collect();
    let zero = AdaptedField::integrand(tree, 31);
    let d = solve_forward_dual(&ops, &z0, &vec![0.0; 31], &zero, &zero).unwrap();
    // z(t, x) = cos(pi t) sin(pi x); the conormal trace is -pi cos(pi t) on the
    // left. The discrete trace averages over the level.
    let avg = (std::f64::consts::PI * 0.1).sin() / (std::f64::consts::PI * 0.1);
    let expected = -std::f64::consts::PI * avg;
    assert!(
        (d.trace.node(0, 0)[0] - expected).abs() < 0.05,
        "{:?}",
        d.trace.node(0, 0)
    );
}

#[test]
fn energy_is_conserved_to_first_order() {
    let grid = Grid::unit(15).unwrap();
    let z: Vec<f64> = grid
        .interior_x()
        .iter()
        .map(|x| (std::f64::consts::PI * x).sin())
        .collect();
    let drift = |k: usize| {
        let tree = BinaryTree::new(k, 0.5).unwrap();
        let time = TimeGrid::new(tree, 1).unwrap();
        let ops = LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &time).unwrap();
        let zero = AdaptedField::integrand(tree, 15);
        let d = solve_forward_dual(&ops, &z, &[0.0; 15], &zero, &zero).unwrap();
        let rep = energy_and_hidden_regularity(&grid, &d.z, &d.zhat, Some(&d.trace), 0).unwrap();
        assert!(rep.trace_ratio.is_finite());
        rep.energies
            .iter()
            .map(|e| (e / rep.energies[0] - 1.0).abs())
            .fold(0.0, f64::max)
    };
    // dt = T / K, so doubling K halves the step.
    let (coarse, fine) = (drift(8), drift(16));
    assert!(coarse < 0.2, "{coarse}");
    assert!(fine < 0.6 * coarse, "{coarse} {fine}");
}

#[test]
fn trace_ratio_stays_bounded_under_refinement() {
    let ratios: Vec<f64> = [15usize, 31, 63]
        .iter()
        .map(|&m| {
            let grid = Grid::unit(m).unwrap();
            let tree = BinaryTree::new(3, 1.0).unwrap();
            let time = TimeGrid::auto(tree, &grid);
            let ops = LevelOperators::new(&grid, &CoefficientSet::zero(&grid), &time).unwrap();
            let z: Vec<f64> = grid
                .interior_x()
                .iter()
                .map(|x| (std::f64::consts::PI * x).sin())
                .collect();
            let zero = AdaptedField::integrand(tree, m);
            let d = solve_forward_dual(&ops, &z, &vec![0.0; m], &zero, &zero).unwrap();
            energy_and_hidden_regularity(&grid, &d.z, &d.zhat, Some(&d.trace), 0)
                .unwrap()
                .trace_ratio
        })
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    assert!(ratios[2] < 1.5 * ratios[0], "{ratios:?}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn refined_solve_is_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
            let (grid, time) = setup(5, 3, 0.5);
            let tree = time.tree();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ops = LevelOperators::new(&grid, &random_coeffs(&grid, &mut rng), &time).unwrap();
            let mk = |rng: &mut ChaCha8Rng| ControlTriple {
                f: random_field(tree, 5, 2, rng),
                g: random_field(tree, 5, 2, rng),
                h: random_field(tree, 2 * time.substeps(), 2, rng),
            };
            let (c1, c2) = (mk(&mut rng), mk(&mut rng));
            let (u1, u2) = (random_vec(5, &mut rng), random_vec(5, &mut rng));
            let mut c12 = c1.clone();
            c12.f.axpy(c, &c2.f).unwrap();
            c12.g.axpy(c, &c2.g).unwrap();
            c12.h.axpy(c, &c2.h).unwrap();
            let u12: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + c * b).collect();
            let s1 = solve_forward_refined(&ops, BoundarySpec::BOTH, &u1, &u2, &c1).unwrap();
            let s2 = solve_forward_refined(&ops, BoundarySpec::BOTH, &u2, &u1, &c2).unwrap();
            let u21: Vec<f64> = u2.iter().zip(&u1).map(|(a, b)| a + c * b).collect();
            let s12 = solve_forward_refined(&ops, BoundarySpec::BOTH, &u12, &u21, &c12).unwrap();
            let mut expect = s1.y.clone();
            expect.axpy(c, &s2.y).unwrap();
            prop_assert!(max_diff(&expect, &s12.y) < 1e-10);
        }

        #[test]
        fn backward_reference_is_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
            let (grid, time) = setup(5, 3, 0.5);
            let tree = time.tree();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_coeffs(&grid, &mut rng);
            let b = RefCoefficients::transposition_of(&grid, &a);
            let (z1, z2) = (random_field(tree, 5, 3, &mut rng), random_field(tree, 5, 3, &mut rng));
            let zero = AdaptedField::state(tree, 5);
            let mut z12 = z1.clone();
            z12.axpy(c, &z2).unwrap();
            let q1 = solve_backward_reference(&grid, &b, &time, &z1, &zero).unwrap();
            let q2 = solve_backward_reference(&grid, &b, &time, &z2, &zero).unwrap();
            let q12 = solve_backward_reference(&grid, &b, &time, &z12, &zero).unwrap();
            let mut expect = q1.big_z.clone();
            expect.axpy(c, &q2.big_z).unwrap();
            prop_assert!(max_diff(&expect, &q12.big_z) < 1e-9);
        }
    }
}
