use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{duality_check, gramian_assemble, hum_synthesize, random_field, random_vec};
use crate::solvers::{
    solve_backward_controlled, solve_backward_reference, solve_forward_dual, solve_forward_refined, ControlTriple,
    LevelOperators, RefCoefficients, TimeGrid,
};
use crate::spatial::{BoundarySpec, CoefficientSet, Grid};
use crate::tree::AdaptedField;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    /// Reference solve fed back through the dual forward solve.
    pub round_trip: f64,
    /// Refined forward solve inverted by the backward controlled solve.
    pub cross_identity: f64,
    /// Relative gap of the duality identity.
    pub duality_gap: f64,
    /// HUM control for the backward system replayed on the forward one;
    /// `None` when the Gramian on `gamma0` is singular.
    pub hum_endpoint: Option<f64>,
    pub failures: Vec<String>,
}

impl ReductionReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel_diff(a: &AdaptedField, b: &AdaptedField) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE);
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Cross-checks of the solvers against each other on random data.
/// `fault` perturbs `a1` in the operators used on the dual side; any
/// non-zero value should make the adjoint-based checks fail.
pub fn reduction_check(
    grid: &Grid,
    coeffs: &CoefficientSet,
    time: &TimeGrid,
    gamma0: BoundarySpec,
    seeds: &[u64],
    fault: f64,
) -> Result<ReductionReport> {
    let tree = time.tree();
    let (m, k) = (grid.m(), tree.steps());
    let ops = LevelOperators::new(grid, coeffs, time)?;
    let mut dual_coeffs = coeffs.clone();
    dual_coeffs.a1.iter_mut().for_each(|v| *v += fault);
    let dual_ops = LevelOperators::new(grid, &dual_coeffs, time)?;
    let b = RefCoefficients::transposition_of(grid, coeffs);

    let mut report = ReductionReport {
        round_trip: 0.0,
        cross_identity: 0.0,
        duality_gap: 0.0,
        hum_endpoint: None,
        failures: Vec::new(),
    };
    let gramian = gramian_assemble(&ops, grid, gamma0)?;
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let zt = random_field(tree, m, k, &mut rng);
        let zht = random_field(tree, m, k, &mut rng);
        let q = solve_backward_reference(grid, &b, time, &zt, &zht)?;
        let d = solve_forward_dual(&dual_ops, q.z.node(0, 0), q.zhat.node(0, 0), &q.big_z, &q.big_zhat)?;
        report.round_trip = report
            .round_trip
            .max(rel_diff(&d.z, &q.z))
            .max(rel_diff(&d.zhat, &q.zhat));

        let ctl = ControlTriple {
            f: random_field(tree, m, k - 1, &mut rng),
            g: random_field(tree, m, k - 1, &mut rng),
            h: random_field(tree, 2 * time.substeps(), k - 1, &mut rng),
        };
        let (y0, yhat0) = (random_vec(m, &mut rng), random_vec(m, &mut rng));
        let fwd = solve_forward_refined(&ops, gamma0, &y0, &yhat0, &ctl)?;
        let back = solve_backward_controlled(&ops, gamma0, &fwd.y, &fwd.yhat, &ctl.h)?;
        report.cross_identity = report
            .cross_identity
            .max(rel_diff(&back.y, &fwd.y))
            .max(rel_diff(&back.yhat, &fwd.yhat))
            .max(rel_diff(&back.big_y, &ctl.f))
            .max(rel_diff(&back.big_yhat, &ctl.g));

        report.duality_gap = report
            .duality_gap
            .max(duality_check(&ops, &dual_ops, grid, gamma0, seed)?.relative_gap());

        if gramian.is_definite() {
            let yt = random_field(tree, m, k, &mut rng);
            let yht = random_field(tree, m, k, &mut rng);
            let target0 = (random_vec(m, &mut rng), random_vec(m, &mut rng));
            let hum = hum_synthesize(&ops, grid, &gramian, (&target0.0, &target0.1), &yt, &yht)?;
            let ctl = ControlTriple {
                f: hum.quad.big_y.clone(),
                g: hum.quad.big_yhat.clone(),
                h: hum.h.clone(),
            };
            let replay = solve_forward_refined(&ops, gamma0, &target0.0, &target0.1, &ctl)?;
            let mut worst = 0.0f64;
            let scale = yt
                .level(k)
                .iter()
                .chain(yht.level(k))
                .fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in replay
                .y
                .level(k)
                .iter()
                .chain(replay.yhat.level(k))
                .zip(yt.level(k).iter().chain(yht.level(k)))
            {
                worst = worst.max((a - b).abs() / scale);
            }
            report.hum_endpoint = Some(report.hum_endpoint.unwrap_or(0.0).max(worst));
        }
    }
    let checks = [
        ("backward reference / forward dual round trip", report.round_trip, 1e-10),
        (
            "refined forward / backward controlled cross identity",
            report.cross_identity,
            1e-10,
        ),
        ("duality identity", report.duality_gap, 1e-10),
        (
            "HUM control replayed on the refined system",
            report.hum_endpoint.unwrap_or(0.0),
            1e-8,
        ),
    ];
    for (name, value, tol) in checks {
        if !(value <= tol) {
            report.failures.push(format!("{name}: {value:.3e} > {tol:e}"));
        }
    }
    Ok(report)
}
