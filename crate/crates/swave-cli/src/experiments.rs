//! One function per experiment. Each returns the measured result plus any
//! field tables; thresholds are applied here and nowhere else.

use std::f64::consts::PI;

use swave::carleman::{
    certify_lambda, check_condition1, check_condition2, compute_gamma0, identity_residual, search_constants,
    time_windows, weight_fields, CarlemanConfig, WeightFields,
};
use swave::control::{
    duality_check, gramian_assemble, hum_synthesize, negative_classical, negative_localized, negative_no_boundary,
    observability_ratio, reduction_check, ExperimentResult, LocalizedTarget, Sampler,
};
use swave::solvers::{boundary_slot, LevelOperators, RefCoefficients, TimeGrid};
use swave::spatial::{BoundarySpec, CoefficientSet, Grid, Side};
use swave::tree::{AdaptedField, BinaryTree};
use swave::{Error, Result};

use crate::config::{Experiment, ExperimentConfig, Gamma0Choice, Localized};

/// A CSV table written next to `result.csv`.
pub struct Table {
    pub file: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &'static str, header: &[&str]) -> Self {
        Self {
            file,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub struct Outcome {
    pub result: ExperimentResult,
    /// Free-form report lines, written after the metrics.
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
}

impl Outcome {
    fn new(cfg: &ExperimentConfig) -> Self {
        let mut result = ExperimentResult::new(cfg.experiment.name());
        for (k, v) in cfg.parameters() {
            result.param(&k, v);
        }
        Self {
            result,
            notes: Vec::new(),
            tables: Vec::new(),
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::ConditionCheck => condition_check(cfg),
        Experiment::Gamma0 => gamma0(cfg),
        Experiment::IdentityResidual => identity(cfg),
        Experiment::DualityCheck => duality(cfg),
        Experiment::Observability => observability(cfg),
        Experiment::Hum => hum(cfg),
        Experiment::NegativeClassical => neg_classical(cfg),
        Experiment::NegativeLocalized => neg_localized(cfg),
        Experiment::NegativeNoboundary => neg_no_boundary(cfg),
        Experiment::ReductionCheck => reduction(cfg),
    }
}

/// Grid, coefficients and the Carleman parameters with `mu0`, `c0`, `c1`
/// filled in.
struct Geometry {
    grid: Grid,
    coeffs: CoefficientSet,
    carleman: CarlemanConfig,
    constants_searched: bool,
}

fn geometry(cfg: &ExperimentConfig) -> Result<Geometry> {
    let grid = cfg.grid()?;
    let coeffs = cfg.coefficients(&grid);
    coeffs.check(&grid)?;
    let probe = cfg.carleman(0.0);
    probe.validate()?;
    let mu0_max = check_condition1(&grid, &probe).mu0_max;
    let mut carleman = cfg.carleman(mu0_max);
    let constants_searched = cfg.c0.is_none() || cfg.c1.is_none();
    if constants_searched {
        let (c0, c1) = search_constants(&grid, &carleman, &coeffs);
        carleman.c0 = cfg.c0.unwrap_or(c0);
        carleman.c1 = cfg.c1.unwrap_or(c1);
    }
    Ok(Geometry {
        grid,
        coeffs,
        carleman,
        constants_searched,
    })
}

/// Tree, time grid, operators and the controlled boundary.
struct Dynamics {
    geo: Geometry,
    time: TimeGrid,
    ops: LevelOperators,
    gamma0: BoundarySpec,
}

fn dynamics(cfg: &ExperimentConfig) -> Result<Dynamics> {
    let geo = geometry(cfg)?;
    let time = TimeGrid::auto(cfg.tree()?, &geo.grid);
    let ops = LevelOperators::new(&geo.grid, &geo.coeffs, &time)?;
    let gamma0 = match cfg.gamma0 {
        Gamma0Choice::Auto => compute_gamma0(&geo.grid, &geo.carleman),
        Gamma0Choice::Fixed(g) => g,
    };
    Ok(Dynamics { geo, time, ops, gamma0 })
}

fn record_dynamics(out: &mut Outcome, d: &Dynamics) {
    out.result.param("gamma0", d.gamma0.label());
    out.result.param("substeps", d.time.substeps());
    out.notes.push(format!("Γ₀ = {}", d.gamma0.label()));
    out.notes.push(format!(
        "time grid: K = {} levels of dt = {}, {} substeps each",
        d.time.tree().steps(),
        d.time.tree().dt(),
        d.time.substeps()
    ));
}

fn sine(grid: &Grid) -> Vec<f64> {
    grid.interior_x()
        .iter()
        .map(|x| (PI * x / grid.length()).sin())
        .collect()
}

fn weights_table(fields: &WeightFields) -> Table {
    let mut t = Table::new("weights.csv", &WeightFields::HEADER);
    for row in fields.rows() {
        t.push(row.iter().map(|v| v.to_string()).collect());
    }
    t
}

fn condition_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let geo = geometry(cfg)?;
    let (grid, car) = (&geo.grid, &geo.carleman);
    let c1 = check_condition1(grid, car);
    if let Some(x) = c1.critical_point {
        return Err(Error::Precondition(format!(
            "convexity condition violated: critical point of phi at x = {x} (min |phi'| = {})",
            c1.min_abs_dphi
        )));
    }
    let c2 = check_condition2(grid, car, &geo.coeffs);
    let gamma0 = compute_gamma0(grid, car);
    let mut out = Outcome::new(cfg);
    let r = &mut out.result;
    r.param("gamma0", gamma0.label());
    r.param("constants", if geo.constants_searched { "searched" } else { "given" });
    r.check("mu0_max", c1.mu0_max, c1.holds);
    r.metric("lhs_min_over_a", c1.lhs_min_over_a);
    r.metric("min_abs_dphi", c1.min_abs_dphi);
    r.metric("mu0", car.mu0);
    r.metric("c0", car.c0);
    r.metric("c1", car.c1);
    r.metric("R0_sq", c2.r0_sq);
    r.metric("R1_sq", c2.r1_sq);
    r.metric("T0", c2.t0);
    r.metric("c1_lower", c2.c1_lower);
    r.metric("c1_upper", c2.c1_upper);
    for (i, (slack, ok)) in [c2.slack1, c2.slack2, c2.slack3, c2.slack4]
        .into_iter()
        .zip(c2.items)
        .enumerate()
    {
        r.check(&format!("slack{}", i + 1), slack, ok);
    }
    out.notes.push(format!("Γ₀ = {}", gamma0.label()));
    out.notes.push(format!(
        "condition 1: {} (mu0_max = {}); condition 2 items: {:?}",
        if c1.holds { "holds" } else { "fails" },
        c1.mu0_max,
        c2.items
    ));
    match time_windows(grid, car) {
        Some(w) => {
            out.result.metric("eps0", w.eps0);
            out.result.metric("eps1", w.eps1);
        }
        None => out.notes.push("time windows: no admissible eps0/eps1".into()),
    }
    let times: Vec<f64> = (0..=20).map(|i| cfg.horizon * i as f64 / 20.0).collect();
    match certify_lambda(grid, car, &times) {
        Some(l) => {
            out.result.metric("lambda_certified", l);
        }
        None => out
            .notes
            .push("lambda: no ladder value certifies the coefficient bounds".into()),
    }
    out.tables.push(weights_table(&weight_fields(grid, car, &times)));
    Ok(out)
}

fn gamma0(cfg: &ExperimentConfig) -> Result<Outcome> {
    let geo = geometry(cfg)?;
    let (grid, car) = (&geo.grid, &geo.carleman);
    let gamma0 = compute_gamma0(grid, car);
    let scaled = CarlemanConfig {
        alpha: 2.0 * car.alpha,
        ..*car
    };
    let invariant = compute_gamma0(grid, &scaled) == gamma0;
    let mut out = Outcome::new(cfg);
    out.result.param("gamma0", gamma0.label());
    for side in Side::BOTH {
        let x = match side {
            Side::Left => 0.0,
            Side::Right => grid.length(),
        };
        let flux = grid.profile().value(x) * car.dphi(x) * side.normal();
        out.result.metric(&format!("flux_{}", side.name()), flux);
    }
    out.result.check("sides", gamma0.len() as f64, !gamma0.is_empty());
    out.result.check("scaling_invariant", invariant as u8 as f64, invariant);
    out.notes.push(format!("Γ₀ = {}", gamma0.label()));
    Ok(out)
}

fn identity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let geo = geometry(cfg)?;
    let car = geo.carleman;
    let length = cfg.length;
    let v = move |t: f64, x: f64| (PI * x / length).sin() * t.sin();
    let rep = identity_residual(length, cfg.a, &car, &v, &cfg.cells)?;
    let mut out = Outcome::new(cfg);
    out.result.param("cells", format!("{:?}", cfg.cells));
    for (c, r) in rep.cells.iter().zip(&rep.residuals) {
        out.result.metric(&format!("residual_{c}"), *r);
    }
    out.result.check("order", rep.order, rep.order >= 1.8 && !rep.flagged);
    let mut t = Table::new("identity.csv", &["cells", "residual", "order"]);
    for (i, (c, r)) in rep.cells.iter().zip(&rep.residuals).enumerate() {
        let order = if i == 0 {
            String::new()
        } else {
            rep.orders[i - 1].to_string()
        };
        t.push(vec![c.to_string(), r.to_string(), order]);
    }
    out.tables.push(t);
    if rep.flagged {
        out.notes
            .push("refinement order below 1: input too rough for the differencing".into());
    }
    Ok(out)
}

fn duality(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = dynamics(cfg)?;
    let mut out = Outcome::new(cfg);
    record_dynamics(&mut out, &d);
    let mut t = Table::new("duality.csv", &["seed", "lhs", "rhs", "relative_gap"]);
    let mut worst = 0.0f64;
    for s in 0..cfg.samples as u64 {
        let c = duality_check(&d.ops, &d.ops, &d.geo.grid, d.gamma0, cfg.seed + s)?;
        worst = worst.max(c.relative_gap());
        t.push(vec![
            (cfg.seed + s).to_string(),
            c.lhs.to_string(),
            c.rhs.to_string(),
            c.relative_gap().to_string(),
        ]);
    }
    out.result.check("max_relative_gap", worst, worst <= 1e-10);
    out.tables.push(t);
    Ok(out)
}

fn observability(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = dynamics(cfg)?;
    let g = gramian_assemble(&d.ops, &d.geo.grid, d.gamma0)?;
    let obs = observability_ratio(&g, &d.geo.grid, cfg.samples, cfg.seed)?;
    let mut out = Outcome::new(cfg);
    record_dynamics(&mut out, &d);
    let r = &mut out.result;
    r.metric("T0", d.geo.carleman.t0(&d.geo.grid));
    r.check("lambda_min", g.lambda_min(), obs.observable);
    r.metric("lambda_max", g.lambda_max());
    r.metric("asymmetry", g.asymmetry);
    if obs.observable {
        r.metric("observability_constant", obs.eigen_constant);
        r.metric("worst_sampled_ratio", obs.worst_ratio);
        r.check("route_disagreement", obs.agreement, obs.agreement <= 0.05);
        out.notes
            .push(format!("observability constant = {}", obs.eigen_constant));
    } else {
        out.notes
            .push("observability fails: the Gramian is singular on this boundary".into());
    }
    let mut gm = Table::new("gramian.csv", &[]);
    gm.header = (0..g.dim()).map(|j| format!("c{j}")).collect();
    for i in 0..g.dim() {
        gm.push((0..g.dim()).map(|j| g.matrix[(i, j)].to_string()).collect());
    }
    let mut ev = Table::new("eigenvalues.csv", &["index", "eigenvalue"]);
    for (i, v) in g.eigenvalues.iter().enumerate() {
        ev.push(vec![i.to_string(), v.to_string()]);
    }
    out.tables.push(gm);
    out.tables.push(ev);
    Ok(out)
}

/// Random leaf data whose sign follows the last increment.
fn last_increment_field(sampler: &mut Sampler, tree: BinaryTree, m: usize) -> AdaptedField {
    let k = tree.steps();
    let mut f = sampler.field(tree, m, k);
    for n in 0..BinaryTree::level_size(k) {
        let sign = tree.increment_into(n).signum();
        f.node_mut(k, n).iter_mut().for_each(|v| *v *= sign);
    }
    f
}

fn hum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = dynamics(cfg)?;
    let (grid, m, tree) = (&d.geo.grid, cfg.m, d.time.tree());
    let g = gramian_assemble(&d.ops, grid, d.gamma0)?;
    let mut sampler = Sampler::new(cfg.seed);
    let zero = AdaptedField::state(tree, m);

    // Zero terminal data, random deterministic initial target.
    let target = (sampler.vec(m), sampler.vec(m));
    let a = hum_synthesize(&d.ops, grid, &g, (&target.0, &target.1), &zero, &zero)?;
    // Leaf-dependent terminal data depending on the last increment, from rest.
    let yt = last_increment_field(&mut sampler, tree, m);
    let yht = sampler.field(tree, m, tree.steps());
    let zeros = vec![0.0; m];
    let b = hum_synthesize(&d.ops, grid, &g, (&zeros, &zeros), &yt, &yht)?;

    let mut out = Outcome::new(cfg);
    record_dynamics(&mut out, &d);
    let r = &mut out.result;
    r.metric("lambda_min", g.lambda_min());
    r.check(
        "residual_initial_target",
        a.relative_residual,
        a.relative_residual <= 1e-8,
    );
    r.metric("iterations_initial_target", a.iterations as f64);
    r.check(
        "residual_terminal_target",
        b.relative_residual,
        b.relative_residual <= 1e-8,
    );
    r.metric("iterations_terminal_target", b.iterations as f64);
    r.metric("h_max_initial_target", a.h.max_abs());
    r.metric("f_max_initial_target", a.quad.big_y.max_abs());
    r.metric("g_max_initial_target", a.quad.big_yhat.max_abs());

    let mut cg = Table::new(
        "cg_history.csv",
        &["scenario", "iteration", "relative_residual", "functional"],
    );
    for (name, h) in [("initial_target", &a), ("terminal_target", &b)] {
        for (i, (res, j)) in h.cg_history.iter().zip(&h.functional_history).enumerate() {
            cg.push(vec![name.into(), (i + 1).to_string(), res.to_string(), j.to_string()]);
        }
    }
    let n_sub = d.time.substeps();
    let mut hc = Table::new("control_h.csv", &["level", "node", "side", "substep", "h"]);
    for k in 0..tree.steps() {
        for n in 0..BinaryTree::level_size(k) {
            for side in d.gamma0.sides() {
                for j in 0..n_sub {
                    let v = a.h.node(k, n)[boundary_slot(side, j, n_sub)];
                    hc.push(vec![
                        k.to_string(),
                        n.to_string(),
                        side.name().into(),
                        j.to_string(),
                        v.to_string(),
                    ]);
                }
            }
        }
    }
    out.tables.push(cg);
    out.tables.push(hc);
    Ok(out)
}

fn neg_classical(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = dynamics(cfg)?;
    let grid = &d.geo.grid;
    let c = negative_classical(&d.ops, &d.ops, grid, d.gamma0, &sine(grid), true)?;
    let mut out = Outcome::new(cfg);
    record_dynamics(&mut out, &d);
    let r = &mut out.result;
    r.check("lower_bound", c.bound, (c.bound - 1.0).abs() <= 1e-12);
    r.check(
        "exhaustive_minimum",
        c.minimum,
        c.minimum >= c.bound - 1e-12 && (c.minimum - c.bound).abs() <= 1e-12,
    );
    r.check("refined_residual", c.refined_residual, c.refined_residual < 1e-8);
    r.metric("basis_size", c.basis_size as f64);
    out.notes.push(format!(
        "residual lower bound = {} for xi = ΔW_(K-1)/sqrt(dt), |psi| = 1",
        c.bound
    ));
    Ok(out)
}

fn neg_localized(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = dynamics(cfg)?;
    let grid = &d.geo.grid;
    let [lo, hi] = cfg.mask;
    let mask: Vec<bool> = grid
        .interior_x()
        .iter()
        .map(|x| (lo..=hi).contains(&(x / grid.length())))
        .collect();
    if mask.iter().all(|&b| b) {
        return Err(Error::Precondition("control region covers the whole interior".into()));
    }
    let rho: Vec<f64> = sine(grid)
        .iter()
        .zip(&mask)
        .map(|(s, &inside)| if inside { 0.0 } else { *s })
        .collect();
    let which = match cfg.localized {
        Localized::F => LocalizedTarget::F,
        Localized::G => LocalizedTarget::G,
    };
    let c = negative_localized(&d.ops, grid, d.gamma0, &mask, &rho, which)?;
    let mut out = Outcome::new(cfg);
    record_dynamics(&mut out, &d);
    out.result.param("mask", format!("[{lo}, {hi}]"));
    out.result
        .param("localized", format!("{:?}", cfg.localized).to_lowercase());
    out.result
        .check("hypothesis", c.hypothesis_holds as u8 as f64, c.hypothesis_holds);
    out.result.check("lower_bound", c.bound, c.bound > 0.0);
    out.result
        .check("exhaustive_minimum", c.minimum, c.minimum >= c.bound - 1e-12);
    if !c.hypothesis_holds {
        out.notes
            .push("the noise coefficient does not vanish on supp rho: no certificate".into());
    }
    Ok(out)
}

fn neg_no_boundary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let geo = geometry(cfg)?;
    let grid = &geo.grid;
    let time = TimeGrid::auto(cfg.tree()?, grid);
    let b = RefCoefficients::transposition_of(grid, &geo.coeffs);
    let ops = LevelOperators::new(grid, &b.forward_coefficients(grid), &time)?;
    let eta0 = sine(grid);
    let c = negative_no_boundary(&ops, grid, &eta0, &vec![0.0; cfg.m])?;
    let mut out = Outcome::new(cfg);
    let r = &mut out.result;
    r.metric("data_norm", c.data_norm);
    r.check(
        "internal_observation",
        c.internal_observation,
        c.internal_observation <= 1e-12 * c.data_norm,
    );
    r.check("kernel_image_norm", c.image_norm, c.image_norm <= 1e-12 * c.lambda_max);
    r.metric("lambda_max", c.lambda_max);
    let mut t = Table::new("kernel_vector.csv", &["index", "value"]);
    for (i, v) in c.kernel_vector.iter().enumerate() {
        t.push(vec![i.to_string(), v.to_string()]);
    }
    out.tables.push(t);
    Ok(out)
}

fn reduction(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = dynamics(cfg)?;
    let seeds: Vec<u64> = (0..cfg.samples as u64).map(|s| cfg.seed + s).collect();
    let rep = reduction_check(&d.geo.grid, &d.geo.coeffs, &d.time, d.gamma0, &seeds, cfg.fault)?;
    let mut out = Outcome::new(cfg);
    record_dynamics(&mut out, &d);
    out.result.param("fault", cfg.fault);
    let r = &mut out.result;
    r.metric("round_trip", rep.round_trip);
    r.metric("cross_identity", rep.cross_identity);
    r.metric("duality_gap", rep.duality_gap);
    if let Some(e) = rep.hum_endpoint {
        r.metric("hum_endpoint", e);
    }
    r.check("failures", rep.failures.len() as f64, rep.passed());
    out.notes.extend(rep.failures.iter().map(|f| format!("failed: {f}")));
    Ok(out)
}
