//! Uniform 1D grid on `(0, L)` with a divergence-form elliptic operator.
//!
//! Interior nodes are `x_i = i dx`, `i = 1..=M`, with `dx = L / (M + 1)`.
//! Vectors passed around are interior values only; node 0 and node `M + 1`
//! carry Dirichlet data. Inner products are `dx`-weighted.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Smooth scalar profile `p(x)` with exact derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// `base + amplitude * sin(wavenumber * x)`
    Sine {
        base: f64,
        amplitude: f64,
        wavenumber: f64,
    },
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    pub fn derivative(&self, x: f64, order: u32) -> f64 {
        match *self {
            Profile::Constant(c) => {
                if order == 0 {
                    c
                } else {
                    0.0
                }
            }
            Profile::Affine { intercept, slope } => match order {
                0 => intercept + slope * x,
                1 => slope,
                _ => 0.0,
            },
            Profile::Sine {
                base,
                amplitude,
                wavenumber,
            } => {
                let phase = wavenumber * x + order as f64 * std::f64::consts::FRAC_PI_2;
                let s = amplitude * wavenumber.powi(order as i32) * phase.sin();
                if order == 0 {
                    base + s
                } else {
                    s
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Constant(c) if *c == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    /// Outward unit normal.
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// The controlled part of the boundary `{0, L}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundarySpec {
    pub left: bool,
    pub right: bool,
}

impl BoundarySpec {
    pub const EMPTY: BoundarySpec = BoundarySpec {
        left: false,
        right: false,
    };
    pub const RIGHT: BoundarySpec = BoundarySpec {
        left: false,
        right: true,
    };
    pub const LEFT: BoundarySpec = BoundarySpec {
        left: true,
        right: false,
    };
    pub const BOTH: BoundarySpec = BoundarySpec {
        left: true,
        right: true,
    };

    pub fn contains(&self, side: Side) -> bool {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    pub fn sides(&self) -> Vec<Side> {
        Side::BOTH.into_iter().filter(|s| self.contains(*s)).collect()
    }

    pub fn len(&self) -> usize {
        self.left as usize + self.right as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self) -> String {
        let names: Vec<_> = self.sides().iter().map(|s| s.name()).collect();
        format!("{{{}}}", names.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h01: f64,
    pub hneg1: f64,
}

#[derive(Clone, Debug)]
pub struct Grid {
    length: f64,
    m: usize,
    dx: f64,
    profile: Profile,
    /// `a` at nodes `0..=M+1`.
    a: Vec<f64>,
    /// `a_{i+1/2}` for cells `i = 0..=M`.
    a_mid: Vec<f64>,
    s0: f64,
    neg_a: Cholesky<f64, Dyn>,
}

impl Grid {
    pub fn new(length: f64, m: usize, profile: Profile) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidParameter(format!("need M >= 3 interior points, got {m}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "domain length {length} must be positive"
            )));
        }
        let dx = length / (m + 1) as f64;
        let a: Vec<f64> = (0..m + 2).map(|i| profile.value(i as f64 * dx)).collect();
        let s0 = a.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(s0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "elliptic coefficient must be positive on the grid (min {s0})"
            )));
        }
        let a_mid: Vec<f64> = a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let neg = -elliptic_matrix_from(&a_mid, dx);
        let neg_a =
            Cholesky::new(neg).ok_or_else(|| Error::Numerical("elliptic matrix factorization failed".into()))?;
        Ok(Self {
            length,
            m,
            dx,
            profile,
            a,
            a_mid,
            s0,
            neg_a,
        })
    }

    pub fn unit(m: usize) -> Result<Self> {
        Self::new(1.0, m, Profile::Constant(1.0))
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn a_max(&self) -> f64 {
        self.a.iter().cloned().fold(0.0, f64::max)
    }

    /// Node coordinate, `i = 0..=M+1`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn interior_x(&self) -> Vec<f64> {
        (1..=self.m).map(|i| self.x(i)).collect()
    }

    /// `a` at nodes `0..=M+1`.
    pub fn a_nodes(&self) -> &[f64] {
        &self.a
    }

    pub fn a_mid(&self) -> &[f64] {
        &self.a_mid
    }

    /// Midpoint coefficient on the boundary cell next to `side`.
    pub fn a_boundary(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.a_mid[0],
            Side::Right => self.a_mid[self.m],
        }
    }

    /// Largest stable substep for explicit wave stepping.
    pub fn cfl_limit(&self) -> f64 {
        self.dx / self.a_max().sqrt()
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() == self.m {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: expected length {}, got {}",
                self.m,
                v.len()
            )))
        }
    }

    /// Conservative second-order stencil with Dirichlet values `(left, right)`.
    pub fn apply_elliptic(&self, z: &[f64], boundary: (f64, f64)) -> Result<Vec<f64>> {
        self.check_len(z, "apply_elliptic")?;
        let mut out = vec![0.0; self.m];
        self.elliptic_into(z, boundary, &mut out);
        Ok(out)
    }

    pub(crate) fn elliptic_into(&self, z: &[f64], boundary: (f64, f64), out: &mut [f64]) {
        let m = self.m;
        let inv = 1.0 / (self.dx * self.dx);
        for i in 0..m {
            let left = if i == 0 { boundary.0 } else { z[i - 1] };
            let right = if i + 1 == m { boundary.1 } else { z[i + 1] };
            out[i] = (self.a_mid[i + 1] * (right - z[i]) - self.a_mid[i] * (z[i] - left)) * inv;
        }
    }

    /// Zero-boundary elliptic matrix `A`.
    pub fn elliptic_matrix(&self) -> DMatrix<f64> {
        elliptic_matrix_from(&self.a_mid, self.dx)
    }

    /// Contribution of Dirichlet data to `A`: `apply_elliptic(z, b) = A z + dirichlet_source(b)`.
    pub fn dirichlet_source(&self, side: Side, value: f64) -> (usize, f64) {
        let inv = 1.0 / (self.dx * self.dx);
        match side {
            Side::Left => (0, self.a_mid[0] * value * inv),
            Side::Right => (self.m - 1, self.a_mid[self.m] * value * inv),
        }
    }

    /// Centred first difference with zero extension.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let m = self.m;
        let inv = 0.5 / self.dx;
        (0..m)
            .map(|i| {
                let l = if i == 0 { 0.0 } else { z[i - 1] };
                let r = if i + 1 == m { 0.0 } else { z[i + 1] };
                (r - l) * inv
            })
            .collect()
    }

    pub fn gradient_matrix(&self) -> DMatrix<f64> {
        let m = self.m;
        let inv = 0.5 / self.dx;
        DMatrix::from_fn(m, m, |i, j| {
            if j == i + 1 {
                inv
            } else if j + 1 == i {
                -inv
            } else {
                0.0
            }
        })
    }

    /// Centred difference of a nodal field (length `M + 2`) at the interior nodes.
    pub fn nodal_derivative(&self, f: &[f64]) -> Vec<f64> {
        (1..=self.m).map(|i| (f[i + 1] - f[i - 1]) / (2.0 * self.dx)).collect()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.dx * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_sq(&self, u: &[f64]) -> f64 {
        self.inner(u, u)
    }

    /// `dx * sum_cells a_{i+1/2} ((u_{i+1} - u_i)/dx)^2`, zero-extended.
    pub fn h01_sq(&self, u: &[f64]) -> f64 {
        let m = self.m;
        let mut s = 0.0;
        for c in 0..=m {
            let l = if c == 0 { 0.0 } else { u[c - 1] };
            let r = if c == m { 0.0 } else { u[c] };
            s += self.a_mid[c] * (r - l).powi(2);
        }
        s / self.dx
    }

    /// `dx * u^T (-A)^{-1} u`.
    pub fn hneg1_sq(&self, u: &[f64]) -> f64 {
        let w = self.neg_a.solve(&DVector::from_column_slice(u));
        self.inner(u, w.as_slice())
    }

    /// Solve `(-A) w = u` with zero boundary values.
    pub fn solve_neg_elliptic(&self, u: &[f64]) -> Vec<f64> {
        self.neg_a.solve(&DVector::from_column_slice(u)).as_slice().to_vec()
    }

    pub fn norms(&self, u: &[f64]) -> Result<Norms> {
        self.check_len(u, "norms")?;
        Ok(Norms {
            l2: self.l2_sq(u).sqrt(),
            h01: self.h01_sq(u).sqrt(),
            hneg1: self.hneg1_sq(u).max(0.0).sqrt(),
        })
    }

    /// Outward normal derivative against a zero boundary value:
    /// `(-z_1/dx, -z_M/dx)`.
    pub fn normal_trace(&self, z: &[f64]) -> Result<(f64, f64)> {
        self.check_len(z, "normal_trace")?;
        Ok((-z[0] / self.dx, -z[self.m - 1] / self.dx))
    }

    /// `a * dz/dnu` at `side`, the flux that pairs with Dirichlet data.
    pub fn conormal_trace(&self, z: &[f64], side: Side) -> f64 {
        match side {
            Side::Left => -self.a_mid[0] * z[0] / self.dx,
            Side::Right => -self.a_mid[self.m] * z[self.m - 1] / self.dx,
        }
    }

    /// Wave energy `(|y|_{H^1_0}^2 + |yhat|_{L^2}^2) / 2`.
    pub fn energy(&self, y: &[f64], yhat: &[f64]) -> f64 {
        0.5 * (self.h01_sq(y) + self.l2_sq(yhat))
    }
}

fn elliptic_matrix_from(a_mid: &[f64], dx: f64) -> DMatrix<f64> {
    let m = a_mid.len() - 1;
    let inv = 1.0 / (dx * dx);
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            -(a_mid[i] + a_mid[i + 1]) * inv
        } else if j == i + 1 {
            a_mid[i + 1] * inv
        } else if i == j + 1 {
            a_mid[i] * inv
        } else {
            0.0
        }
    })
}

/// Lower-order coefficients `a1..a5`, sampled at nodes `0..=M+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub a3: Vec<f64>,
    pub a4: Vec<f64>,
    pub a5: Vec<f64>,
}

impl CoefficientSet {
    pub fn zero(grid: &Grid) -> Self {
        let z = vec![0.0; grid.m() + 2];
        Self {
            a1: z.clone(),
            a2: z.clone(),
            a3: z.clone(),
            a4: z.clone(),
            a5: z,
        }
    }

    /// Samples the profiles; `a5` is forced to vanish on the two boundary nodes.
    pub fn from_profiles(grid: &Grid, profiles: [Profile; 5]) -> Self {
        let sample = |p: Profile| -> Vec<f64> { (0..grid.m() + 2).map(|i| p.value(grid.x(i))).collect() };
        let mut a5 = sample(profiles[4]);
        let last = a5.len() - 1;
        a5[0] = 0.0;
        a5[last] = 0.0;
        Self {
            a1: sample(profiles[0]),
            a2: sample(profiles[1]),
            a3: sample(profiles[2]),
            a4: sample(profiles[3]),
            a5,
        }
    }

    pub fn interior(field: &[f64]) -> &[f64] {
        &field[1..field.len() - 1]
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        let n = grid.m() + 2;
        for (name, f) in self.named() {
            if f.len() != n {
                return Err(Error::shape(format!(
                    "coefficient {name} has length {}, expected {n}",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("coefficient {name} is not finite")));
            }
        }
        if self.a5[0] != 0.0 || self.a5[n - 1] != 0.0 {
            return Err(Error::InvalidParameter("a5 must vanish on the boundary nodes".into()));
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("a1", &self.a1),
            ("a2", &self.a2),
            ("a3", &self.a3),
            ("a4", &self.a4),
            ("a5", &self.a5),
        ]
    }

    /// `|a1|_{W1inf}^2 + |a2|^2 + |a3|^2 + |a4|^2 + |a5|_{W1inf}^2`.
    pub fn r2(&self, grid: &Grid) -> f64 {
        w1inf(&self.a1, grid.dx()).powi(2)
            + sup(&self.a2).powi(2)
            + sup(&self.a3).powi(2)
            + sup(&self.a4).powi(2)
            + w1inf(&self.a5, grid.dx()).powi(2)
    }

    pub fn sup_a5(&self) -> f64 {
        sup(&self.a5)
    }
}

fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `max(sup|f|, sup|Df|)` with forward differences over all nodes.
fn w1inf(f: &[f64], dx: f64) -> f64 {
    let d = f.windows(2).fold(0.0f64, |m, w| m.max(((w[1] - w[0]) / dx).abs()));
    sup(f).max(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine_mode(grid: &Grid) -> Vec<f64> {
        grid.interior_x().iter().map(|x| (PI * x).sin()).collect()
    }

    #[test]
    fn laplacian_of_sine_converges_at_second_order() {
        let mut errs = Vec::new();
        for m in [19, 39, 79] {
            let g = Grid::unit(m).unwrap();
            let z = sine_mode(&g);
            let az = g.apply_elliptic(&z, (0.0, 0.0)).unwrap();
            let err = az
                .iter()
                .zip(&z)
                .fold(0.0f64, |e, (a, v)| e.max((a + PI * PI * v).abs()));
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.9 && (errs[1] / errs[2]).log2() > 1.9, "orders from {errs:?}");
    }

    #[test]
    fn affine_with_matching_boundary_is_annihilated() {
        let g = Grid::new(2.0, 9, Profile::Constant(1.0)).unwrap();
        let f = |x: f64| 3.0 - 1.5 * x;
        let z: Vec<f64> = g.interior_x().iter().map(|x| f(*x)).collect();
        let az = g.apply_elliptic(&z, (f(0.0), f(2.0))).unwrap();
        assert!(az.iter().all(|v| v.abs() < 1e-11));
        assert!(g
            .apply_elliptic(&[0.0; 9], (0.0, 0.0))
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = Grid::unit(5).unwrap();
        assert!(matches!(g.apply_elliptic(&[1.0; 4], (0.0, 0.0)), Err(Error::Shape(_))));
        assert!(Grid::unit(2).is_err());
        assert!(Grid::new(
            1.0,
            5,
            Profile::Affine {
                intercept: -1.0,
                slope: 0.5
            }
        )
        .is_err());
    }

    #[test]
    fn norms_of_zero() {
        let g = Grid::unit(7).unwrap();
        assert_eq!(
            g.norms(&[0.0; 7]).unwrap(),
            Norms {
                l2: 0.0,
                h01: 0.0,
                hneg1: 0.0
            }
        );
    }

    #[test]
    fn rayleigh_quotient_of_first_mode() {
        for m in [15, 31, 63] {
            let g = Grid::unit(m).unwrap();
            let u = sine_mode(&g);
            let ratio = g.h01_sq(&u) / g.l2_sq(&u);
            let dx = g.dx();
            let closed = (2.0 - 2.0 * (PI * dx).cos()) / (dx * dx);
            assert!((ratio - closed).abs() < 1e-10 * closed);
        }
        let g = Grid::unit(127).unwrap();
        let u = sine_mode(&g);
        assert!((g.h01_sq(&u) / g.l2_sq(&u) - PI * PI).abs() < 1e-3);
    }

    #[test]
    fn normal_trace_of_sine() {
        let mut prev = f64::INFINITY;
        for m in [19, 39, 79, 159] {
            let g = Grid::unit(m).unwrap();
            let (l, r) = g.normal_trace(&sine_mode(&g)).unwrap();
            assert!((l - r).abs() < 1e-12);
            let err = (l + PI).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-3);
        let g = Grid::unit(7).unwrap();
        assert_eq!(g.normal_trace(&[0.0; 7]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn a5_vanishes_on_boundary_and_r2_counts_sup_norms() {
        let g = Grid::unit(9).unwrap();
        let c = CoefficientSet::from_profiles(
            &g,
            [
                Profile::Constant(0.5),
                Profile::Constant(-2.0),
                Profile::Constant(1.0),
                Profile::Constant(0.0),
                Profile::Constant(3.0),
            ],
        );
        assert_eq!(c.a5[0], 0.0);
        assert_eq!(*c.a5.last().unwrap(), 0.0);
        c.check(&g).unwrap();
        // a5 jumps 0 -> 3 across one cell: |Da5| = 3/dx.
        let expected = 0.25 + 4.0 + 1.0 + 0.0 + (3.0 / g.dx()).powi(2);
        assert!((c.r2(&g) - expected).abs() < 1e-12 * expected);
        assert_eq!(CoefficientSet::zero(&g).r2(&g), 0.0);
    }

    #[test]
    fn gamma0_labels() {
        assert_eq!(BoundarySpec::RIGHT.label(), "{right}");
        assert_eq!(BoundarySpec::EMPTY.label(), "{}");
        assert_eq!(BoundarySpec::BOTH.sides(), vec![Side::Left, Side::Right]);
    }

    fn grid_and_vectors() -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>)> {
        (3usize..24, 0.5f64..3.0, 0.0f64..0.8).prop_flat_map(|(m, len, amp)| {
            let g = Grid::new(
                len,
                m,
                Profile::Sine {
                    base: 1.0,
                    amplitude: amp,
                    wavenumber: 2.0,
                },
            )
            .unwrap();
            (
                Just(g),
                prop::collection::vec(-5.0f64..5.0, m),
                prop::collection::vec(-5.0f64..5.0, m),
            )
        })
    }

    proptest! {
        #[test]
        fn elliptic_operator_is_symmetric_negative((g, z, w) in grid_and_vectors()) {
            let az = g.apply_elliptic(&z, (0.0, 0.0)).unwrap();
            let aw = g.apply_elliptic(&w, (0.0, 0.0)).unwrap();
            let lhs = g.inner(&az, &w);
            let rhs = g.inner(&z, &aw);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            // dx <Az, z> = -|z|_{H^1_0}^2 <= -s0 |Dz|^2
            let q = g.inner(&az, &z);
            prop_assert!((q + g.h01_sq(&z)).abs() <= 1e-9 * (1.0 + q.abs()));
        }

        #[test]
        fn duality_sandwich((g, u, v) in grid_and_vectors()) {
            let nu = g.norms(&u).unwrap();
            let nv = g.norms(&v).unwrap();
            prop_assert!(nu.hneg1 * nv.h01 + 1e-10 >= g.inner(&u, &v).abs());
        }

        #[test]
        fn norms_scale_linearly((g, u, _v) in grid_and_vectors(), c in -4.0f64..4.0) {
            let n = g.norms(&u).unwrap();
            let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
            let nc = g.norms(&cu).unwrap();
            for (a, b) in [(nc.l2, n.l2), (nc.h01, n.h01), (nc.hneg1, n.hneg1)] {
                prop_assert!((a - c.abs() * b).abs() <= 1e-10 * (1.0 + a));
            }
        }

        #[test]
        fn poincare_chain((g, u, _v) in grid_and_vectors()) {
            // hneg1 <= l2 / sqrt(lambda_1) and l2 <= h01 / sqrt(lambda_1)
            let lambda1 = g.elliptic_matrix().map(|v| -v).symmetric_eigenvalues().min();
            let n = g.norms(&u).unwrap();
            let c = 1.0 / lambda1.sqrt();
            prop_assert!(n.hneg1 <= c * n.l2 * (1.0 + 1e-10) + 1e-14);
            prop_assert!(n.l2 <= c * n.h01 * (1.0 + 1e-10) + 1e-14);
        }

        #[test]
        fn trace_is_linear((g, z, _w) in grid_and_vectors(), c in -4.0f64..4.0) {
            let (l, r) = g.normal_trace(&z).unwrap();
            let cz: Vec<f64> = z.iter().map(|x| c * x).collect();
            let (cl, cr) = g.normal_trace(&cz).unwrap();
            prop_assert!((cl - c * l).abs() <= 1e-12 * (1.0 + cl.abs()));
            prop_assert!((cr - c * r).abs() <= 1e-12 * (1.0 + cr.abs()));
        }
    }
}
