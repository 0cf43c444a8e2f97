use crate::spatial::{Grid, Side};
use crate::tree::{AdaptedField, BinaryTree};
use crate::Result;

use super::expect_shape;

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    /// `E[|z_k|_{H^1_0}^2 + |zhat_k|_{L^2}^2]` for `k = 0..=K`.
    pub energies: Vec<f64>,
    /// Largest level energy over the data energy.
    pub energy_ratio: f64,
    /// `E int (trace_left^2 + trace_right^2) dt` over the data energy.
    pub trace_ratio: f64,
}

/// Energy and boundary-trace bounds for a pair `(z, zhat)` whose data sits on
/// `data_level` (0 for a forward solve, K for a backward one). When `trace`
/// is `None` the conormal derivative of `z` is used.
pub fn energy_and_hidden_regularity(
    grid: &Grid,
    z: &AdaptedField,
    zhat: &AdaptedField,
    trace: Option<&AdaptedField>,
    data_level: usize,
) -> Result<EnergyReport> {
    let tree = *z.tree();
    let (m, k_max) = (grid.m(), tree.steps());
    expect_shape(z, &tree, m, k_max, "z")?;
    expect_shape(zhat, &tree, m, k_max, "zhat")?;
    if let Some(tr) = trace {
        if tr.dim() % 2 != 0 {
            return Err(crate::Error::shape("trace: expected two sides per substep"));
        }
        expect_shape(tr, &tree, tr.dim(), k_max - 1, "trace")?;
    }
    let level_energy = |k: usize| {
        let w = 1.0 / BinaryTree::level_size(k) as f64;
        (0..BinaryTree::level_size(k))
            .map(|n| grid.h01_sq(z.node(k, n)) + grid.l2_sq(zhat.node(k, n)))
            .sum::<f64>()
            * w
    };
    let energies: Vec<f64> = (0..=k_max).map(level_energy).collect();
    let mut boundary = 0.0;
    for k in 0..k_max {
        let w = tree.dt() / BinaryTree::level_size(k) as f64;
        for n in 0..BinaryTree::level_size(k) {
            let sq = match trace {
                // Substep values, each held for dt / substeps.
                Some(tr) => tr.node(k, n).iter().map(|v| v * v).sum::<f64>() * 2.0 / tr.dim() as f64,
                None => Side::BOTH
                    .iter()
                    .map(|&s| grid.conormal_trace(z.node(k, n), s).powi(2))
                    .sum(),
            };
            boundary += w * sq;
        }
    }
    let data = energies[data_level.min(k_max)];
    let ratio = |v: f64| if data > 0.0 { v / data } else { 0.0 };
    Ok(EnergyReport {
        energy_ratio: ratio(energies.iter().cloned().fold(0.0, f64::max)),
        trace_ratio: ratio(boundary),
        energies,
    })
}
