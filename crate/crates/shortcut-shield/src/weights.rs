//! Importance weights that map source expectations to unconfounded ones.
//!
//! When the training distribution correlates the class label `Y` with the
//! auxiliary label `V`, expectations under the independent counterpart
//! `P°` (same marginals, `Y ⊥ V`) can be recovered by reweighting each
//! example by
//!
//! ```text
//!   u(y, v) = P(Y=y) · P(V=v) / P(Y=y, V=v),
//! ```
//!
//! the density ratio of `P°` to the source on the label pair (Horvitz–
//! Thompson style inverse-frequency weighting). All probabilities are
//! plug-in (maximum-likelihood) cell frequencies; with those, the raw
//! weights satisfy `Σᵢ uᵢ = n` as an algebraic identity.
//!
//! Three normalizations of the same weights serve different consumers:
//!
//! * `u` — raw ratio, mean one; scales per-example losses.
//! * `ũ = u / Σu` — sums to one over the dataset; turns weighted sums
//!   into weighted means.
//! * `ū` — sums to one *within each `v`-group*; exactly the normalization
//!   a weighted two-sample mean-embedding estimate needs.
//!
//! The supremum `c_ps = max u` measures how confounded the source is
//! (`1` when `Y ⊥ V` already) and governs the variance cost of
//! reweighting.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::simulator::Dataset;

/// Plug-in estimates of the `(Y, V)` joint and its marginals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointStats {
    /// Cell counts indexed `[y][v]`.
    pub counts: [[usize; 2]; 2],
    /// Total count.
    pub n: usize,
    /// Class marginal `[P(Y=0), P(Y=1)]`.
    pub p_y: [f64; 2],
    /// Auxiliary marginal `[P(V=0), P(V=1)]`.
    pub p_v: [f64; 2],
    /// Joint probabilities indexed `[y][v]`.
    pub p_yv: [[f64; 2]; 2],
}

impl JointStats {
    /// The weight `u(y, v) = p_y(y)·p_v(v)/p_yv(y,v)` for one cell.
    #[must_use]
    pub fn cell_weight(&self, y: u8, v: u8) -> f64 {
        let (y, v) = (y as usize, v as usize);
        self.p_y[y] * self.p_v[v] / self.p_yv[y][v]
    }
}

/// Per-example importance weights in all three normalizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSet {
    /// Raw weights `uᵢ`; with same-sample plug-in stats, `Σuᵢ = n`.
    pub u: Vec<f64>,
    /// Sum-normalized weights, `Σũᵢ = 1`.
    pub u_tilde: Vec<f64>,
    /// Weights normalized to sum to one within each `v`-group.
    pub u_bar_by_group: Vec<f64>,
    /// Supremum of the raw weights, `≥ 1` up to sampling error.
    pub c_ps: f64,
}

/// Count the `(y, v)` cells of a dataset and form plug-in probabilities.
///
/// Fails, naming the cell, if any of the four cells is empty: every
/// downstream ratio would divide by zero, and an empty cell means the
/// overlap assumption behind the reweighting identity has no empirical
/// support.
pub fn estimate_stats(dataset: &Dataset) -> Result<JointStats> {
    if dataset.n() == 0 {
        return Err(Error::Config("cannot estimate statistics of an empty dataset".into()));
    }
    let counts = dataset.cell_counts();
    for y in 0..2u8 {
        for v in 0..2u8 {
            if counts[y as usize][v as usize] == 0 {
                return Err(Error::EmptyCell { y, v, context: "joint statistics" });
            }
        }
    }
    let n = dataset.n();
    let nf = n as f64;
    let mut p_yv = [[0.0; 2]; 2];
    let mut p_y = [0.0; 2];
    let mut p_v = [0.0; 2];
    for y in 0..2 {
        for v in 0..2 {
            let p = counts[y][v] as f64 / nf;
            p_yv[y][v] = p;
            p_y[y] += p;
            p_v[v] += p;
        }
    }
    Ok(JointStats { counts, n, p_y, p_v, p_yv })
}

/// Compute the per-example weights of a labeled dataset under `stats`.
///
/// The statistics need not come from `dataset` itself: in cross-validation
/// the training split's statistics are deliberately reused to weight the
/// validation split, so that the validation criterion estimates the same
/// population functional the training objective targets. The `Σuᵢ = n`
/// identity holds only in the same-sample case.
///
/// Fails if either `v`-group of `dataset` is empty (the group-normalized
/// weights would be undefined).
pub fn compute_weights(stats: &JointStats, dataset: &Dataset) -> Result<WeightSet> {
    let n = dataset.n();
    if n == 0 {
        return Err(Error::Config("cannot weight an empty dataset".into()));
    }
    let mut u = Vec::with_capacity(n);
    let mut group_sum = [0.0f64; 2];
    let mut c_ps = f64::MIN;
    for (&y, &v) in dataset.y.iter().zip(&dataset.v) {
        let w = stats.cell_weight(y, v);
        group_sum[v as usize] += w;
        c_ps = c_ps.max(w);
        u.push(w);
    }
    for v in 0..2u8 {
        if group_sum[v as usize] == 0.0 {
            return Err(Error::EmptyGroup { v });
        }
    }
    let total: f64 = group_sum[0] + group_sum[1];
    let u_tilde: Vec<f64> = u.iter().map(|w| w / total).collect();
    let u_bar_by_group: Vec<f64> = u
        .iter()
        .zip(&dataset.v)
        .map(|(w, &v)| w / group_sum[v as usize])
        .collect();
    Ok(WeightSet { u, u_tilde, u_bar_by_group, c_ps })
}

impl WeightSet {
    /// Number of weighted examples.
    #[must_use]
    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Export the raw weights as a one-column CSV (header `u`) for audit
    /// alongside the dataset they weight.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u"])?;
        for value in &self.u {
            w.write_record([format!("{value}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
