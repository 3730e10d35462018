//! Empirical verification of the theory behind the method.
//!
//! The shortcut direction of a distribution is the group-mean gap
//! `Δ = E[X | V=0] − E[X | V=1]`. Several guarantees about
//! MMD-constrained linear classes reduce to statements about the
//! decomposition of a weight vector into its component *along* `Δ` and
//! the orthogonal remainder:
//!
//! ```text
//! w_perp := (Δᵀw / ‖Δ‖²) Δ        (projection onto span{Δ})
//! w_par  := w − w_perp
//! ```
//!
//! The `⊥`/`∥` naming is relative to the *invariant feature subspace*:
//! `Δ` points out of it, so the along-`Δ` component is the
//! perpendicular part. Checks implemented here:
//!
//! * **Projection bound** — for a linear model `w` on ideal
//!   (independence) data, the exact identity
//!   `‖w_perp‖·‖Δ‖ = |wᵀΔ|`, where `|wᵀΔ|` is the linear-witness lower
//!   bound on the group discrepancy of the model's representation.
//! * **Complexity comparison** — Monte Carlo Rademacher complexity of
//!   the norm-ball class `{‖w‖ ≤ A}` versus the additionally
//!   discrepancy-constrained class `{‖w‖ ≤ A, |wᵀΔ| ≤ τ}`, using exact
//!   per-draw suprema in closed form, against their analytic bounds
//!   `A√(B∥² + B⊥²)/√n` and `(A·B∥ + τ·B⊥/‖Δ‖)/√n`. The constrained
//!   bound is the tighter one exactly when `τ` falls below the
//!   improvement threshold `A(√(B∥² + B⊥²) − B∥)·‖Δ‖/B⊥`.
//! * **Structural risk gap** — shifted-distribution risk exceeds ideal
//!   risk by at most twice the representation discrepancy, checked by
//!   Monte Carlo with explicit slack.
//! * **Componentwise risk bound** — the per-class risk difference
//!   across groups, scaled by the class probability, is bounded by the
//!   discrepancy (a diagnostic: its premise is an RKHS-membership
//!   assumption that cannot be verified directly).
//! * **Bias–invariance tradeoff** — penalizing the *unweighted* group
//!   discrepancy on confounded data drags down performance under
//!   independence as the penalty grows, while the weighted penalty does
//!   not: the cost of matching the wrong marginals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{auroc, proper_scores};
use crate::kernel::weighted_mmd2;
use crate::mat::{dot, norm, Mat};
use crate::model::{forward, MmdVariant, ObjectiveConfig};
use crate::seeding::derive_seed;
use crate::simulator::{sample_dataset, Dataset, DistributionSpec};
use crate::trainer::{train, FittedModel, MethodSpec, TrainConfig};
use crate::weights::{compute_weights, estimate_stats};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tolerance for the exact linear-algebra identities checked here.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Column-mean threshold below which data counts as centered.
pub const CENTERING_TOL: f64 = 1e-8;
/// Monte Carlo slack `8/√n` used by the population-level checks.
#[must_use]
pub fn monte_carlo_slack(n: usize) -> f64 {
    8.0 / (n as f64).sqrt()
}

/// How the shortcut direction `Δ` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaSource {
    /// From the generating distribution (exact).
    Analytic,
    /// From group means of a dataset.
    Empirical,
}

/// Configuration for the complexity comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    /// Weight-norm budget `‖w‖ ≤ A`.
    #[serde(rename = "A")]
    pub a: f64,
    /// Discrepancy budget `|wᵀΔ| ≤ τ`.
    pub tau: f64,
    /// Bound on the along-`Δ` feature component, `max |xᵢᵀΔ̂/‖Δ̂‖|`.
    #[serde(rename = "B_perp")]
    pub b_perp: f64,
    /// Bound on the orthogonal feature component.
    #[serde(rename = "B_par")]
    pub b_par: f64,
    /// Monte Carlo draws for the Rademacher estimate.
    pub n_rademacher_draws: usize,
    /// Where `Δ` comes from.
    pub delta_source: DeltaSource,
}

impl TheoryConfig {
    /// Check positivity constraints.
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("A must be positive, got {}", self.a)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be nonnegative, got {}", self.tau)));
        }
        for (v, name) in [(self.b_perp, "B_perp"), (self.b_par, "B_par")] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_rademacher_draws == 0 {
            return Err(Error::Config("n_rademacher_draws must be positive".into()));
        }
        Ok(())
    }
}

/// Decompose `w` into its component along `delta` and the orthogonal
/// remainder; returns `(w_perp, w_par)`.
///
/// Verifies the defining identities before returning: the two parts are
/// orthogonal and `‖w_perp‖ = |wᵀΔ|/‖Δ‖`, both to [`IDENTITY_TOL`]
/// (scaled by magnitude); a violation means the arithmetic itself broke
/// and surfaces as a check failure.
pub fn project_decompose(w: &[f64], delta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if w.len() != delta.len() {
        return Err(Error::Shape(format!(
            "w has {} coordinates but delta has {}",
            w.len(),
            delta.len()
        )));
    }
    let d_norm2 = dot(delta, delta);
    if d_norm2 <= 0.0 {
        return Err(Error::Config("projection requires a nonzero delta".into()));
    }
    let coef = dot(w, delta) / d_norm2;
    let w_perp: Vec<f64> = delta.iter().map(|d| coef * d).collect();
    let w_par: Vec<f64> = w.iter().zip(&w_perp).map(|(a, b)| a - b).collect();

    let inner = dot(&w_perp, &w_par);
    let scale = 1.0 + norm(&w_perp) * norm(&w_par);
    if inner.abs() > IDENTITY_TOL * scale {
        return Err(Error::CheckFailed(format!(
            "projection components are not orthogonal: ⟨w_perp, w_par⟩ = {inner}"
        )));
    }
    let formula = dot(w, delta).abs() / d_norm2.sqrt();
    let direct = norm(&w_perp);
    if (formula - direct).abs() > IDENTITY_TOL * (1.0 + formula) {
        return Err(Error::CheckFailed(format!(
            "projection norm identity violated: ‖w_perp‖ = {direct} but |wᵀΔ|/‖Δ‖ = {formula}"
        )));
    }
    Ok((w_perp, w_par))
}

/// Empirical shortcut direction of a dataset:
/// `mean(x | v=0) − mean(x | v=1)`.
pub fn estimate_delta(ds: &Dataset) -> Result<Vec<f64>> {
    let d = ds.x.cols();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for i in 0..ds.n() {
        let g = ds.v[i] as usize;
        counts[g] += 1;
        for (s, &xi) in sums[g].iter_mut().zip(ds.x.row(i)) {
            *s += xi;
        }
    }
    for (g, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyGroup { v: g as u8 });
        }
    }
    Ok((0..d)
        .map(|j| sums[0][j] / counts[0] as f64 - sums[1][j] / counts[1] as f64)
        .collect())
}

/// Projection-bound report for one linear model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProjectionReport {
    /// Norm of the along-`Δ̂` weight component.
    pub w_perp_norm: f64,
    /// Linear-witness discrepancy `|ŵᵀΔ̂|`.
    pub tau_hat: f64,
    /// `tau_hat` relative to the RBF-MMD estimate of the model's
    /// representation discrepancy (diagnostic; the linear witness is a
    /// lower bound on the kernel sup, not equal to it).
    pub bound_ratio: f64,
}

/// Check the projection bound for a linear model against independence
/// data.
///
/// Estimates `Δ̂` from the dataset's group means, then asserts the exact
/// identity `‖ŵ_perp‖·‖Δ̂‖ = |ŵᵀΔ̂|` to [`IDENTITY_TOL`] — the weight
/// mass a linear model places along the shortcut direction is exactly
/// its linear-witness group discrepancy. The reported ratio compares
/// `tau_hat` against the RBF MMD of the model's representation on the
/// same data (computed with the dataset's own importance weights and
/// the model's trained bandwidth).
pub fn check_projection_bound(
    model: &FittedModel,
    dataset_ideal: &Dataset,
) -> Result<ProjectionReport> {
    let w = model.params.linear_weights()?;
    let delta_hat = estimate_delta(dataset_ideal)?;
    let (w_perp, _) = project_decompose(w, &delta_hat)?;
    let tau_hat = dot(w, &delta_hat).abs();
    let product = norm(&w_perp) * norm(&delta_hat);
    if (product - tau_hat).abs() > IDENTITY_TOL * (1.0 + tau_hat) {
        return Err(Error::CheckFailed(format!(
            "projection bound identity violated: ‖w_perp‖·‖Δ̂‖ = {product} but |wᵀΔ̂| = {tau_hat}"
        )));
    }
    let stats = estimate_stats(dataset_ideal)?;
    let weights = compute_weights(&stats, dataset_ideal)?;
    let f = forward(&model.params, &dataset_ideal.x)?;
    let mmd2 = weighted_mmd2(
        &f.phi,
        &dataset_ideal.v,
        &weights.u_bar_by_group,
        model.config.objective.kernel,
    )?;
    let mmd_hat = mmd2.sqrt();
    let bound_ratio = if mmd_hat > 0.0 {
        tau_hat / mmd_hat
    } else if tau_hat == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ProjectionReport { w_perp_norm: norm(&w_perp), tau_hat, bound_ratio })
}

/// Subtract column means; returns the centered matrix and the means.
#[must_use]
pub fn center_columns(x: &Mat) -> (Mat, Vec<f64>) {
    let means = x.col_means();
    let mut c = x.clone();
    for i in 0..c.rows() {
        for (xij, m) in c.row_mut(i).iter_mut().zip(&means) {
            *xij -= m;
        }
    }
    (c, means)
}

fn check_centered(x: &Mat) -> Result<()> {
    let worst = x
        .col_means()
        .into_iter()
        .fold(0.0f64, |acc, m| acc.max(m.abs()));
    if worst > CENTERING_TOL {
        return Err(Error::Contract(format!(
            "data must be column-centered (worst column mean {worst:.3e}); \
             apply center_columns first"
        )));
    }
    Ok(())
}

/// Feature norm bounds of centered data relative to a direction:
/// `b_perp = max |xᵢᵀδ̂|` (along `Δ`) and
/// `b_par = max ‖xᵢ − (xᵢᵀδ̂)δ̂‖` (orthogonal remainder).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormBounds {
    /// Largest along-`Δ` component magnitude.
    pub b_perp: f64,
    /// Largest orthogonal-component norm.
    pub b_par: f64,
}

/// Compute [`NormBounds`] from centered data.
pub fn feature_norm_bounds(x: &Mat, delta: &[f64]) -> Result<NormBounds> {
    if x.cols() != delta.len() {
        return Err(Error::Shape(format!(
            "data has {} columns but delta has {}",
            x.cols(),
            delta.len()
        )));
    }
    check_centered(x)?;
    let d_norm = norm(delta);
    if d_norm <= 0.0 {
        return Err(Error::Config("feature bounds require a nonzero delta".into()));
    }
    let mut b_perp = 0.0f64;
    let mut b_par = 0.0f64;
    for i in 0..x.rows() {
        let row = x.row(i);
        let along = dot(row, delta) / d_norm;
        b_perp = b_perp.max(along.abs());
        let orth2: f64 = row
            .iter()
            .zip(delta)
            .map(|(xj, dj)| {
                let r = xj - along * dj / d_norm;
                r * r
            })
            .sum();
        b_par = b_par.max(orth2.sqrt());
    }
    Ok(NormBounds { b_perp, b_par })
}

/// Analytic complexity bounds for sample size `n`:
/// `bound_l2 = A√(B∥² + B⊥²)/√n` for the norm ball, and
/// `bound_l2mmd = (A·B∥ + τ·B⊥/‖Δ‖)/√n` for the
/// discrepancy-constrained class.
#[must_use]
pub fn analytic_bounds(cfg: &TheoryConfig, delta_norm: f64, n: usize) -> (f64, f64) {
    let sqrt_n = (n as f64).sqrt();
    let l2 = cfg.a * (cfg.b_par * cfg.b_par + cfg.b_perp * cfg.b_perp).sqrt() / sqrt_n;
    let l2mmd = (cfg.a * cfg.b_par + cfg.tau * cfg.b_perp / delta_norm) / sqrt_n;
    (l2, l2mmd)
}

/// The `τ` threshold below which the constrained bound is strictly
/// tighter than the unconstrained one:
/// `A(√(B∥² + B⊥²) − B∥)·‖Δ‖/B⊥`.
#[must_use]
pub fn improvement_threshold(a: f64, b_perp: f64, b_par: f64, delta_norm: f64) -> f64 {
    a * ((b_par * b_par + b_perp * b_perp).sqrt() - b_par) * delta_norm / b_perp
}

/// Monte Carlo Rademacher comparison report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RademacherReport {
    /// Estimated complexity of the norm-ball class `{‖w‖ ≤ A}`.
    pub r_l2: f64,
    /// Estimated complexity of the constrained class
    /// `{‖w‖ ≤ A, |wᵀΔ| ≤ τ}`.
    pub r_l2mmd: f64,
    /// Analytic bound for the norm-ball class.
    pub bound_l2: f64,
    /// Analytic bound for the constrained class.
    pub bound_l2mmd: f64,
    /// `τ` level below which `bound_l2mmd < bound_l2`.
    pub improvement_threshold: f64,
    /// True when `τ > A‖Δ‖`, in which case the constraint never binds
    /// and the two classes coincide.
    pub constraint_vacuous: bool,
    /// Monte Carlo draws used.
    pub n_draws: usize,
    /// `‖Δ‖` as used in the bounds.
    pub delta_norm: f64,
}

/// Estimate Rademacher complexities of the two linear classes on
/// centered data by Monte Carlo, with exact per-draw suprema.
///
/// Per sign draw `ε ∈ {−1,+1}ⁿ`, with `s = (1/n)Σ εᵢxᵢ` decomposed
/// along/against `Δ`:
///
/// * norm ball: `sup = A‖s‖`;
/// * constrained class: if the unconstrained maximizer already
///   satisfies the discrepancy budget (`A‖s_perp‖/‖s‖ ≤ τ/‖Δ‖`), the
///   same `A‖s‖`; otherwise the budget binds along `Δ` and
///   `sup = (τ/‖Δ‖)‖s_perp‖ + √(A² − τ²/‖Δ‖²)·‖s_par‖`.
///
/// The constrained supremum never exceeds the unconstrained one; that
/// dominance is asserted per draw. Data must be centered and must
/// respect the configured feature bounds, so the reported analytic
/// bounds are genuine upper bounds for the estimates.
pub fn rademacher_estimate(
    x: &Mat,
    delta: &[f64],
    cfg: &TheoryConfig,
    seed: u64,
) -> Result<RademacherReport> {
    cfg.validate()?;
    check_centered(x)?;
    let observed = feature_norm_bounds(x, delta)?;
    if observed.b_perp > cfg.b_perp * (1.0 + 1e-9) || observed.b_par > cfg.b_par * (1.0 + 1e-9)
    {
        return Err(Error::Contract(format!(
            "configured feature bounds (B_perp={}, B_par={}) do not dominate the data \
             (observed {:.6}, {:.6})",
            cfg.b_perp, cfg.b_par, observed.b_perp, observed.b_par
        )));
    }
    let n = x.rows();
    if n == 0 {
        return Err(Error::Shape("rademacher estimate needs a nonempty sample".into()));
    }
    let delta_norm = norm(delta);
    if delta_norm <= 0.0 {
        return Err(Error::Config("rademacher estimate requires a nonzero delta".into()));
    }
    let cap = cfg.tau / delta_norm;
    let vacuous = cfg.tau > cfg.a * delta_norm;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "rademacher", 0));
    let d = x.cols();
    let mut sum_l2 = 0.0;
    let mut sum_con = 0.0;
    let mut s = vec![0.0; d];
    for _ in 0..cfg.n_rademacher_draws {
        s.iter_mut().for_each(|sj| *sj = 0.0);
        for i in 0..n {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            for (sj, &xij) in s.iter_mut().zip(x.row(i)) {
                *sj += sign * xij;
            }
        }
        let inv_n = 1.0 / n as f64;
        s.iter_mut().for_each(|sj| *sj *= inv_n);

        let (s_perp, s_par) = project_decompose(&s, delta)?;
        let s_norm = norm(&s);
        let sup_l2 = cfg.a * s_norm;
        let sup_con = if vacuous || s_norm == 0.0 {
            sup_l2
        } else {
            let perp_norm = norm(&s_perp);
            if cfg.a * perp_norm / s_norm <= cap {
                sup_l2
            } else {
                cap * perp_norm + (cfg.a * cfg.a - cap * cap).sqrt() * norm(&s_par)
            }
        };
        if sup_con > sup_l2 + 1e-12 {
            return Err(Error::CheckFailed(format!(
                "constrained supremum {sup_con} exceeded unconstrained {sup_l2}"
            )));
        }
        sum_l2 += sup_l2;
        sum_con += sup_con;
    }
    let draws = cfg.n_rademacher_draws as f64;
    let (bound_l2, bound_l2mmd) = analytic_bounds(cfg, delta_norm, n);
    Ok(RademacherReport {
        r_l2: sum_l2 / draws,
        r_l2mmd: sum_con / draws,
        bound_l2,
        bound_l2mmd,
        improvement_threshold: improvement_threshold(cfg.a, cfg.b_perp, cfg.b_par, delta_norm),
        constraint_vacuous: vacuous,
        n_draws: cfg.n_rademacher_draws,
        delta_norm,
    })
}

/// Structural risk gap report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StructuralGapReport {
    /// RBF discrepancy of the model's representation on ideal data,
    /// `√(weighted MMD²)`.
    pub tau_hat: f64,
    /// Largest Monte Carlo excess of shifted risk over ideal risk.
    pub max_gap: f64,
    /// `2·tau_hat + 8/√n`.
    pub bound: f64,
    /// Whether `max_gap ≤ bound`.
    pub satisfied: bool,
}

/// Check the structural risk gap for a fitted model.
///
/// Draws a fresh ideal sample (`ρ = 1/2`) of size `n`, measures the
/// model's representation discrepancy `tau_hat` on it, then compares
/// the model's log-loss on each shifted distribution in `rhos` against
/// its ideal-data log-loss. The gap is bounded by `2·tau_hat` up to
/// Monte Carlo slack `8/√n`.
pub fn structural_gap_check(
    model: &FittedModel,
    source_spec: &DistributionSpec,
    rhos: &[f64],
    n: usize,
    seed: u64,
) -> Result<StructuralGapReport> {
    if rhos.is_empty() {
        return Err(Error::Config("structural gap check needs at least one rho".into()));
    }
    let ideal_spec = source_spec.at_rho(0.5)?;
    let ideal = sample_dataset(&ideal_spec, n, derive_seed(seed, "ideal", 0))?;
    let stats = estimate_stats(&ideal)?;
    let weights = compute_weights(&stats, &ideal)?;
    let f = forward(&model.params, &ideal.x)?;
    let mmd2 = weighted_mmd2(
        &f.phi,
        &ideal.v,
        &weights.u_bar_by_group,
        model.config.objective.kernel,
    )?;
    let tau_hat = mmd2.sqrt();
    let (ideal_risk, _) = proper_scores(&f.prob, &ideal.y)?;

    let mut max_gap = f64::NEG_INFINITY;
    for (idx, &rho) in rhos.iter().enumerate() {
        let shifted_spec = source_spec.at_rho(rho)?;
        let shifted =
            sample_dataset(&shifted_spec, n, derive_seed(seed, "shift", idx as u64))?;
        let fs = forward(&model.params, &shifted.x)?;
        let (risk, _) = proper_scores(&fs.prob, &shifted.y)?;
        max_gap = max_gap.max(risk - ideal_risk);
    }
    let bound = 2.0 * tau_hat + monte_carlo_slack(n);
    Ok(StructuralGapReport { tau_hat, max_gap, bound, satisfied: max_gap <= bound })
}

/// Componentwise risk-bound report (diagnostic).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LemmaReport {
    /// `P̂(Y=y) · (R̂_{v=0,y} − R̂_{v=1,y})` on the ideal sample.
    pub lhs: f64,
    /// RBF discrepancy of the model's representation on the sample.
    pub tau_hat: f64,
    /// Whether `lhs ≤ tau_hat + 8/√n`.
    pub satisfied: bool,
}

/// Check the componentwise risk bound for one class `y` on ideal data.
///
/// `R̂_{v,y}` is the mean log-loss over the `(v, y)` cell. The bound's
/// premise is that the loss composed with the model lies in the unit
/// kernel ball, which is not directly verifiable, so this is a
/// diagnostic with Monte Carlo slack rather than a strict assertion.
pub fn lemma_componentwise_check(
    model: &FittedModel,
    dataset_ideal: &Dataset,
    y: u8,
) -> Result<LemmaReport> {
    if y > 1 {
        return Err(Error::Config(format!("y must be 0 or 1, got {y}")));
    }
    let n = dataset_ideal.n();
    let f = forward(&model.params, &dataset_ideal.x)?;
    let mut cell_nll = [0.0f64; 2];
    let mut cell_count = [0usize; 2];
    let mut n_y = 0usize;
    for i in 0..n {
        if dataset_ideal.y[i] != y {
            continue;
        }
        n_y += 1;
        let g = dataset_ideal.v[i] as usize;
        let p = f.prob[i];
        let yf = f64::from(y);
        cell_nll[g] -= yf * p.ln() + (1.0 - yf) * (1.0 - p).ln();
        cell_count[g] += 1;
    }
    for (v, &c) in cell_count.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyCell { y, v: v as u8, context: "componentwise risk check" });
        }
    }
    let p_y = n_y as f64 / n as f64;
    let r0 = cell_nll[0] / cell_count[0] as f64;
    let r1 = cell_nll[1] / cell_count[1] as f64;
    let lhs = p_y * (r0 - r1);

    let stats = estimate_stats(dataset_ideal)?;
    let weights = compute_weights(&stats, dataset_ideal)?;
    let mmd2 = weighted_mmd2(
        &f.phi,
        &dataset_ideal.v,
        &weights.u_bar_by_group,
        model.config.objective.kernel,
    )?;
    let tau_hat = mmd2.sqrt();
    let satisfied = lhs <= tau_hat + monte_carlo_slack(n);
    Ok(LemmaReport { lhs, tau_hat, satisfied })
}

/// One row of the bias–invariance tradeoff table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BiasTradeoffRow {
    /// Penalty strength this row trained with.
    pub alpha: f64,
    /// True for the importance-weighted penalty, false for unweighted.
    pub weighted: bool,
    /// AUROC of the trained model on a large ideal sample.
    pub train_p0_auroc: f64,
    /// Worst AUROC across the shift grid.
    pub worst_auroc: f64,
    /// Max − min AUROC across the shift grid (invariance gap).
    pub auroc_gap: f64,
}

/// Bias–invariance tradeoff report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasTradeoffReport {
    /// Two rows per `α` (unweighted then weighted), in `α` order.
    pub rows: Vec<BiasTradeoffRow>,
    /// Whether, at the largest `α`, the weighted penalty kept ideal
    /// performance at least as high as the unweighted one.
    pub ordering_holds: bool,
}

/// Demonstrate that the *unweighted* discrepancy penalty is biased on
/// confounded data.
///
/// For each `α`, trains a weighted and an unweighted MMD objective on
/// the same confounded sample (`source_spec.rho ≠ 1/2` required — the
/// contrast vanishes under independence) and reports ideal-sample AUROC
/// plus the worst AUROC across `rhos`. Matching unweighted group
/// marginals on confounded data forces the representation to discard
/// label signal, so ideal performance should degrade as `α` grows for
/// the unweighted penalty but not the weighted one; `ordering_holds`
/// records that comparison at the largest `α`. All rows share training
/// data and evaluation samples, so comparisons are paired. The base
/// config contributes the protocol (epochs, batch size, kernel, `λ`);
/// seeds derive from `seed` alone.
pub fn bias_tradeoff_demo(
    source_spec: &DistributionSpec,
    alphas: &[f64],
    base: &TrainConfig,
    n_train: usize,
    n_eval: usize,
    rhos: &[f64],
    seed: u64,
) -> Result<BiasTradeoffReport> {
    if source_spec.rho == 0.5 {
        return Err(Error::Config(
            "the tradeoff demonstration needs a confounded source (rho ≠ 0.5)".into(),
        ));
    }
    if alphas.is_empty() || rhos.is_empty() {
        return Err(Error::Config("tradeoff demo needs nonempty alpha and rho grids".into()));
    }
    let train_ds = sample_dataset(source_spec, n_train, derive_seed(seed, "train", 0))?;
    let stats = estimate_stats(&train_ds)?;
    let weights = compute_weights(&stats, &train_ds)?;

    let ideal_spec = source_spec.at_rho(0.5)?;
    let ideal = sample_dataset(&ideal_spec, n_eval, derive_seed(seed, "ideal", 0))?;
    let shifted: Vec<Dataset> = rhos
        .iter()
        .enumerate()
        .map(|(idx, &rho)| {
            sample_dataset(
                &source_spec.at_rho(rho)?,
                n_eval,
                derive_seed(seed, "shift", idx as u64),
            )
        })
        .collect::<Result<_>>()?;

    let weighted_method = MethodSpec::from_label("wMMD-T")?;
    let unweighted_method = MethodSpec::from_label("MMD-T")?;
    let mut rows = Vec::with_capacity(2 * alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (wi, (flag, method)) in
            [(false, &unweighted_method), (true, &weighted_method)].iter().enumerate()
        {
            let cfg = TrainConfig {
                objective: ObjectiveConfig {
                    alpha,
                    mmd_variant: MmdVariant::Marginal,
                    ..base.objective.clone()
                },
                seed: derive_seed(seed, "fit", (2 * ai + wi) as u64),
                ..base.clone()
            };
            let fitted = train(&train_ds, &weights, method, &cfg)?;
            let fi = forward(&fitted.params, &ideal.x)?;
            let p0 = auroc(&fi.prob, &ideal.y)?;
            let mut worst = f64::INFINITY;
            let mut best = f64::NEG_INFINITY;
            for ds in &shifted {
                let fs = forward(&fitted.params, &ds.x)?;
                let a = auroc(&fs.prob, &ds.y)?;
                worst = worst.min(a);
                best = best.max(a);
            }
            rows.push(BiasTradeoffRow {
                alpha,
                weighted: *flag,
                train_p0_auroc: p0,
                worst_auroc: worst,
                auroc_gap: best - worst,
            });
        }
    }
    let ordering_holds = {
        let last = &rows[rows.len() - 2..];
        let (unw, wtd) =
            if last[0].weighted { (last[1], last[0]) } else { (last[0], last[1]) };
        wtd.train_p0_auroc >= unw.train_p0_auroc
    };
    Ok(BiasTradeoffReport { rows, ordering_holds })
}
