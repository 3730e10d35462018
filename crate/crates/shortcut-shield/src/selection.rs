//! Hyperparameter selection: standard CV and the two-step procedure.
//!
//! Both procedures consume per-fold validation metrics for every
//! candidate hyperparameter point and return the index of the winner.
//!
//! *Standard* selection is the familiar rule: pick the candidate with
//! the highest mean validation accuracy.
//!
//! *Two-step* selection encodes the idea that a candidate whose
//! representation still distinguishes the auxiliary groups should not
//! be trusted, however well it classifies in-distribution:
//!
//! 1. For each candidate, run a one-sample t-test of the per-fold
//!    validation MMD² against zero (two-sided, `df = K − 1`). Candidates
//!    with `p <` [`SIGNIFICANCE_LEVEL`] are excluded — their residual
//!    group discrepancy is distinguishable from noise.
//! 2. Among the survivors, pick the best mean validation AUROC (or
//!    accuracy, by choice of [`Step2Metric`]).
//!
//! If every candidate fails step 1 the procedure falls back to the
//! candidate with the smallest mean validation MMD², flagged via
//! `fallback_used` so downstream reporting can surface it.
//!
//! All ties break toward the lowest candidate index, making selection
//! deterministic given the metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObjectiveConfig;
use crate::seeding::derive_seed;
use crate::special::student_t_two_sided;
use crate::trainer::{CvStyle, MethodSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Step-1 exclusion threshold for the two-step procedure.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Shuffled K-fold split of `0..n`: returns `(train, val)` index pairs,
/// one per fold. Fold sizes differ by at most one; the split partitions
/// the index range and is deterministic in `seed`.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!(
            "cannot split {n} examples into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "kfold", k as u64));
    order.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let val: Vec<usize> = order[start..start + len].to_vec();
        let train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + len..])
            .copied()
            .collect();
        folds.push((train, val));
        start += len;
    }
    Ok(folds)
}

/// A one-sample t-test outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TTest {
    /// The t statistic `(x̄ − μ₀) / (s / √n)`.
    pub t: f64,
    /// Two-sided p-value under `t(n − 1)`.
    pub p: f64,
}

/// Two-sided one-sample t-test of `sample` against mean `mu0`.
///
/// A zero-variance sample is decided exactly: `p = 1` when the common
/// value equals `mu0` (no evidence of difference) and `p = 0` otherwise
/// (the difference is deterministic). The statistic is reported as 0 or
/// ±∞ accordingly.
pub fn one_sample_t_test(sample: &[f64], mu0: f64) -> Result<TTest> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "one-sample t-test needs at least 2 observations, got {n}"
        )));
    }
    let n_f = n as f64;
    let mean = sample.iter().sum::<f64>() / n_f;
    let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (n_f - 1.0);
    if var == 0.0 {
        return Ok(if mean == mu0 {
            TTest { t: 0.0, p: 1.0 }
        } else {
            TTest { t: f64::INFINITY.copysign(mean - mu0), p: 0.0 }
        });
    }
    let t = (mean - mu0) / (var / n_f).sqrt();
    let p = student_t_two_sided(t, n_f - 1.0)?;
    Ok(TTest { t, p })
}

/// Per-fold validation metrics for one hyperparameter candidate; each
/// vector has one entry per fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    /// Validation MMD² of the trained representation.
    pub val_mmd2: Vec<f64>,
    /// Validation AUROC.
    pub val_auroc: Vec<f64>,
    /// Validation accuracy at threshold 1/2.
    pub val_acc: Vec<f64>,
}

impl FoldMetrics {
    fn check(&self, k: usize) -> Result<()> {
        for (name, v) in [
            ("val_mmd2", &self.val_mmd2),
            ("val_auroc", &self.val_auroc),
            ("val_acc", &self.val_acc),
        ] {
            if v.len() != k {
                return Err(Error::Shape(format!(
                    "{name} has {} folds, expected {k}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite {name} fold value {bad}"
                )));
            }
        }
        Ok(())
    }
}

/// One hyperparameter candidate with its fold metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    /// Stable display label (see `trainer::hyper_label`).
    pub label: String,
    /// The objective point this candidate trains.
    pub hyper: ObjectiveConfig,
    /// Its cross-validation metrics.
    pub folds: FoldMetrics,
}

/// Which mean metric step 2 maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step2Metric {
    /// Mean validation AUROC (default).
    Auroc,
    /// Mean validation accuracy.
    Accuracy,
}

/// Outcome of a selection procedure over a candidate list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Index of the winning candidate.
    pub chosen: usize,
    /// Its label, for reports.
    pub chosen_label: String,
    /// Indices that passed step 1 (all indices for standard selection).
    pub survivors: Vec<usize>,
    /// Step-1 p-values per candidate (empty for standard selection).
    pub p_values: Vec<f64>,
    /// True when step 1 excluded everyone and the minimum-MMD fallback
    /// decided the winner.
    pub fallback_used: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_candidates(candidates: &[Candidate]) -> Result<usize> {
    let Some(first) = candidates.first() else {
        return Err(Error::Config("selection needs at least one candidate".into()));
    };
    let k = first.folds.val_mmd2.len();
    for c in candidates {
        c.folds.check(k)?;
    }
    if k < 2 {
        return Err(Error::Config(format!(
            "selection needs at least 2 folds, got {k}"
        )));
    }
    Ok(k)
}

/// Index of the maximum mean of `metric` over `indices`, ties to the
/// lowest index.
fn argmax_mean<F: Fn(&Candidate) -> &[f64]>(
    candidates: &[Candidate],
    indices: &[usize],
    metric: F,
) -> usize {
    let mut best = indices[0];
    let mut best_val = mean(metric(&candidates[best]));
    for &i in &indices[1..] {
        let val = mean(metric(&candidates[i]));
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    best
}

/// Two-step selection at a custom step-1 threshold. Exposed mainly so
/// the threshold's monotonicity (stricter thresholds keep more
/// candidates) can be exercised; use [`two_step_select`] for the
/// standard level.
pub fn two_step_select_at(
    candidates: &[Candidate],
    step2: Step2Metric,
    alpha_level: f64,
) -> Result<SelectionResult> {
    check_candidates(candidates)?;
    if !(0.0..=1.0).contains(&alpha_level) {
        return Err(Error::Config(format!(
            "significance level must lie in [0,1], got {alpha_level}"
        )));
    }
    let mut p_values = Vec::with_capacity(candidates.len());
    let mut survivors = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let test = one_sample_t_test(&c.folds.val_mmd2, 0.0)?;
        if test.p >= alpha_level {
            survivors.push(i);
        }
        p_values.push(test.p);
    }
    if survivors.is_empty() {
        // Everyone shows significant residual discrepancy; least bad wins.
        let mut best = 0;
        let mut best_val = mean(&candidates[0].folds.val_mmd2);
        for (i, c) in candidates.iter().enumerate().skip(1) {
            let val = mean(&c.folds.val_mmd2);
            if val < best_val {
                best = i;
                best_val = val;
            }
        }
        return Ok(SelectionResult {
            chosen: best,
            chosen_label: candidates[best].label.clone(),
            survivors,
            p_values,
            fallback_used: true,
        });
    }
    let chosen = match step2 {
        Step2Metric::Auroc => argmax_mean(candidates, &survivors, |c| &c.folds.val_auroc),
        Step2Metric::Accuracy => argmax_mean(candidates, &survivors, |c| &c.folds.val_acc),
    };
    Ok(SelectionResult {
        chosen,
        chosen_label: candidates[chosen].label.clone(),
        survivors,
        p_values,
        fallback_used: false,
    })
}

/// Two-step selection at the standard [`SIGNIFICANCE_LEVEL`].
pub fn two_step_select(candidates: &[Candidate], step2: Step2Metric) -> Result<SelectionResult> {
    two_step_select_at(candidates, step2, SIGNIFICANCE_LEVEL)
}

/// Standard selection: highest mean validation accuracy, all candidates
/// eligible.
pub fn standard_select(candidates: &[Candidate]) -> Result<SelectionResult> {
    check_candidates(candidates)?;
    let all: Vec<usize> = (0..candidates.len()).collect();
    let chosen = argmax_mean(candidates, &all, |c| &c.folds.val_acc);
    Ok(SelectionResult {
        chosen,
        chosen_label: candidates[chosen].label.clone(),
        survivors: all,
        p_values: Vec::new(),
        fallback_used: false,
    })
}

/// Dispatch on a method's CV style: standard methods use accuracy
/// selection; two-step methods run the filtered procedure with the
/// given step-2 metric.
pub fn select_for_method(
    candidates: &[Candidate],
    method: &MethodSpec,
    step2: Step2Metric,
) -> Result<SelectionResult> {
    match method.cv_style {
        CvStyle::Standard => standard_select(candidates),
        CvStyle::TwoStep | CvStyle::TwoStepUnweighted => two_step_select(candidates, step2),
    }
}
