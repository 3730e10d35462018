//! Metrics and the distribution-shift evaluation grid.
//!
//! The headline metric is AUROC computed by the Mann–Whitney
//! identity, in a weighted form:
//!
//! ```text
//! AUROC = Σ_{i: y=1} Σ_{j: y=0} wᵢ wⱼ [ 1(sᵢ > sⱼ) + ½·1(sᵢ = sⱼ) ]
//!         ─────────────────────────────────────────────────────────
//!                        (Σ_{i: y=1} wᵢ) (Σ_{j: y=0} wⱼ)
//! ```
//!
//! evaluated in `O(n log n)` by sorting scores and walking tie groups.
//! With unit weights this is the usual empirical AUROC; with importance
//! weights it estimates the AUROC under the reweighted (balanced)
//! distribution, which is what validation metrics use during weighted
//! model selection.
//!
//! [`evaluate_grid`] measures a trained model across a grid of test
//! distributions that share everything with the training distribution
//! except the label–auxiliary dependence `ρ`. Test sets are seeded from
//! the replication seed and the grid position only, so two methods
//! evaluated with the same seed see byte-identical test sets and their
//! per-`ρ` rows are exactly paired.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{forward, ModelParams, PROB_FLOOR};
use crate::simulator::{sample_dataset, DistributionSpec};

/// Exact column order of the evaluation CSV.
pub const EVAL_CSV_HEADER: [&str; 8] =
    ["method", "seed", "rho_train", "rho_test", "auroc", "logloss", "brier", "n_test"];

/// Weighted AUROC with half-credit ties (Mann–Whitney form).
///
/// Labels must contain both classes with positive total weight;
/// otherwise the statistic is undefined and an error is returned.
pub fn weighted_auroc(scores: &[f64], labels: &[u8], weights: &[f64]) -> Result<f64> {
    let n = scores.len();
    if labels.len() != n || weights.len() != n {
        return Err(Error::Shape(format!(
            "auroc inputs disagree: {n} scores, {} labels, {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::Contract("auroc of an empty sample is undefined".into()));
    }
    for (&s, &w) in scores.iter().zip(weights) {
        if !s.is_finite() || !w.is_finite() || w < 0.0 {
            return Err(Error::Numerical(format!(
                "auroc requires finite scores and nonnegative finite weights, got score {s}, weight {w}"
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut w0_total = 0.0;
    let mut w1_total = 0.0;
    for (&y, &w) in labels.iter().zip(weights) {
        match y {
            0 => w0_total += w,
            1 => w1_total += w,
            other => {
                return Err(Error::Contract(format!("labels must be 0/1, got {other}")))
            }
        }
    }
    if w0_total <= 0.0 || w1_total <= 0.0 {
        return Err(Error::Contract(
            "auroc is undefined unless both classes carry positive weight".into(),
        ));
    }

    let mut num = 0.0;
    let mut w0_before = 0.0;
    let mut g = 0;
    while g < n {
        // Advance over one exact-tie group of scores.
        let mut end = g + 1;
        while end < n && scores[order[end]] == scores[order[g]] {
            end += 1;
        }
        let mut w0_g = 0.0;
        let mut w1_g = 0.0;
        for &i in &order[g..end] {
            if labels[i] == 0 {
                w0_g += weights[i];
            } else {
                w1_g += weights[i];
            }
        }
        num += w1_g * (w0_before + 0.5 * w0_g);
        w0_before += w0_g;
        g = end;
    }
    Ok(num / (w0_total * w1_total))
}

/// Unweighted AUROC with half-credit ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    weighted_auroc(scores, labels, &vec![1.0; scores.len()])
}

/// Weighted accuracy of thresholded probabilities; a predicted
/// probability of exactly 1/2 counts as a positive prediction.
pub fn weighted_accuracy(probs: &[f64], labels: &[u8], weights: &[f64]) -> Result<f64> {
    let n = probs.len();
    if labels.len() != n || weights.len() != n {
        return Err(Error::Shape(format!(
            "accuracy inputs disagree: {n} probs, {} labels, {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::Contract("accuracy of an empty sample is undefined".into()));
    }
    let mut hit = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let pred = u8::from(probs[i] >= 0.5);
        if pred == labels[i] {
            hit += weights[i];
        }
        total += weights[i];
    }
    if total <= 0.0 {
        return Err(Error::Contract("accuracy needs positive total weight".into()));
    }
    Ok(hit / total)
}

/// Unweighted accuracy at threshold 1/2.
pub fn accuracy(probs: &[f64], labels: &[u8]) -> Result<f64> {
    weighted_accuracy(probs, labels, &vec![1.0; probs.len()])
}

/// Mean negative log-likelihood and Brier score of predicted
/// probabilities. Probabilities are clamped away from {0, 1} before the
/// logarithm so exact-confidence inputs stay finite.
pub fn proper_scores(probs: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let n = probs.len();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "scores need matching lengths, got {n} probs and {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Contract("proper scores of an empty sample are undefined".into()));
    }
    let mut nll = 0.0;
    let mut brier = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let yf = f64::from(y);
        nll -= yf * pc.ln() + (1.0 - yf) * (1.0 - pc).ln();
        brier += (p - yf) * (p - yf);
    }
    let n_f = n as f64;
    Ok((nll / n_f, brier / n_f))
}

/// One test-distribution row of the evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    /// Method label that produced the model.
    pub method: String,
    /// Replication seed the evaluation ran under.
    pub seed: u64,
    /// `ρ` of the training distribution.
    pub rho_train: f64,
    /// `ρ` of this row's test distribution.
    pub rho_test: f64,
    /// Unweighted test AUROC.
    pub auroc: f64,
    /// Mean negative log-likelihood.
    pub logloss: f64,
    /// Brier score.
    pub brier: f64,
    /// Test-set size.
    pub n_test: usize,
}

/// Aggregates over the rows of one evaluation grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Spread of AUROC across test distributions (max − min); small
    /// values mean shift-invariant performance.
    pub invariance_gap_auroc: f64,
    /// Worst-case AUROC over the grid.
    pub worst_auroc: f64,
    /// AUROC at the grid point closest to the training `ρ`.
    pub at_train_auroc: f64,
}

/// An evaluation grid: per-`ρ` rows (sorted by `rho_test`) plus their
/// summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-test-distribution rows, ascending in `rho_test`.
    pub rows: Vec<EvalRow>,
    /// Aggregates over the rows.
    pub summary: EvalSummary,
}

/// Default evaluation test-set size.
pub const DEFAULT_N_TEST: usize = 10_000;

/// Evaluate a trained model across test distributions varying `ρ`.
///
/// Each grid position draws a fresh test set from `train_spec.at_rho(ρ)`
/// seeded by `seed ^ position`, so evaluations of different models under
/// the same seed are paired: they score byte-identical test sets. Rows
/// come back sorted by `rho_test`; the recorded `seed` column is the
/// replication seed passed in.
pub fn evaluate_grid(
    params: &ModelParams,
    method_label: &str,
    train_spec: &DistributionSpec,
    rho_tests: &[f64],
    n_test: usize,
    seed: u64,
) -> Result<EvalReport> {
    if rho_tests.is_empty() {
        return Err(Error::Config("evaluation grid needs at least one rho_test".into()));
    }
    let mut rows = Vec::with_capacity(rho_tests.len());
    for (idx, &rho) in rho_tests.iter().enumerate() {
        let test_spec = train_spec.at_rho(rho)?;
        let ds = sample_dataset(&test_spec, n_test, seed ^ idx as u64)?;
        let f = forward(params, &ds.x)?;
        let auc = auroc(&f.prob, &ds.y)?;
        let (logloss, brier) = proper_scores(&f.prob, &ds.y)?;
        rows.push(EvalRow {
            method: method_label.to_string(),
            seed,
            rho_train: train_spec.rho,
            rho_test: rho,
            auroc: auc,
            logloss,
            brier,
            n_test,
        });
    }
    rows.sort_by(|a, b| a.rho_test.total_cmp(&b.rho_test));
    let summary = summarize(&rows)?;
    Ok(EvalReport { rows, summary })
}

/// Compute the grid summary from evaluation rows.
pub fn summarize(rows: &[EvalRow]) -> Result<EvalSummary> {
    let Some(first) = rows.first() else {
        return Err(Error::Contract("cannot summarize an empty evaluation grid".into()));
    };
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut at_train = first.auroc;
    let mut best_dist = f64::INFINITY;
    for row in rows {
        min = min.min(row.auroc);
        max = max.max(row.auroc);
        let dist = (row.rho_test - row.rho_train).abs();
        if dist < best_dist {
            best_dist = dist;
            at_train = row.auroc;
        }
    }
    Ok(EvalSummary {
        invariance_gap_auroc: max - min,
        worst_auroc: min,
        at_train_auroc: at_train,
    })
}

/// Write evaluation rows as CSV with the pinned header
/// `method,seed,rho_train,rho_test,auroc,logloss,brier,n_test`.
pub fn write_rows_csv<W: Write>(rows: &[EvalRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVAL_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            format!("{}", r.seed),
            format!("{}", r.rho_train),
            format!("{}", r.rho_test),
            format!("{}", r.auroc),
            format!("{}", r.logloss),
            format!("{}", r.brier),
            format!("{}", r.n_test),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auroc_matches_hand_counted_example() {
        // Pairs: (0.35 vs 0.1) ✓, (0.35 vs 0.4) ✗, (0.8 vs 0.1) ✓,
        // (0.8 vs 0.4) ✓ → 3/4.
        let a = auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert!((a - 0.75).abs() < 1e-15, "auroc = {a}");
    }

    #[test]
    fn auroc_extremes_and_ties() {
        let perfect = auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!(perfect, 1.0);
        let reversed = auroc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(reversed, 0.0);
        let constant = auroc(&[0.5; 6], &[0, 1, 0, 1, 0, 1]).unwrap();
        assert!((constant - 0.5).abs() < 1e-15, "all-tied scores give 1/2");
        // Partial tie: 0.5 beats 0.1, ties 0.5 → (1 + 0.5)/2.
        let partial = auroc(&[0.1, 0.5, 0.5], &[0, 0, 1]).unwrap();
        assert!((partial - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auroc_rejects_degenerate_inputs() {
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err(), "single class");
        assert!(auroc(&[], &[]).is_err(), "empty");
        assert!(auroc(&[0.1], &[0, 1]).is_err(), "length mismatch");
        assert!(auroc(&[f64::NAN, 0.2], &[0, 1]).is_err(), "non-finite score");
        assert!(weighted_auroc(&[0.1, 0.2], &[0, 1], &[1.0, -1.0]).is_err());
        assert!(weighted_auroc(&[0.1, 0.2], &[0, 1], &[1.0, 0.0]).is_err(), "zero class weight");
    }

    #[test]
    fn weighted_auroc_equals_replication() {
        // Weight 2 on an example must equal listing it twice.
        let scores = [0.2, 0.6, 0.4, 0.8];
        let labels = [0u8, 1, 0, 1];
        let weights = [1.0, 2.0, 1.0, 1.0];
        let a = weighted_auroc(&scores, &labels, &weights).unwrap();
        let b = auroc(&[0.2, 0.6, 0.6, 0.4, 0.8], &[0, 1, 1, 0, 1]).unwrap();
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        // Unit weights reduce to the plain statistic.
        let u = weighted_auroc(&scores, &labels, &[1.0; 4]).unwrap();
        let p = auroc(&scores, &labels).unwrap();
        assert_eq!(u, p);
    }

    #[test]
    fn accuracy_thresholds_at_one_half_inclusive() {
        let acc = accuracy(&[0.5, 0.49, 0.51, 0.2], &[1, 0, 1, 1]).unwrap();
        // Predictions: 1, 0, 1, 0 → correct: 1, 1, 1, 0.
        assert!((acc - 0.75).abs() < 1e-15);
        let w = weighted_accuracy(&[0.9, 0.1], &[1, 1], &[3.0, 1.0]).unwrap();
        assert!((w - 0.75).abs() < 1e-15);
    }

    #[test]
    fn proper_scores_match_hand_values() {
        // probs [0.9, 0.8] on labels [1, 0]: errors 0.1 and 0.8, so
        // brier = (0.01 + 0.64)/2; nll = −(ln 0.9 + ln 0.2)/2.
        let (nll, brier) = proper_scores(&[0.9, 0.8], &[1, 0]).unwrap();
        let want_nll = -(0.9f64.ln() + 0.2f64.ln()) / 2.0;
        assert!((nll - want_nll).abs() < 1e-15, "{nll} vs {want_nll}");
        assert!((brier - (0.01 + 0.64) / 2.0).abs() < 1e-15);
        // The frozen two-point Brier example.
        let (_, b) = proper_scores(&[0.9, 0.2], &[1, 0]).unwrap();
        assert!((b - 0.025).abs() < 1e-15, "brier = {b}");
        // Exact-confidence probabilities stay finite via clamping.
        let (nll, _) = proper_scores(&[1.0, 0.0], &[0, 1]).unwrap();
        assert!(nll.is_finite() && nll > 20.0);
    }

    #[test]
    fn evaluate_grid_sorts_rows_and_summarizes() {
        let spec = DistributionSpec::default();
        let params = ModelParams::linear(spec.dim());
        let rhos = [0.9, 0.1, 0.5];
        let report =
            evaluate_grid(&params, "L2-S", &spec, &rhos, 500, 42).unwrap();
        assert_eq!(report.rows.len(), 3);
        let sorted: Vec<f64> = report.rows.iter().map(|r| r.rho_test).collect();
        assert_eq!(sorted, vec![0.1, 0.5, 0.9], "rows sorted by rho_test");
        for r in &report.rows {
            assert_eq!(r.method, "L2-S");
            assert_eq!(r.seed, 42, "rows carry the replication seed");
            assert_eq!(r.rho_train, 0.9);
            assert_eq!(r.n_test, 500);
            // Zero-initialized linear model scores everything 1/2.
            assert!((r.auroc - 0.5).abs() < 1e-12);
        }
        assert!((report.summary.invariance_gap_auroc).abs() < 1e-12);
        assert!((report.summary.worst_auroc - 0.5).abs() < 1e-12);
        assert!((report.summary.at_train_auroc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_grid_is_deterministic_and_paired() {
        let spec = DistributionSpec::default();
        let mut params = ModelParams::linear(spec.dim());
        // A model that reads the first core coordinate.
        params.layer_weights[0].set(0, 0, 1.0);
        let a = evaluate_grid(&params, "m", &spec, &[0.1, 0.9], 400, 7).unwrap();
        let b = evaluate_grid(&params, "m", &spec, &[0.1, 0.9], 400, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        // The grid is seeded per position, not per model: a different
        // model under the same seed faces the same test draws, so a
        // constant model still scores exactly 1/2 on both rows (the
        // tie-handling value), while reordering the input grid leaves
        // per-rho results unchanged.
        let c = evaluate_grid(&params, "m", &spec, &[0.1, 0.9], 400, 8).unwrap();
        assert_ne!(a.rows[0].auroc, c.rows[0].auroc, "different seed, different draws");
    }

    #[test]
    fn at_train_auroc_picks_closest_grid_point() {
        let rows = vec![
            EvalRow {
                method: "m".into(),
                seed: 0,
                rho_train: 0.9,
                rho_test: 0.1,
                auroc: 0.6,
                logloss: 0.5,
                brier: 0.2,
                n_test: 10,
            },
            EvalRow {
                method: "m".into(),
                seed: 0,
                rho_train: 0.9,
                rho_test: 0.8,
                auroc: 0.9,
                logloss: 0.3,
                brier: 0.1,
                n_test: 10,
            },
        ];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.at_train_auroc, 0.9, "rho_test=0.8 is closest to rho_train=0.9");
        assert!((s.invariance_gap_auroc - 0.3).abs() < 1e-15);
        assert_eq!(s.worst_auroc, 0.6);
    }

    #[test]
    fn csv_has_exactly_the_pinned_header() {
        let rows = vec![EvalRow {
            method: "wMMD-T".into(),
            seed: 3,
            rho_train: 0.9,
            rho_test: 0.1,
            auroc: 0.875,
            logloss: 0.4,
            brier: 0.12,
            n_test: 10000,
        }];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,seed,rho_train,rho_test,auroc,logloss,brier,n_test"
        );
        assert_eq!(lines.next().unwrap(), "wMMD-T,3,0.9,0.1,0.875,0.4,0.12,10000");
    }

    proptest! {
        /// AUROC is invariant under strictly increasing score
        /// transforms.
        #[test]
        fn auroc_invariant_under_increasing_transforms(
            scores in proptest::collection::vec(-5.0f64..5.0, 4..40),
            labels in proptest::collection::vec(0u8..2, 4..40),
        ) {
            let n = scores.len().min(labels.len());
            let scores = &scores[..n];
            let labels = &labels[..n];
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let base = auroc(scores, labels).unwrap();
            let shifted: Vec<f64> =
                scores.iter().map(|s| 3.0 * s + 1.0).collect();
            let sig: Vec<f64> =
                scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            prop_assert!((auroc(&shifted, labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((auroc(&sig, labels).unwrap() - base).abs() < 1e-12);
        }

        /// Swapping every label and negating scores leaves AUROC fixed.
        #[test]
        fn auroc_symmetry_under_joint_flip(
            scores in proptest::collection::vec(-5.0f64..5.0, 4..30),
            labels in proptest::collection::vec(0u8..2, 4..30),
        ) {
            let n = scores.len().min(labels.len());
            let scores = &scores[..n];
            let labels = &labels[..n];
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let base = auroc(scores, labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let flip: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
            prop_assert!((auroc(&neg, &flip).unwrap() - base).abs() < 1e-12);
        }
    }
}
