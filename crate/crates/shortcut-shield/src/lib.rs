//! Shortcut-robust classification with auxiliary labels.
//!
//! Classifiers trained on data where the label `Y` and a nuisance factor
//! `V` are correlated tend to lean on the features `V` drives — the
//! shortcut — and fall apart when that correlation shifts at test time.
//! When the nuisance label is recorded at training time, the fix
//! implemented here is to train toward the member of the shift family
//! with `Y ⊥ V`: importance-weight the per-example losses toward that
//! shift-free distribution and penalize the maximum mean discrepancy
//! (MMD, Gretton et al., JMLR 2012) between the two `V`-groups of the
//! learned representation, so the model cannot encode `V` in the first
//! place.
//!
//! The crate is organized bottom-up:
//!
//! - [`simulator`] — synthetic anti-causal generator: `(Y, V)` drawn
//!   with tunable correlation `ρ`, Gaussian feature blocks driven by
//!   each, label noise, optional rotation; shift grids for evaluation.
//! - [`weights`] — plug-in importance weights `u(y, v)` toward the
//!   shift-free member, in raw, sum-normalized, and per-group forms.
//! - [`kernel`] — RBF-kernel MMD² estimators (weighted, unweighted, and
//!   class-conditional) with a fused value+gradient path.
//! - [`model`] — linear and one-hidden-layer architectures, the penalized
//!   objective, and its exact gradient.
//! - [`trainer`] — the method menu (`wMMD-T` … `wL2-S`), hyperparameter
//!   grids, stratified minibatching, and a deterministic Adam loop.
//! - [`selection`] — K-fold splits plus the two-step selection rule:
//!   keep candidates whose validation discrepancy is statistically
//!   indistinguishable from zero, then maximize validation performance
//!   among the survivors.
//! - [`evaluation`] — weighted/unweighted AUROC, accuracy, proper
//!   scores, and the across-shift evaluation grid with its summary.
//! - [`theory`] — empirical checks of the guarantees that motivate the
//!   method: the projection bound on the model's shortcut component,
//!   Rademacher-complexity comparisons with closed-form per-draw
//!   suprema, the structural-gap bound, and a per-class risk diagnostic.
//! - [`experiment`] — the resumable staged pipeline behind the CLI:
//!   simulate → sweep → select → evaluate, plus the theory-check runner.
//! - [`special`], [`seeding`], [`mat`], [`error`] — small support
//!   modules (Student-t tail probabilities, deterministic seed
//!   derivation, a dense row-major matrix, the error taxonomy).
//!
//! # Determinism
//!
//! Every random draw in the crate descends from an explicit `u64` seed
//! via labeled FNV-1a derivation ([`seeding::derive_seed`]), so any
//! result — a sampled dataset, a trained model, a full experiment
//! directory — is bit-reproducible from its configuration alone,
//! regardless of thread count.
//!
//! # Quick start
//!
//! ```
//! use shortcut_shield::evaluation::evaluate_grid;
//! use shortcut_shield::simulator::{sample_dataset, DistributionSpec};
//! use shortcut_shield::trainer::{train, MethodSpec, TrainConfig};
//! use shortcut_shield::weights::{compute_weights, estimate_stats};
//!
//! # fn main() -> shortcut_shield::Result<()> {
//! // Train data with a strong Y–V correlation (ρ = 0.9).
//! let spec = DistributionSpec::default();
//! let data = sample_dataset(&spec, 500, 7)?;
//! let weights = compute_weights(&estimate_stats(&data)?, &data)?;
//!
//! // Importance-weighted, MMD-penalized logistic regression.
//! let method = MethodSpec::from_label("wMMD-T")?;
//! let mut cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
//! cfg.objective.alpha = 1e5;
//! let model = train(&data, &weights, &method, &cfg)?;
//!
//! // How does it hold up when the correlation flips?
//! let report = evaluate_grid(&model.params, "wMMD-T", &spec, &[0.1, 0.5, 0.9], 2000, 7)?;
//! assert_eq!(report.rows.len(), 3);
//! # Ok(())
//! # }
//! ```
//!
//! The `examples/` directory walks through every major capability; the
//! `shortcut-shield` binary drives the same pipeline from JSON
//! configuration files.

pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod kernel;
pub mod mat;
pub mod model;
pub mod seeding;
pub mod selection;
pub mod simulator;
pub mod special;
pub mod theory;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
