//! Experiment orchestration: configuration, staged pipeline, resumable
//! artifact store, and the theory-check runner.
//!
//! A run is a grid over `(seed, method)` units. Each unit samples a
//! training set, sweeps the method's hyperparameter grid with K-fold
//! cross-validation, selects a point with the method's selection style,
//! retrains on the full sample, and evaluates across a test-shift grid.
//!
//! # Artifacts
//!
//! Everything lands under the configured output directory:
//!
//! | path                             | content                                   |
//! |----------------------------------|-------------------------------------------|
//! | `manifest.json`                  | config hash, library version, completed units |
//! | `data/train_seed<seed>.csv`      | training sample (simulate stage)          |
//! | `data/weights_seed<seed>.csv`    | importance weights for that sample        |
//! | `sweeps/sweep_seed<s>_<name>.json` | per-fold metrics for every grid point   |
//! | `selection.json`                 | chosen point + survivors per unit         |
//! | `models/model_seed<s>_<label>.json` | final retrained model with its trace   |
//! | `results.csv`                    | one evaluation row per `(unit, ρ_test)`   |
//!
//! # Determinism and resume
//!
//! All randomness is derived from the unit's seed, so the same
//! configuration produces byte-identical artifacts, regardless of worker
//! count. The manifest records completed units; a rerun (after a crash
//! or with more seeds appended) skips finished sweeps and evaluations
//! and never duplicates rows. Pointing a changed configuration at an
//! existing output directory is a configuration error.
//!
//! # Concurrency
//!
//! Seeds are processed in chunks of the worker-pool size; workers only
//! compute, and all file writes go through a single collector between
//! chunks, so partial output is flushed at unit granularity as the run
//! progresses.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    accuracy, auroc, evaluate_grid, weighted_accuracy, weighted_auroc, write_rows_csv, EvalRow,
    DEFAULT_N_TEST, EVAL_CSV_HEADER,
};
use crate::kernel::{conditional_mmd2, uniform_group_weights, weighted_mmd2, KernelConfig};
use crate::model::{forward, Arch, ObjectiveConfig};
use crate::seeding::{derive_seed, fnv1a64};
use crate::selection::{
    kfold_split, select_for_method, Candidate, FoldMetrics, SelectionResult, Step2Metric,
};
use crate::simulator::{sample_dataset, true_delta, Dataset, DistributionSpec};
use crate::theory::{
    analytic_bounds, center_columns, check_projection_bound, estimate_delta, feature_norm_bounds,
    improvement_threshold, lemma_componentwise_check, rademacher_estimate, structural_gap_check,
    DeltaSource, LemmaReport, ProjectionReport, RademacherReport, StructuralGapReport,
    TheoryConfig,
};
use crate::trainer::{hyper_grid, hyper_label, train, FittedModel, MethodSpec, TrainConfig};
use crate::weights::{compute_weights, estimate_stats, WeightSet};

/// Folds used by every cross-validated sweep.
pub const DEFAULT_FOLDS: usize = 5;

/// Grid-point objective used by the theory runner's trained models:
/// strong enough to suppress the shortcut's O(1) group discrepancy,
/// small enough that the minibatch V-statistic bias (which scales with
/// α/γ times the within-group representation variance) does not crush
/// the representation scale to the optimizer's noise floor.
#[must_use]
pub fn reference_objective() -> ObjectiveConfig {
    ObjectiveConfig {
        alpha: 1e3,
        lambda_l2: 0.0,
        kernel: KernelConfig { gamma: 100.0 },
        ..ObjectiveConfig::default()
    }
}

fn default_n_test() -> usize {
    DEFAULT_N_TEST
}

/// Full description of an experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Training distribution (its `rho` is the confounding level).
    #[serde(default)]
    pub spec: DistributionSpec,
    /// Training sample size per seed.
    pub n_train: usize,
    /// Test sample size per evaluation row.
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Methods to run, as menu labels (`"wMMD-T"`, `"L2-S"`, …).
    pub methods: Vec<MethodSpec>,
    /// Test-distribution `ρ` values for the evaluation grid.
    pub rhos_test: Vec<f64>,
    /// Replication seeds; each is an independent unit.
    pub seeds: Vec<u64>,
    /// Output directory for all artifacts.
    pub out_dir: PathBuf,
    /// Optimizer settings shared by every training run; the objective's
    /// coefficients are overridden per grid point.
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Validate ranges and cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be positive".into()));
        }
        if self.n_test == 0 {
            return Err(Error::Config("n_test must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must name at least one method".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(m.label()) {
                return Err(Error::Config(format!("duplicate method {}", m.label())));
            }
        }
        if self.rhos_test.is_empty() {
            return Err(Error::Config("rhos_test must name at least one test shift".into()));
        }
        for &rho in &self.rhos_test {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!("rho_test must lie in (0,1), got {rho}")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must name at least one replication".into()));
        }
        let mut seen = BTreeSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return Err(Error::Config(format!("duplicate seed {s}")));
            }
        }
        let any_mmd = self.methods.iter().any(|m| m.name.has_mmd());
        self.train.validate(any_mmd)?;
        Ok(())
    }

    /// Hash of the scientific content of this configuration (the output
    /// directory is excluded so a run can be relocated). Stored in the
    /// manifest and checked on resume.
    pub fn content_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c)?;
        Ok(format!("{:016x}", fnv1a64(json.as_bytes())))
    }
}

/// Which part of the pipeline to run. Later stages recompute cheap
/// predecessors deterministically and reuse expensive ones from disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Write training samples and their importance weights.
    Simulate,
    /// Run the cross-validated hyperparameter sweeps.
    Sweep,
    /// Select a grid point per `(seed, method)` from the sweeps.
    Select,
    /// Retrain the chosen points and evaluate across the shift grid.
    Evaluate,
    /// Everything, including the simulate-stage data files.
    All,
}

impl Stage {
    fn wants_data_files(self) -> bool {
        matches!(self, Stage::Simulate | Stage::All)
    }
    fn wants_sweep(self) -> bool {
        !matches!(self, Stage::Simulate)
    }
    fn wants_select(self) -> bool {
        matches!(self, Stage::Select | Stage::Evaluate | Stage::All)
    }
    fn wants_eval(self) -> bool {
        matches!(self, Stage::Evaluate | Stage::All)
    }
}

/// Completed-unit ledger stored as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// [`ExperimentConfig::content_hash`] of the run that owns this
    /// directory.
    pub config_hash: String,
    /// Library version that started the run.
    pub version: String,
    /// Finished unit keys (`sweep:<seed>:<name>`, `eval:<seed>:<label>`).
    pub completed: BTreeSet<String>,
}

/// Fold metrics for one grid point, in both validation flavors.
///
/// Both are recorded so every selection style can replay the same sweep:
/// `weighted` importance-weights the validation metrics toward the
/// shift-free distribution, `unweighted` leaves them as observed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    /// Human-readable grid-point label.
    pub label: String,
    /// The grid point itself.
    pub hyper: ObjectiveConfig,
    /// Importance-weighted validation metrics.
    pub weighted: FoldMetrics,
    /// Plain validation metrics.
    pub unweighted: FoldMetrics,
}

/// One sweep artifact: every grid point's fold metrics for a
/// `(seed, method family)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Replication seed.
    pub seed: u64,
    /// Method family name (`"wMMD"`, `"L2"`, …); families sharing a name
    /// share training, so the sweep is computed once per family.
    pub name: String,
    /// Grid points in grid order.
    pub entries: Vec<SweepEntry>,
}

/// One `(seed, method)` row of `selection.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// Replication seed.
    pub seed: u64,
    /// Method label.
    pub method: String,
    /// Full selection outcome (chosen point, survivors, p-values).
    pub result: SelectionResult,
}

/// Counters describing what a [`run_experiment`] call did.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunSummary {
    /// Sweeps computed this run.
    pub sweeps_computed: usize,
    /// Sweeps reused from a previous run.
    pub sweeps_reused: usize,
    /// Final-model evaluations computed this run.
    pub evals_computed: usize,
    /// Evaluations reused from a previous run.
    pub evals_reused: usize,
    /// Rows in `results.csv` after the run (0 for stages before evaluate).
    pub rows_written: usize,
}

fn sweep_key(seed: u64, name: &str) -> String {
    format!("sweep:{seed}:{name}")
}

fn eval_key(seed: u64, label: &str) -> String {
    format!("eval:{seed}:{label}")
}

fn sweep_path(out: &Path, seed: u64, name: &str) -> PathBuf {
    out.join("sweeps").join(format!("sweep_seed{seed}_{name}.json"))
}

fn model_path(out: &Path, seed: u64, label: &str) -> PathBuf {
    out.join("models").join(format!("model_seed{seed}_{label}.json"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Read a `results.csv` produced by this module, verifying the header.
pub fn read_rows_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if !header.iter().eq(EVAL_CSV_HEADER) {
        return Err(Error::Contract(format!(
            "unexpected results header {:?} in {}",
            header,
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<EvalRow>() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Cross-validated sweep over a method family's hyperparameter grid.
///
/// Folds, per-fold training seeds, and weight estimation all derive from
/// `rep_seed`, so the sweep is a pure function of `(data, family, seed)`.
/// Fold statistics are estimated on the fold's training split and applied
/// to both splits; validation metrics are recorded in both flavors.
pub fn run_fold_sweep(
    ds: &Dataset,
    method: &MethodSpec,
    train_cfg: &TrainConfig,
    rep_seed: u64,
) -> Result<Vec<SweepEntry>> {
    let folds = kfold_split(ds.n(), DEFAULT_FOLDS, derive_seed(rep_seed, "folds", 0))?;
    let grid = hyper_grid(method);
    let k = folds.len();
    let mut entries = Vec::with_capacity(grid.len());
    for (hi, hyper) in grid.iter().enumerate() {
        let mut weighted = FoldMetrics {
            val_mmd2: Vec::with_capacity(k),
            val_auroc: Vec::with_capacity(k),
            val_acc: Vec::with_capacity(k),
        };
        let mut unweighted = weighted.clone();
        for (fi, (tr_idx, va_idx)) in folds.iter().enumerate() {
            let fold_train = ds.subset(tr_idx);
            let fold_val = ds.subset(va_idx);
            let stats = estimate_stats(&fold_train)?;
            let w_tr = compute_weights(&stats, &fold_train)?;
            let w_va = compute_weights(&stats, &fold_val)?;
            let cfg = TrainConfig {
                objective: hyper.clone(),
                seed: derive_seed(rep_seed, "cv", (hi * k + fi) as u64),
                ..train_cfg.clone()
            };
            let fitted = train(&fold_train, &w_tr, method, &cfg)?;
            let fwd = forward(&fitted.params, &fold_val.x)?;
            let (mmd_w, mmd_u) = if fitted.config.objective.mmd_variant
                == crate::model::MmdVariant::Conditional
            {
                let c = conditional_mmd2(&fwd.phi, &fold_val.v, &fold_val.y, hyper.kernel)?;
                (c, c)
            } else {
                // Marginal discrepancy of the validation representation;
                // for penalty-free families this is a pure diagnostic.
                let uni = uniform_group_weights(&fold_val.v);
                let u = weighted_mmd2(&fwd.phi, &fold_val.v, &uni, hyper.kernel)?;
                let w = weighted_mmd2(&fwd.phi, &fold_val.v, &w_va.u_bar_by_group, hyper.kernel)?;
                (w, u)
            };
            weighted.val_mmd2.push(mmd_w);
            unweighted.val_mmd2.push(mmd_u);
            weighted.val_auroc.push(weighted_auroc(&fwd.prob, &fold_val.y, &w_va.u)?);
            unweighted.val_auroc.push(auroc(&fwd.prob, &fold_val.y)?);
            weighted.val_acc.push(weighted_accuracy(&fwd.prob, &fold_val.y, &w_va.u)?);
            unweighted.val_acc.push(accuracy(&fwd.prob, &fold_val.y)?);
        }
        entries.push(SweepEntry {
            label: hyper_label(hyper),
            hyper: hyper.clone(),
            weighted,
            unweighted,
        });
    }
    Ok(entries)
}

/// Everything one worker produces for a seed; applied by the collector.
struct SeedBundle {
    seed: u64,
    data: Option<(Dataset, WeightSet)>,
    new_sweeps: Vec<SweepRecord>,
    selections: Vec<(usize, SelectionRecord)>,
    new_evals: Vec<(usize, Vec<EvalRow>, Box<FittedModel>)>,
    sweeps_reused: usize,
    evals_reused: usize,
}

fn process_seed(
    config: &ExperimentConfig,
    stage: Stage,
    seed: u64,
    done: &BTreeSet<String>,
) -> Result<SeedBundle> {
    let mut bundle = SeedBundle {
        seed,
        data: None,
        new_sweeps: Vec::new(),
        selections: Vec::new(),
        new_evals: Vec::new(),
        sweeps_reused: 0,
        evals_reused: 0,
    };
    let ds = sample_dataset(&config.spec, config.n_train, derive_seed(seed, "train", 0))?;
    let stats = estimate_stats(&ds)?;
    let w_full = compute_weights(&stats, &ds)?;
    if stage.wants_data_files() {
        bundle.data = Some((ds.clone(), w_full.clone()));
    }
    if !stage.wants_sweep() {
        return Ok(bundle);
    }

    let mut entries_by_name: HashMap<&'static str, Vec<SweepEntry>> = HashMap::new();
    for method in &config.methods {
        let name = method.name.as_str();
        if entries_by_name.contains_key(name) {
            continue;
        }
        let reused = if done.contains(&sweep_key(seed, name)) {
            read_json_file::<SweepRecord>(&sweep_path(&config.out_dir, seed, name)).ok()
        } else {
            None
        };
        let entries = match reused {
            Some(rec) if rec.entries.len() == hyper_grid(method).len() => {
                bundle.sweeps_reused += 1;
                rec.entries
            }
            _ => {
                let entries = run_fold_sweep(&ds, method, &config.train, seed)?;
                bundle.new_sweeps.push(SweepRecord {
                    seed,
                    name: name.to_string(),
                    entries: entries.clone(),
                });
                entries
            }
        };
        entries_by_name.insert(name, entries);
    }
    if !stage.wants_select() {
        return Ok(bundle);
    }

    for (mi, method) in config.methods.iter().enumerate() {
        let entries = &entries_by_name[method.name.as_str()];
        let candidates: Vec<Candidate> = entries
            .iter()
            .map(|e| Candidate {
                label: e.label.clone(),
                hyper: e.hyper.clone(),
                folds: if method.weighted_val_metrics() {
                    e.weighted.clone()
                } else {
                    e.unweighted.clone()
                },
            })
            .collect();
        let result = select_for_method(&candidates, method, Step2Metric::Auroc)?;
        let chosen_hyper = candidates[result.chosen].hyper.clone();
        let label = method.label();
        bundle
            .selections
            .push((mi, SelectionRecord { seed, method: label.clone(), result }));
        if !stage.wants_eval() {
            continue;
        }
        if done.contains(&eval_key(seed, &label)) {
            bundle.evals_reused += 1;
            continue;
        }
        let cfg = TrainConfig {
            objective: chosen_hyper,
            seed: derive_seed(seed, "final", 0),
            ..config.train.clone()
        };
        let fitted = train(&ds, &w_full, method, &cfg)?;
        let report =
            evaluate_grid(&fitted.params, &label, &config.spec, &config.rhos_test, config.n_test, seed)?;
        bundle.new_evals.push((mi, report.rows, Box::new(fitted)));
    }
    Ok(bundle)
}

/// Run one pipeline stage of an experiment with a pool of `jobs` workers.
///
/// Returns counters describing what was computed versus reused. See the
/// module docs for the artifact layout, resume semantics, and the
/// determinism guarantee.
pub fn run_experiment(config: &ExperimentConfig, stage: Stage, jobs: usize) -> Result<RunSummary> {
    config.validate()?;
    let jobs = jobs.max(1);
    let out = config.out_dir.clone();
    fs::create_dir_all(&out)?;
    let hash = config.content_hash()?;

    let manifest_path = out.join("manifest.json");
    let mut manifest = if manifest_path.exists() {
        let m: Manifest = read_json_file(&manifest_path)?;
        if m.config_hash != hash {
            return Err(Error::Config(format!(
                "{} belongs to a different configuration (hash {} != {}); \
                 use a fresh output directory",
                manifest_path.display(),
                m.config_hash,
                hash
            )));
        }
        m
    } else {
        Manifest {
            config_hash: hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            completed: BTreeSet::new(),
        }
    };

    let labels: Vec<String> = config.methods.iter().map(MethodSpec::label).collect();
    let seed_index: HashMap<u64, usize> =
        config.seeds.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    // Reload evaluation rows for units the manifest marks complete; a
    // unit whose rows went missing is healed by recomputation.
    let results_path = out.join("results.csv");
    let mut rows_by_unit: BTreeMap<(usize, usize), Vec<EvalRow>> = BTreeMap::new();
    if stage.wants_eval() {
        if results_path.exists() {
            let mut grouped: BTreeMap<(usize, usize), Vec<EvalRow>> = BTreeMap::new();
            for row in read_rows_csv(&results_path)? {
                let Some(&si) = seed_index.get(&row.seed) else { continue };
                let Some(mi) = labels.iter().position(|l| *l == row.method) else { continue };
                grouped.entry((si, mi)).or_default().push(row);
            }
            for ((si, mi), unit_rows) in grouped {
                let key = eval_key(config.seeds[si], &labels[mi]);
                if manifest.completed.contains(&key) && unit_rows.len() == config.rhos_test.len() {
                    rows_by_unit.insert((si, mi), unit_rows);
                }
            }
        }
        let keys: Vec<String> = manifest
            .completed
            .iter()
            .filter(|k| k.starts_with("eval:"))
            .cloned()
            .collect();
        for key in keys {
            let present = config.seeds.iter().enumerate().any(|(si, &s)| {
                labels
                    .iter()
                    .enumerate()
                    .any(|(mi, l)| eval_key(s, l) == key && rows_by_unit.contains_key(&(si, mi)))
            });
            if !present {
                manifest.completed.remove(&key);
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(format!("worker pool: {e}"))))?;

    let mut summary = RunSummary::default();
    let mut selections: BTreeMap<(usize, usize), SelectionRecord> = BTreeMap::new();
    let done = manifest.completed.clone();

    for chunk in config.seeds.chunks(jobs) {
        let bundles: Result<Vec<SeedBundle>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&seed| process_seed(config, stage, seed, &done))
                .collect()
        });
        for bundle in bundles? {
            let si = seed_index[&bundle.seed];
            if let Some((ds, weights)) = &bundle.data {
                let dir = out.join("data");
                fs::create_dir_all(&dir)?;
                let mut buf = Vec::new();
                ds.write_csv(&mut buf)?;
                write_atomic(&dir.join(format!("train_seed{}.csv", bundle.seed)), &buf)?;
                let mut buf = Vec::new();
                weights.write_csv(&mut buf)?;
                write_atomic(&dir.join(format!("weights_seed{}.csv", bundle.seed)), &buf)?;
            }
            if !bundle.new_sweeps.is_empty() {
                fs::create_dir_all(out.join("sweeps"))?;
            }
            for rec in &bundle.new_sweeps {
                write_json_file(&sweep_path(&out, rec.seed, &rec.name), rec)?;
                manifest.completed.insert(sweep_key(rec.seed, &rec.name));
                summary.sweeps_computed += 1;
            }
            for (mi, sel) in bundle.selections {
                selections.insert((si, mi), sel);
            }
            if !bundle.new_evals.is_empty() {
                fs::create_dir_all(out.join("models"))?;
            }
            for (mi, rows, model) in bundle.new_evals {
                write_json_file(&model_path(&out, bundle.seed, &labels[mi]), &model)?;
                rows_by_unit.insert((si, mi), rows);
                manifest.completed.insert(eval_key(bundle.seed, &labels[mi]));
                summary.evals_computed += 1;
            }
            summary.sweeps_reused += bundle.sweeps_reused;
            summary.evals_reused += bundle.evals_reused;
        }

        if stage.wants_select() {
            let list: Vec<&SelectionRecord> = selections.values().collect();
            write_json_file(&out.join("selection.json"), &list)?;
        }
        if stage.wants_eval() {
            let all_rows: Vec<EvalRow> =
                rows_by_unit.values().flat_map(|r| r.iter().cloned()).collect();
            let mut buf = Vec::new();
            write_rows_csv(&all_rows, &mut buf)?;
            write_atomic(&results_path, &buf)?;
            summary.rows_written = all_rows.len();
        }
        write_json_file(&manifest_path, &manifest)?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Theory runner
// ---------------------------------------------------------------------------

/// Check names accepted by [`run_theory`], in execution order.
pub const THEORY_CHECKS: [&str; 5] =
    ["projection", "rademacher", "improvement", "structural", "lemma"];

fn default_theory_n() -> usize {
    2000
}
fn default_a() -> f64 {
    1.0
}
fn default_draws() -> usize {
    200
}
fn default_delta_source() -> DeltaSource {
    DeltaSource::Analytic
}
fn default_theory_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_theory_rhos() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}
fn default_checks() -> Vec<String> {
    THEORY_CHECKS.iter().map(|s| (*s).to_string()).collect()
}

/// Configuration for the [`run_theory`] check suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryRunConfig {
    /// Source distribution; its `rho` is the confounding the trained
    /// reference models face, and shift-free samples use `ρ = 0.5`.
    #[serde(default)]
    pub spec: DistributionSpec,
    /// Sample size for every dataset the checks draw.
    #[serde(default = "default_theory_n")]
    pub n: usize,
    /// Weight-norm budget for the complexity comparison.
    #[serde(rename = "A", default = "default_a")]
    pub a: f64,
    /// Discrepancy budget; `None` means half the improvement threshold
    /// computed from the data itself.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Monte Carlo draws for the Rademacher estimates.
    #[serde(default = "default_draws")]
    pub n_rademacher_draws: usize,
    /// Where the shortcut direction comes from.
    #[serde(default = "default_delta_source")]
    pub delta_source: DeltaSource,
    /// Replication seeds.
    #[serde(default = "default_theory_seeds")]
    pub seeds: Vec<u64>,
    /// Shift grid for the structural-gap check.
    #[serde(default = "default_theory_rhos")]
    pub rhos: Vec<f64>,
    /// Output directory; one JSON report per check.
    pub out_dir: PathBuf,
    /// Optimizer settings for the trained reference models.
    #[serde(default)]
    pub train: TrainConfig,
    /// Which checks to run, in [`THEORY_CHECKS`] order.
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
}

impl TheoryRunConfig {
    /// Validate ranges, check names, and architecture constraints.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n < DEFAULT_FOLDS {
            return Err(Error::Config(format!("n must be at least {DEFAULT_FOLDS}, got {}", self.n)));
        }
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("A must be positive, got {}", self.a)));
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0) {
                return Err(Error::Config(format!("tau must be nonnegative, got {tau}")));
            }
        }
        if self.n_rademacher_draws == 0 {
            return Err(Error::Config("n_rademacher_draws must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must name at least one replication".into()));
        }
        if self.rhos.is_empty() {
            return Err(Error::Config("rhos must name at least one shift".into()));
        }
        if self.checks.is_empty() {
            return Err(Error::Config("checks must name at least one check".into()));
        }
        for c in &self.checks {
            if !THEORY_CHECKS.contains(&c.as_str()) {
                return Err(Error::Config(format!(
                    "unknown check {c:?}; valid checks: {}",
                    THEORY_CHECKS.join(", ")
                )));
            }
        }
        if self.checks.iter().any(|c| c == "projection") && self.train.arch != Arch::Linear {
            return Err(Error::Config(
                "the projection check requires a linear architecture".into(),
            ));
        }
        self.train.validate(true)?;
        Ok(())
    }
}

/// Per-seed slot in a check report file.
#[derive(Debug, Clone, Serialize)]
pub struct SeedReport<T: Serialize> {
    /// Replication seed.
    pub seed: u64,
    /// The check's report, when it ran to completion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<T>,
    /// The strict-assertion failure message, when it did not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Envelope written as `<check>.json`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckFile<T: Serialize> {
    /// Check name.
    pub check: String,
    /// Whether failures of this check fail the whole run.
    pub strict: bool,
    /// All seeds passed (for diagnostics: all satisfied).
    pub passed: bool,
    /// One slot per seed (two per seed for the per-class check).
    pub reports: Vec<T>,
}

/// One τ grid point of the improvement-threshold sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ImprovementRow {
    /// Discrepancy budget at this grid point.
    pub tau: f64,
    /// Unconstrained complexity bound.
    pub bound_l2: f64,
    /// Discrepancy-constrained complexity bound.
    pub bound_constrained: f64,
    /// Whether the constrained bound is strictly tighter here.
    pub constrained_tighter: bool,
    /// Whether `τ` lies below the improvement threshold.
    pub predicted_tighter: bool,
}

/// The improvement-threshold report file.
#[derive(Debug, Clone, Serialize)]
pub struct ImprovementFile {
    /// Check name (`"improvement"`).
    pub check: String,
    /// Always strict: the sweep is pure arithmetic.
    pub strict: bool,
    /// The tighter/looser flip happened exactly at the threshold.
    pub passed: bool,
    /// Norm budgets and threshold the sweep was built from.
    pub a: f64,
    /// Along-shortcut feature bound observed in the data.
    pub b_perp: f64,
    /// Orthogonal feature bound observed in the data.
    pub b_par: f64,
    /// Shortcut-direction norm.
    pub delta_norm: f64,
    /// The τ value where the bounds cross.
    pub improvement_threshold: f64,
    /// 50 τ grid points straddling the threshold.
    pub rows: Vec<ImprovementRow>,
}

/// Per-class lemma slot (two per seed).
#[derive(Debug, Clone, Serialize)]
pub struct LemmaSeedReport {
    /// Replication seed.
    pub seed: u64,
    /// Class slice checked.
    pub y: u8,
    /// The check's report, when it ran to completion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<LemmaReport>,
    /// The failure message, when it did not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// What [`run_theory`] did: which checks ran, and which strict
/// assertions failed. An empty `strict_failures` is the success
/// condition for the CLI's exit code.
#[derive(Debug, Clone, Default)]
pub struct TheoryOutcome {
    /// `(check, passed)` per executed check.
    pub checks: Vec<(String, bool)>,
    /// Human-readable strict failures, empty on success.
    pub strict_failures: Vec<String>,
}

/// Split a result into report-or-failure, letting only strict-check
/// violations through as recordable failures.
fn capture<T>(r: Result<T>) -> Result<std::result::Result<T, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(Error::CheckFailed(msg)) => Ok(Err(msg)),
        Err(e) => Err(e),
    }
}

/// Train the wMMD reference model on a confounded sample for `seed`.
fn confounded_model(
    config: &TheoryRunConfig,
    seed: u64,
    cache: &mut HashMap<u64, FittedModel>,
) -> Result<FittedModel> {
    if let Some(m) = cache.get(&seed) {
        return Ok(m.clone());
    }
    let ds = sample_dataset(&config.spec, config.n, derive_seed(seed, "train", 0))?;
    let stats = estimate_stats(&ds)?;
    let w = compute_weights(&stats, &ds)?;
    let method = MethodSpec::from_label("wMMD-T")?;
    let cfg = TrainConfig {
        objective: reference_objective(),
        seed: derive_seed(seed, "fit", 0),
        ..config.train.clone()
    };
    let fitted = train(&ds, &w, &method, &cfg)?;
    cache.insert(seed, fitted.clone());
    Ok(fitted)
}

/// Centered features, shortcut direction, and norm bounds for one seed.
fn rademacher_inputs(
    config: &TheoryRunConfig,
    seed: u64,
) -> Result<(crate::mat::Mat, Vec<f64>, crate::theory::NormBounds)> {
    let ds = sample_dataset(&config.spec, config.n, derive_seed(seed, "data", 0))?;
    let (xc, _) = center_columns(&ds.x);
    let delta = match config.delta_source {
        DeltaSource::Analytic => true_delta(&config.spec),
        DeltaSource::Empirical => {
            let centered = Dataset { x: xc.clone(), y: ds.y.clone(), v: ds.v.clone(), seed: ds.seed };
            estimate_delta(&centered)?
        }
    };
    let bounds = feature_norm_bounds(&xc, &delta)?;
    Ok((xc, delta, bounds))
}

/// Run the configured theory checks, writing one JSON report per check.
///
/// Strict checks (projection identity, Rademacher dominance and bounds,
/// the improvement-threshold sweep) contribute to
/// [`TheoryOutcome::strict_failures`]; diagnostic checks (structural
/// gap, per-class risk) report their satisfied flags but never fail the
/// run. Errors in setup (bad configuration, infeasible sampling)
/// propagate as ordinary errors.
pub fn run_theory(config: &TheoryRunConfig) -> Result<TheoryOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut outcome = TheoryOutcome::default();
    let mut cache: HashMap<u64, FittedModel> = HashMap::new();

    for check in &config.checks {
        match check.as_str() {
            "projection" => {
                let ideal = config.spec.at_rho(0.5)?;
                let mut reports: Vec<SeedReport<ProjectionReport>> = Vec::new();
                let mut passed = true;
                for &seed in &config.seeds {
                    let ds = sample_dataset(&ideal, config.n, derive_seed(seed, "ideal", 0))?;
                    let stats = estimate_stats(&ds)?;
                    let w = compute_weights(&stats, &ds)?;
                    let method = MethodSpec::from_label("wMMD-T")?;
                    let cfg = TrainConfig {
                        objective: reference_objective(),
                        seed: derive_seed(seed, "fit", 0),
                        ..config.train.clone()
                    };
                    let fitted = train(&ds, &w, &method, &cfg)?;
                    match capture(check_projection_bound(&fitted, &ds))? {
                        Ok(rep) => {
                            reports.push(SeedReport { seed, report: Some(rep), failure: None });
                        }
                        Err(msg) => {
                            passed = false;
                            outcome.strict_failures.push(format!("projection: seed {seed}: {msg}"));
                            reports.push(SeedReport { seed, report: None, failure: Some(msg) });
                        }
                    }
                }
                let file = CheckFile { check: "projection".into(), strict: true, passed, reports };
                write_json_file(&config.out_dir.join("projection.json"), &file)?;
                outcome.checks.push(("projection".into(), passed));
            }
            "rademacher" => {
                let mut reports: Vec<SeedReport<RademacherReport>> = Vec::new();
                let mut passed = true;
                for &seed in &config.seeds {
                    let (xc, delta, bounds) = rademacher_inputs(config, seed)?;
                    let dnorm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                    let threshold =
                        improvement_threshold(config.a, bounds.b_perp, bounds.b_par, dnorm);
                    let tau = config.tau.unwrap_or(0.5 * threshold);
                    let tcfg = TheoryConfig {
                        a: config.a,
                        tau,
                        b_perp: bounds.b_perp,
                        b_par: bounds.b_par,
                        n_rademacher_draws: config.n_rademacher_draws,
                        delta_source: config.delta_source,
                    };
                    let checked = capture(rademacher_estimate(&xc, &delta, &tcfg, seed))?
                        .and_then(|rep| {
                            if rep.r_l2mmd > rep.r_l2 {
                                return Err(format!(
                                    "constrained estimate {} exceeds unconstrained {}",
                                    rep.r_l2mmd, rep.r_l2
                                ));
                            }
                            if rep.r_l2 > rep.bound_l2 {
                                return Err(format!(
                                    "estimate {} exceeds analytic bound {}",
                                    rep.r_l2, rep.bound_l2
                                ));
                            }
                            if rep.r_l2mmd > rep.bound_l2mmd {
                                return Err(format!(
                                    "constrained estimate {} exceeds its bound {}",
                                    rep.r_l2mmd, rep.bound_l2mmd
                                ));
                            }
                            Ok(rep)
                        });
                    match checked {
                        Ok(rep) => {
                            reports.push(SeedReport { seed, report: Some(rep), failure: None });
                        }
                        Err(msg) => {
                            passed = false;
                            outcome.strict_failures.push(format!("rademacher: seed {seed}: {msg}"));
                            reports.push(SeedReport { seed, report: None, failure: Some(msg) });
                        }
                    }
                }
                let file = CheckFile { check: "rademacher".into(), strict: true, passed, reports };
                write_json_file(&config.out_dir.join("rademacher.json"), &file)?;
                outcome.checks.push(("rademacher".into(), passed));
            }
            "improvement" => {
                let (_, delta, bounds) = rademacher_inputs(config, config.seeds[0])?;
                let dnorm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                let threshold = improvement_threshold(config.a, bounds.b_perp, bounds.b_par, dnorm);
                let mut rows = Vec::with_capacity(50);
                let mut passed = true;
                for i in 1..=50u32 {
                    let tau = f64::from(2 * i - 1) * threshold / 50.0;
                    let tcfg = TheoryConfig {
                        a: config.a,
                        tau,
                        b_perp: bounds.b_perp,
                        b_par: bounds.b_par,
                        n_rademacher_draws: 1,
                        delta_source: config.delta_source,
                    };
                    let (bound_l2, bound_constrained) = analytic_bounds(&tcfg, dnorm, config.n);
                    let row = ImprovementRow {
                        tau,
                        bound_l2,
                        bound_constrained,
                        constrained_tighter: bound_constrained < bound_l2,
                        predicted_tighter: tau < threshold,
                    };
                    if row.constrained_tighter != row.predicted_tighter {
                        passed = false;
                        outcome.strict_failures.push(format!(
                            "improvement: tau {tau}: bounds crossed on the wrong side of {threshold}"
                        ));
                    }
                    rows.push(row);
                }
                let file = ImprovementFile {
                    check: "improvement".into(),
                    strict: true,
                    passed,
                    a: config.a,
                    b_perp: bounds.b_perp,
                    b_par: bounds.b_par,
                    delta_norm: dnorm,
                    improvement_threshold: threshold,
                    rows,
                };
                write_json_file(&config.out_dir.join("improvement.json"), &file)?;
                outcome.checks.push(("improvement".into(), passed));
            }
            "structural" => {
                let mut reports: Vec<SeedReport<StructuralGapReport>> = Vec::new();
                let mut passed = true;
                for &seed in &config.seeds {
                    let fitted = confounded_model(config, seed, &mut cache)?;
                    match capture(structural_gap_check(
                        &fitted,
                        &config.spec,
                        &config.rhos,
                        config.n,
                        seed,
                    ))? {
                        Ok(rep) => {
                            passed &= rep.satisfied;
                            reports.push(SeedReport { seed, report: Some(rep), failure: None });
                        }
                        Err(msg) => {
                            passed = false;
                            reports.push(SeedReport { seed, report: None, failure: Some(msg) });
                        }
                    }
                }
                let file = CheckFile { check: "structural".into(), strict: false, passed, reports };
                write_json_file(&config.out_dir.join("structural.json"), &file)?;
                outcome.checks.push(("structural".into(), passed));
            }
            "lemma" => {
                let ideal = config.spec.at_rho(0.5)?;
                let mut reports: Vec<LemmaSeedReport> = Vec::new();
                let mut passed = true;
                for &seed in &config.seeds {
                    let fitted = confounded_model(config, seed, &mut cache)?;
                    let ds = sample_dataset(&ideal, config.n, derive_seed(seed, "ideal", 0))?;
                    for y in 0..2u8 {
                        match capture(lemma_componentwise_check(&fitted, &ds, y))? {
                            Ok(rep) => {
                                passed &= rep.satisfied;
                                reports.push(LemmaSeedReport {
                                    seed,
                                    y,
                                    report: Some(rep),
                                    failure: None,
                                });
                            }
                            Err(msg) => {
                                passed = false;
                                reports.push(LemmaSeedReport {
                                    seed,
                                    y,
                                    report: None,
                                    failure: Some(msg),
                                });
                            }
                        }
                    }
                }
                let file = CheckFile { check: "lemma".into(), strict: false, passed, reports };
                write_json_file(&config.out_dir.join("lemma.json"), &file)?;
                outcome.checks.push(("lemma".into(), passed));
            }
            other => {
                return Err(Error::Config(format!("unknown check {other:?}")));
            }
        }
    }
    Ok(outcome)
}
