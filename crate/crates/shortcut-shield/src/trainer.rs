//! Minibatch training of every method variant in the menu.
//!
//! A method is a pair of a *training objective family* and a *model
//! selection style*, written `name-style`:
//!
//! | label    | loss weights | MMD term              | selection              |
//! |----------|--------------|-----------------------|------------------------|
//! | `wMMD-T` | importance   | weighted, marginal    | two-step               |
//! | `wMMD-S` | importance   | weighted, marginal    | standard (accuracy)    |
//! | `MMD-T`  | uniform      | unweighted, marginal  | two-step               |
//! | `MMD-S`  | uniform      | unweighted, marginal  | standard               |
//! | `MMD-uT` | uniform      | unweighted, marginal  | two-step, unweighted val metrics |
//! | `cMMD-T` | uniform      | per-class conditional | two-step (unweighted)  |
//! | `L2-S`   | uniform      | none                  | standard               |
//! | `wL2-S`  | importance   | none                  | standard               |
//!
//! Training is plain minibatch first-order descent with adaptive moments
//! (Adam: bias-corrected first/second moment estimates, ε = 1e−8), a
//! fixed epoch budget, and no early stopping. Batches are *stratified*:
//! examples are allocated to batches proportionally within each group
//! the objective slices by (`v`-groups for the marginal MMD, `(y, v)`
//! slices for the conditional one), so every step satisfies the
//! objective's composition preconditions whenever the dataset permits
//! it. When full `(y, v)` stratification is impossible at the requested
//! batch size — rare slices smaller than one example per batch — the
//! conditional objective drops to a partial-slice mode that skips
//! unrepresented class slices, which is precisely the regime where that
//! estimator becomes unstable as batch sizes shrink.
//!
//! Everything is deterministic given the config seed: initialization,
//! batch composition, and hence the fitted parameters, bit for bit.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::model::{
    objective_and_grad, Arch, MmdVariant, ModelParams, ObjectiveConfig, Parts,
};
use crate::seeding::derive_seed;
use crate::simulator::Dataset;
use crate::weights::WeightSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Adam denominator offset.
pub const ADAM_EPSILON: f64 = 1e-8;

/// Objective family of a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodName {
    /// Importance-weighted loss and importance-weighted marginal MMD.
    WMmd,
    /// Uniform loss, unweighted marginal MMD.
    Mmd,
    /// Uniform loss, unweighted per-class (conditional) MMD.
    CMmd,
    /// Plain L2-regularized logistic regression.
    L2,
    /// Importance-weighted L2-regularized logistic regression.
    WL2,
}

impl MethodName {
    /// The label fragment before the dash.
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::WMmd => "wMMD",
            MethodName::Mmd => "MMD",
            MethodName::CMmd => "cMMD",
            MethodName::L2 => "L2",
            MethodName::WL2 => "wL2",
        }
    }

    /// Whether the objective carries an MMD term (and hence sweeps the
    /// `α`/`γ` grids).
    #[must_use]
    pub fn has_mmd(&self) -> bool {
        matches!(self, MethodName::WMmd | MethodName::Mmd | MethodName::CMmd)
    }
}

/// Model-selection style of a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CvStyle {
    /// Pick the candidate with the best validation accuracy.
    Standard,
    /// Filter candidates whose validation MMD is significantly nonzero,
    /// then pick the best validation AUROC among survivors.
    TwoStep,
    /// Two-step procedure computed on unweighted validation metrics.
    TwoStepUnweighted,
}

impl CvStyle {
    /// The label fragment after the dash.
    #[must_use]
    pub fn as_str(&self) -> &'static str {
        match self {
            CvStyle::Standard => "S",
            CvStyle::TwoStep => "T",
            CvStyle::TwoStepUnweighted => "uT",
        }
    }
}

/// A method: objective family plus selection style.
///
/// Serializes as its label string (`"wMMD-T"`, `"L2-S"`, …); only the
/// eight named variants parse. Other combinations can be built with
/// [`MethodSpec::experimental`] and are tagged as such.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodSpec {
    /// Objective family.
    pub name: MethodName,
    /// Selection style.
    pub cv_style: CvStyle,
    /// True for combinations outside the named menu.
    pub experimental: bool,
}

impl MethodSpec {
    /// The eight named variants, in menu order.
    #[must_use]
    pub fn canonical_menu() -> Vec<MethodSpec> {
        [
            (MethodName::WMmd, CvStyle::TwoStep),
            (MethodName::WMmd, CvStyle::Standard),
            (MethodName::Mmd, CvStyle::TwoStep),
            (MethodName::Mmd, CvStyle::Standard),
            (MethodName::Mmd, CvStyle::TwoStepUnweighted),
            (MethodName::CMmd, CvStyle::TwoStep),
            (MethodName::L2, CvStyle::Standard),
            (MethodName::WL2, CvStyle::Standard),
        ]
        .into_iter()
        .map(|(name, cv_style)| MethodSpec { name, cv_style, experimental: false })
        .collect()
    }

    /// Whether this (name, style) pair is on the named menu.
    #[must_use]
    pub fn is_canonical(name: MethodName, cv_style: CvStyle) -> bool {
        use CvStyle::*;
        use MethodName::*;
        matches!(
            (name, cv_style),
            (WMmd, TwoStep)
                | (WMmd, Standard)
                | (Mmd, TwoStep)
                | (Mmd, Standard)
                | (Mmd, TwoStepUnweighted)
                | (CMmd, TwoStep)
                | (L2, Standard)
                | (WL2, Standard)
        )
    }

    /// Parse a named variant label. Unknown labels are configuration
    /// errors listing the menu.
    pub fn from_label(label: &str) -> Result<MethodSpec> {
        for m in Self::canonical_menu() {
            if m.label() == label {
                return Ok(m);
            }
        }
        let menu: Vec<String> = Self::canonical_menu().iter().map(MethodSpec::label).collect();
        Err(Error::Config(format!(
            "unknown method '{label}'; expected one of {}",
            menu.join(", ")
        )))
    }

    /// Build an off-menu combination (e.g. `cMMD` with standard CV),
    /// flagged experimental.
    pub fn experimental(name: MethodName, cv_style: CvStyle) -> Result<MethodSpec> {
        if Self::is_canonical(name, cv_style) {
            return Ok(MethodSpec { name, cv_style, experimental: false });
        }
        Ok(MethodSpec { name, cv_style, experimental: true })
    }

    /// The display label, `name-style`.
    #[must_use]
    pub fn label(&self) -> String {
        format!("{}-{}", self.name.as_str(), self.cv_style.as_str())
    }

    /// The objective flags this method implies; `α`, `λ`, and the kernel
    /// come from the hyperparameter point.
    #[must_use]
    pub fn objective_flags(&self) -> (bool, bool, MmdVariant) {
        match self.name {
            MethodName::WMmd => (true, true, MmdVariant::Marginal),
            MethodName::Mmd => (false, false, MmdVariant::Marginal),
            MethodName::CMmd => (false, false, MmdVariant::Conditional),
            MethodName::L2 => (false, false, MmdVariant::None),
            MethodName::WL2 => (true, false, MmdVariant::None),
        }
    }

    /// Whether validation metrics (fold MMD, AUROC, accuracy) are
    /// importance-weighted during selection. True exactly for the
    /// weighted two-step procedures `wMMD-T` and `MMD-T`; the
    /// unweighted-validation ablation `MMD-uT` and the fully
    /// weight-free `cMMD-T` keep plain metrics.
    #[must_use]
    pub fn weighted_val_metrics(&self) -> bool {
        matches!(self.name, MethodName::WMmd | MethodName::Mmd)
            && self.cv_style == CvStyle::TwoStep
    }
}

impl std::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<MethodSpec> {
        MethodSpec::from_label(&s)
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.label()
    }
}

/// Training hyperparameters and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Learning rate.
    pub lr: f64,
    /// First-moment decay.
    pub beta1: f64,
    /// Second-moment decay.
    pub beta2: f64,
    /// Fixed epoch budget; no early stopping.
    pub epochs: usize,
    /// Minibatch size.
    pub batch_size: usize,
    /// Architecture to train.
    pub arch: Arch,
    /// Hidden width when `arch` is `mlp`.
    pub mlp_width: usize,
    /// Objective coefficients (`α`, `λ`, kernel). Method flags are
    /// derived from the method being trained, overriding whatever flags
    /// this carries.
    pub objective: ObjectiveConfig,
    /// Root seed for initialization and batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 200,
            batch_size: 64,
            arch: Arch::Linear,
            mlp_width: 32,
            objective: ObjectiveConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Validate ranges; `mmd_active` tightens the batch-size floor.
    pub fn validate(&self, mmd_active: bool) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (v, name) in [(self.beta1, "beta1"), (self.beta2, "beta2")] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1), got {v}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if mmd_active && self.batch_size < 4 {
            return Err(Error::Config(format!(
                "batch_size must be ≥ 4 when an MMD term is active, got {}",
                self.batch_size
            )));
        }
        self.objective.validate()
    }
}

/// Per-epoch objective-term averages over the epoch's batches.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    /// Mean loss term.
    pub train_loss: f64,
    /// Mean MMD² term (zero when the penalty is off).
    pub train_mmd2: f64,
    /// Mean L2 term.
    pub train_l2: f64,
}

/// A trained model with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    /// Final parameters.
    pub params: ModelParams,
    /// One row per epoch.
    pub trace: Vec<TraceRow>,
    /// The method that produced it.
    pub method: MethodSpec,
    /// The exact training configuration (flags resolved).
    pub config: TrainConfig,
}

impl FittedModel {
    /// Export the per-epoch trace as CSV with header `epoch,loss,mmd2,l2`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "loss", "mmd2", "l2"])?;
        for (e, row) in self.trace.iter().enumerate() {
            w.write_record([
                format!("{e}"),
                format!("{}", row.train_loss),
                format!("{}", row.train_mmd2),
                format!("{}", row.train_l2),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The hyperparameter grids swept by cross-validation.
pub const LAMBDA_GRID: [f64; 3] = [0.0, 0.001, 0.0001];
/// MMD penalty coefficients (MMD methods only).
pub const ALPHA_GRID: [f64; 3] = [1e3, 1e5, 1e7];
/// RBF bandwidths (MMD methods only).
pub const GAMMA_GRID: [f64; 3] = [1e1, 1e2, 1e3];

/// The cartesian hyperparameter grid for a method: `λ` alone for the
/// penalty-free families (3 points), `λ × α × γ` for the MMD families
/// (27 points). Flags are resolved from the method; grid order is fixed
/// (`λ` outermost, then `α`, then `γ`), which downstream tie-breaking
/// relies on.
#[must_use]
pub fn hyper_grid(method: &MethodSpec) -> Vec<ObjectiveConfig> {
    let (in_loss, in_mmd, variant) = method.objective_flags();
    let mut grid = Vec::new();
    for &lambda in &LAMBDA_GRID {
        if method.name.has_mmd() {
            for &alpha in &ALPHA_GRID {
                for &gamma in &GAMMA_GRID {
                    grid.push(ObjectiveConfig {
                        alpha,
                        lambda_l2: lambda,
                        kernel: KernelConfig { gamma },
                        use_weights_in_loss: in_loss,
                        use_weights_in_mmd: in_mmd,
                        mmd_variant: variant,
                        allow_partial_slices: false,
                    });
                }
            }
        } else {
            grid.push(ObjectiveConfig {
                alpha: 0.0,
                lambda_l2: lambda,
                kernel: KernelConfig { gamma: 100.0 },
                use_weights_in_loss: in_loss,
                use_weights_in_mmd: in_mmd,
                mmd_variant: variant,
                allow_partial_slices: false,
            });
        }
    }
    grid
}

/// A stable human-readable identifier for a grid point.
#[must_use]
pub fn hyper_label(cfg: &ObjectiveConfig) -> String {
    if cfg.mmd_variant == MmdVariant::None {
        format!("lambda={}", cfg.lambda_l2)
    } else {
        format!(
            "lambda={},alpha={},gamma={}",
            cfg.lambda_l2, cfg.alpha, cfg.kernel.gamma
        )
    }
}

/// Group key each example is stratified by, given the MMD variant.
fn strat_groups(variant: MmdVariant, y: &[u8], v: &[u8]) -> Vec<Vec<usize>> {
    match variant {
        MmdVariant::None => vec![(0..y.len()).collect()],
        MmdVariant::Marginal => {
            let mut groups = vec![Vec::new(), Vec::new()];
            for (i, &vi) in v.iter().enumerate() {
                groups[vi as usize].push(i);
            }
            groups.retain(|g| !g.is_empty());
            groups
        }
        MmdVariant::Conditional => {
            let mut groups = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            for i in 0..y.len() {
                groups[(y[i] as usize) * 2 + v[i] as usize].push(i);
            }
            groups.retain(|g| !g.is_empty());
            groups
        }
    }
}

/// One epoch's batch plan: proportional per-group quotas with seeded
/// remainder placement. Every example appears in exactly one batch.
fn plan_batches(
    groups: &[Vec<usize>],
    n_batches: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = vec![Vec::new(); n_batches];
    for group in groups {
        let mut order = group.clone();
        order.shuffle(rng);
        let quota = group.len() / n_batches;
        let remainder = group.len() % n_batches;
        let mut slots: Vec<usize> = (0..n_batches).collect();
        slots.shuffle(rng);
        let mut extra = vec![false; n_batches];
        for &s in slots.iter().take(remainder) {
            extra[s] = true;
        }
        let mut cursor = 0;
        for (b, batch) in batches.iter_mut().enumerate() {
            let take = quota + usize::from(extra[b]);
            batch.extend_from_slice(&order[cursor..cursor + take]);
            cursor += take;
        }
    }
    batches
}

/// Train one method on a dataset.
///
/// The objective flags are derived from the method; `cfg.objective`
/// contributes only its coefficients (`α`, `λ`, kernel). Stratification
/// is by `v` for marginal-MMD methods (a per-batch group smaller than 2
/// is a configuration error advising a larger batch) and by `(y, v)`
/// for the conditional method (falling back to partial-slice mode when
/// the rarest slice cannot reach 2 per batch). Fully deterministic in
/// `cfg.seed`.
pub fn train(
    dataset: &Dataset,
    weights: &WeightSet,
    method: &MethodSpec,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    let n = dataset.n();
    if weights.n() != n {
        return Err(Error::Shape(format!(
            "dataset has {n} rows but weight set has {}",
            weights.n()
        )));
    }
    let (in_loss, in_mmd, variant) = method.objective_flags();
    let mut objective = ObjectiveConfig {
        use_weights_in_loss: in_loss,
        use_weights_in_mmd: in_mmd,
        mmd_variant: variant,
        allow_partial_slices: false,
        ..cfg.objective.clone()
    };
    if !method.name.has_mmd() {
        objective.alpha = 0.0;
    }
    cfg.validate(objective.mmd_active())?;

    if n < cfg.batch_size {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the dataset size {n}",
            cfg.batch_size
        )));
    }
    let n_batches = n / cfg.batch_size;
    let groups = strat_groups(variant, &dataset.y, &dataset.v);
    if objective.mmd_active() {
        match variant {
            MmdVariant::Marginal => {
                for g in &groups {
                    if g.len() / n_batches < 2 {
                        return Err(Error::Config(format!(
                            "cannot stratify: a v-group of {} examples yields \
                             fewer than 2 per batch across {n_batches} batches; \
                             use a larger batch_size",
                            g.len()
                        )));
                    }
                }
            }
            MmdVariant::Conditional => {
                let feasible = groups.len() == 4
                    && groups.iter().all(|g| g.len() / n_batches >= 2);
                if !feasible {
                    objective.allow_partial_slices = true;
                }
            }
            MmdVariant::None => {}
        }
    }

    let mut params = match cfg.arch {
        Arch::Linear => ModelParams::linear(dataset.x.cols()),
        Arch::Mlp => {
            ModelParams::mlp(dataset.x.cols(), cfg.mlp_width, derive_seed(cfg.seed, "init", 0))
        }
    };
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, &params);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "epoch", epoch as u64));
        let batches = plan_batches(&groups, n_batches, &mut rng);
        let mut sums = Parts { loss: 0.0, mmd2: 0.0, l2: 0.0 };
        for batch in &batches {
            let xb = dataset.x.select_rows(batch);
            let yb: Vec<u8> = batch.iter().map(|&i| dataset.y[i]).collect();
            let vb: Vec<u8> = batch.iter().map(|&i| dataset.v[i]).collect();
            let ub: Vec<f64> = batch.iter().map(|&i| weights.u[i]).collect();
            let obj = objective_and_grad(&params, &xb, &yb, &vb, &ub, &objective)?;
            adam.step(&mut params, &obj.grads);
            sums.loss += obj.parts.loss;
            sums.mmd2 += obj.parts.mmd2;
            sums.l2 += obj.parts.l2;
        }
        let nb = batches.len() as f64;
        trace.push(TraceRow {
            train_loss: sums.loss / nb,
            train_mmd2: sums.mmd2 / nb,
            train_l2: sums.l2 / nb,
        });
    }

    let mut stored = cfg.clone();
    stored.objective = objective;
    Ok(FittedModel { params, trace, method: method.clone(), config: stored })
}

/// Adam optimizer state over the flattened parameter sequence.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(lr: f64, beta1: f64, beta2: f64, params: &ModelParams) -> Adam {
        let mut len = 0;
        let mut probe = params.clone();
        probe.for_each_slice_mut(|s| len += s.len());
        Adam { lr, beta1, beta2, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut offset = 0;
        let mut update = |p: &mut [f64], g: &[f64]| {
            for (j, (pj, &gj)) in p.iter_mut().zip(g).enumerate() {
                let k = offset + j;
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gj;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gj * gj;
                let mhat = self.m[k] / bc1;
                let vhat = self.v[k] / bc2;
                *pj -= self.lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
            }
            offset += p.len();
        };
        for (pw, gw) in params.layer_weights.iter_mut().zip(&grads.layer_weights) {
            update(pw.as_mut_slice(), gw.as_slice());
        }
        for (pb, gb) in params.layer_biases.iter_mut().zip(&grads.layer_biases) {
            update(pb.as_mut_slice(), gb.as_slice());
        }
    }
}
