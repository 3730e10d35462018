//! Predictors of the form `f = h(φ(x))` with analytic objective gradients.
//!
//! Two architectures share one parameter container:
//!
//! * **linear** — `φ(x) = wᵀx` (scalar representation), `h = σ`. The
//!   form the projection and complexity analyses reason about.
//! * **mlp** — one hidden layer of `tanh` units; `φ` is the hidden
//!   activation vector and `h` the sigmoid head. The smallest model with
//!   a learned representation distinct from its classifier.
//!
//! The training objective combines three terms:
//!
//! ```text
//!   J(θ) = (1/m) Σᵢ lwᵢ · ℓ(zᵢ, yᵢ)            logistic loss, optionally
//!                                               importance-weighted
//!        + α · MMD̂²(φ-groups)                   marginal (by v) or
//!                                               conditional (by v within y)
//!        + λ · ‖θ‖²                              penalty on all parameters
//! ```
//!
//! where `zᵢ` is the logit and `lwᵢ` the raw importance weight (mean one
//! over the source sample) or `1` when weighting is off. Group weights
//! for the MMD term are renormalized *within the batch* so each group's
//! weights sum to one, keeping every minibatch estimate on the scale of
//! the full-sample statistic. Gradients are exact (chain rule through
//! the fused kernel pass), which the finite-difference suites verify.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{clamp_mmd2, packed_mmd2, KernelConfig, PackedGroups};
use crate::mat::{dot, Mat};

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` so that
/// log-loss evaluation is always finite.
pub const PROB_FLOOR: f64 = 1e-12;

/// Model architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// `φ(x) = wᵀx`, prediction `σ(φ)`.
    Linear,
    /// One `tanh` hidden layer; `φ` = hidden activations.
    Mlp,
}

/// Which MMD penalty the objective carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdVariant {
    /// Two-sample MMD between the `v`-groups of the batch.
    Marginal,
    /// Per-class MMD: sum over `y` of the MMD between `v`-groups within
    /// that class slice.
    Conditional,
    /// No MMD term.
    None,
}

/// Objective hyperparameters and method flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// MMD penalty coefficient `α ≥ 0`.
    pub alpha: f64,
    /// L2 penalty coefficient `λ ≥ 0` on all parameters.
    pub lambda_l2: f64,
    /// RBF kernel for the MMD term.
    pub kernel: KernelConfig,
    /// Weight the per-example losses by the importance weights.
    pub use_weights_in_loss: bool,
    /// Weight the MMD term's group embeddings by the importance weights.
    pub use_weights_in_mmd: bool,
    /// Which MMD penalty to apply.
    pub mmd_variant: MmdVariant,
    /// Conditional variant only: skip a class slice whose `v`-groups are
    /// not both represented in the batch instead of failing. Lets the
    /// conditional estimator run at batch sizes where full `(y, v)`
    /// stratification is impossible — the regime where it destabilizes.
    pub allow_partial_slices: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 0.0,
            lambda_l2: 0.0,
            kernel: KernelConfig { gamma: 100.0 },
            use_weights_in_loss: false,
            use_weights_in_mmd: false,
            mmd_variant: MmdVariant::None,
            allow_partial_slices: false,
        }
    }
}

impl ObjectiveConfig {
    /// Validate coefficient ranges.
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be ≥ 0, got {}", self.alpha)));
        }
        if self.lambda_l2 < 0.0 || !self.lambda_l2.is_finite() {
            return Err(Error::Config(format!(
                "lambda_l2 must be ≥ 0, got {}",
                self.lambda_l2
            )));
        }
        self.kernel.validate()
    }

    /// Whether the MMD term is active (positive coefficient and a variant).
    #[must_use]
    pub fn mmd_active(&self) -> bool {
        self.alpha > 0.0 && self.mmd_variant != MmdVariant::None
    }
}

/// Parameters of either architecture. Weights are row-major matrices;
/// the flattened order (weights then biases, layer by layer) is the
/// optimizer's parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Architecture tag.
    pub arch: Arch,
    /// Per-layer weight matrices (`[w]` for linear; `[W1, W2]` for mlp).
    pub layer_weights: Vec<Mat>,
    /// Per-layer bias vectors (empty for linear; `[b1, b2]` for mlp).
    pub layer_biases: Vec<Vec<f64>>,
    /// Dimension of the representation `φ` (1 for linear).
    pub repr_dim: usize,
}

impl ModelParams {
    /// Zero-initialized linear model on `d` features.
    #[must_use]
    pub fn linear(d: usize) -> Self {
        ModelParams {
            arch: Arch::Linear,
            layer_weights: vec![Mat::zeros(1, d)],
            layer_biases: vec![],
            repr_dim: 1,
        }
    }

    /// MLP with one hidden layer of `width` tanh units. Weights draw
    /// from `N(0, 1/fan_in)` under the given seed; biases start at zero.
    #[must_use]
    pub fn mlp(d: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| -> Mat {
            let dist = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("valid std");
            let mut m = Mat::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m.set(i, j, dist.sample(&mut rng));
                }
            }
            m
        };
        let w1 = init(width, d);
        let w2 = init(1, width);
        ModelParams {
            arch: Arch::Mlp,
            layer_weights: vec![w1, w2],
            layer_biases: vec![vec![0.0; width], vec![0.0]],
            repr_dim: width,
        }
    }

    /// Input dimension expected by the first layer.
    #[must_use]
    pub fn input_dim(&self) -> usize {
        self.layer_weights[0].cols()
    }

    /// The linear weight vector; errors for non-linear models.
    pub fn linear_weights(&self) -> Result<&[f64]> {
        if self.arch != Arch::Linear {
            return Err(Error::Config(
                "operation requires a linear model, got an mlp".into(),
            ));
        }
        Ok(self.layer_weights[0].row(0))
    }

    /// A same-shape parameter container filled with zeros (gradient and
    /// optimizer-state buffers).
    #[must_use]
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            arch: self.arch,
            layer_weights: self
                .layer_weights
                .iter()
                .map(|w| Mat::zeros(w.rows(), w.cols()))
                .collect(),
            layer_biases: self.layer_biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            repr_dim: self.repr_dim,
        }
    }

    /// Visit every parameter as a flat sequence of mutable slices, in a
    /// fixed order shared with gradients and optimizer state.
    pub fn for_each_slice_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for w in &mut self.layer_weights {
            f(w.as_mut_slice());
        }
        for b in &mut self.layer_biases {
            f(b.as_mut_slice());
        }
    }

    /// Sum of squares of all parameters.
    #[must_use]
    pub fn sum_squares(&self) -> f64 {
        let weights: f64 = self
            .layer_weights
            .iter()
            .map(|w| w.as_slice().iter().map(|x| x * x).sum::<f64>())
            .sum();
        let biases: f64 = self
            .layer_biases
            .iter()
            .map(|b| b.iter().map(|x| x * x).sum::<f64>())
            .sum();
        weights + biases
    }
}

/// Forward-pass outputs for a batch.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Representation matrix, `m × repr_dim`.
    pub phi: Mat,
    /// Pre-sigmoid logits.
    pub logit: Vec<f64>,
    /// Predicted probabilities, clamped inside `(0, 1)`.
    pub prob: Vec<f64>,
}

/// Numerically stable sigmoid.
#[must_use]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss from the logit: `ℓ = max(z,0) − z·y + ln(1+e^{−|z|})`,
/// stable for large `|z|`.
#[must_use]
pub fn logistic_loss(z: f64, y: u8) -> f64 {
    z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p()
}

/// Evaluate `φ` and predicted probabilities on a batch.
pub fn forward(params: &ModelParams, x: &Mat) -> Result<Forward> {
    if x.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "model expects {} features, batch has {}",
            params.input_dim(),
            x.cols()
        )));
    }
    let m = x.rows();
    let (phi, logit) = match params.arch {
        Arch::Linear => {
            let w = params.layer_weights[0].row(0);
            let mut phi = Mat::zeros(m, 1);
            let mut logit = Vec::with_capacity(m);
            for i in 0..m {
                let z = dot(w, x.row(i));
                phi.set(i, 0, z);
                logit.push(z);
            }
            (phi, logit)
        }
        Arch::Mlp => {
            let w1 = &params.layer_weights[0];
            let b1 = &params.layer_biases[0];
            let w2 = params.layer_weights[1].row(0);
            let b2 = params.layer_biases[1][0];
            let r = params.repr_dim;
            let mut phi = Mat::zeros(m, r);
            let mut logit = Vec::with_capacity(m);
            for i in 0..m {
                let xi = x.row(i);
                let hid = phi.row_mut(i);
                for (k, h) in hid.iter_mut().enumerate() {
                    *h = (dot(w1.row(k), xi) + b1[k]).tanh();
                }
                logit.push(dot(w2, hid) + b2);
            }
            (phi, logit)
        }
    };
    for (i, z) in logit.iter().enumerate() {
        if !z.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite logit at batch row {i}; check inputs and parameters"
            )));
        }
    }
    let prob = logit
        .iter()
        .map(|&z| sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        .collect();
    Ok(Forward { phi, logit, prob })
}

/// The three objective terms, reported separately for traces. `mmd2` is
/// the penalized statistic itself (zero when the penalty is off), not
/// scaled by `α`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Parts {
    /// Mean (optionally weighted) logistic loss.
    pub loss: f64,
    /// MMD² statistic of the batch (0.0 when inactive).
    pub mmd2: f64,
    /// `λ‖θ‖²`.
    pub l2: f64,
}

/// Objective value, gradient, and term breakdown at one batch.
#[derive(Debug, Clone)]
pub struct Objective {
    /// Total objective value.
    pub value: f64,
    /// Gradient in a same-shape parameter container.
    pub grads: ModelParams,
    /// Term breakdown.
    pub parts: Parts,
}

/// Evaluate the full training objective and its exact gradient on a
/// batch.
///
/// `u` holds the raw per-example importance weights (pass ones when no
/// weighting applies anywhere); the flags in `cfg` decide where they
/// enter. Group weights for the MMD are renormalized within the batch.
///
/// Batch-composition preconditions when the MMD term is active: the
/// marginal variant needs at least 2 examples in each `v`-group; the
/// conditional variant needs at least 2 in every `(y, v)` slice unless
/// `allow_partial_slices` is set, in which case class slices missing a
/// `v`-group are skipped.
pub fn objective_and_grad(
    params: &ModelParams,
    x: &Mat,
    y: &[u8],
    v: &[u8],
    u: &[f64],
    cfg: &ObjectiveConfig,
) -> Result<Objective> {
    cfg.validate()?;
    let m = x.rows();
    if m == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    if y.len() != m || v.len() != m || u.len() != m {
        return Err(Error::Shape(format!(
            "batch of {m} rows with {} labels, {} group labels, {} weights",
            y.len(),
            v.len(),
            u.len()
        )));
    }
    let fwd = forward(params, x)?;
    let mf = m as f64;

    // Loss term and its logit gradient.
    let mut loss = 0.0;
    let mut dz = vec![0.0; m];
    for i in 0..m {
        let lw = if cfg.use_weights_in_loss { u[i] } else { 1.0 };
        loss += lw * logistic_loss(fwd.logit[i], y[i]);
        dz[i] = lw * (sigmoid(fwd.logit[i]) - f64::from(y[i])) / mf;
    }
    loss /= mf;

    // MMD term: value plus gradient with respect to each φ row, already
    // scaled by α.
    let mut mmd2 = 0.0;
    let mut dphi = Mat::zeros(m, params.repr_dim);
    if cfg.mmd_active() {
        match cfg.mmd_variant {
            MmdVariant::Marginal => {
                mmd2 = marginal_batch_mmd(&fwd.phi, v, u, cfg, &mut dphi)?;
            }
            MmdVariant::Conditional => {
                mmd2 = conditional_batch_mmd(&fwd.phi, y, v, cfg, &mut dphi)?;
            }
            MmdVariant::None => unreachable!("mmd_active excludes None"),
        }
        if cfg.alpha != 1.0 {
            for g in dphi.as_mut_slice() {
                *g *= cfg.alpha;
            }
        }
    }

    // Backpropagate dz + dphi into parameter space, then add the L2 term.
    let mut grads = params.zeros_like();
    match params.arch {
        Arch::Linear => {
            // z = φ = w·x: total upstream scalar per row is dz + dφ.
            let gw = grads.layer_weights[0].row_mut(0);
            for i in 0..m {
                let up = dz[i] + dphi.get(i, 0);
                if up == 0.0 {
                    continue;
                }
                for (g, &xv) in gw.iter_mut().zip(x.row(i)) {
                    *g += up * xv;
                }
            }
        }
        Arch::Mlp => {
            let w2 = params.layer_weights[1].row(0);
            let r = params.repr_dim;
            let mut ga = vec![0.0; r];
            for i in 0..m {
                let hid = fwd.phi.row(i);
                let xi = x.row(i);
                // Head gradients.
                {
                    let gw2 = grads.layer_weights[1].row_mut(0);
                    for (g, &h) in gw2.iter_mut().zip(hid) {
                        *g += dz[i] * h;
                    }
                    grads.layer_biases[1][0] += dz[i];
                }
                // Hidden pre-activation gradient: (dz·w2 + dφ) ⊙ (1−φ²).
                for k in 0..r {
                    let gphi = dz[i] * w2[k] + dphi.get(i, k);
                    ga[k] = gphi * (1.0 - hid[k] * hid[k]);
                }
                let gw1 = &mut grads.layer_weights[0];
                for k in 0..r {
                    if ga[k] == 0.0 {
                        continue;
                    }
                    for (g, &xv) in gw1.row_mut(k).iter_mut().zip(xi) {
                        *g += ga[k] * xv;
                    }
                    grads.layer_biases[0][k] += ga[k];
                }
            }
        }
    }

    let l2 = cfg.lambda_l2 * params.sum_squares();
    if cfg.lambda_l2 > 0.0 {
        let lam2 = 2.0 * cfg.lambda_l2;
        for (gw, pw) in grads.layer_weights.iter_mut().zip(&params.layer_weights) {
            for (g, p) in gw.as_mut_slice().iter_mut().zip(pw.as_slice()) {
                *g += lam2 * p;
            }
        }
        for (gb, pb) in grads.layer_biases.iter_mut().zip(&params.layer_biases) {
            for (g, p) in gb.iter_mut().zip(pb) {
                *g += lam2 * p;
            }
        }
    }

    let value = loss + cfg.alpha * mmd2 + l2;
    Ok(Objective { value, grads, parts: Parts { loss, mmd2, l2 } })
}

/// Marginal batch MMD²: renormalize weights within each `v`-group of the
/// batch, run the fused pass, scatter φ-gradients back to batch order.
fn marginal_batch_mmd(
    phi: &Mat,
    v: &[u8],
    u: &[f64],
    cfg: &ObjectiveConfig,
    dphi: &mut Mat,
) -> Result<f64> {
    let m = v.len();
    let mut counts = [0usize; 2];
    let mut sums = [0.0f64; 2];
    for i in 0..m {
        counts[v[i] as usize] += 1;
        sums[v[i] as usize] += u[i];
    }
    for g in 0..2 {
        if counts[g] < 2 {
            return Err(Error::BatchComposition(format!(
                "marginal MMD needs ≥ 2 examples per v-group in the batch; \
                 group v={g} has {}",
                counts[g]
            )));
        }
    }
    let ubar: Vec<f64> = if cfg.use_weights_in_mmd {
        (0..m).map(|i| u[i] / sums[v[i] as usize]).collect()
    } else {
        (0..m).map(|i| 1.0 / counts[v[i] as usize] as f64).collect()
    };
    let packed = PackedGroups::pack(phi, v, &ubar);
    let r = packed.r;
    let mut g0 = vec![0.0; packed.phi0.len()];
    let mut g1 = vec![0.0; packed.phi1.len()];
    let raw = packed_mmd2(&packed, cfg.kernel.gamma, Some((&mut g0, &mut g1)));
    for (k, &i) in packed.idx0.iter().enumerate() {
        dphi.row_mut(i).copy_from_slice(&g0[k * r..(k + 1) * r]);
    }
    for (k, &i) in packed.idx1.iter().enumerate() {
        dphi.row_mut(i).copy_from_slice(&g1[k * r..(k + 1) * r]);
    }
    clamp_mmd2(raw)
}

/// Conditional batch MMD²: per class slice, unweighted group weights.
fn conditional_batch_mmd(
    phi: &Mat,
    y: &[u8],
    v: &[u8],
    cfg: &ObjectiveConfig,
    dphi: &mut Mat,
) -> Result<f64> {
    let m = v.len();
    let mut slice_counts = [[0usize; 2]; 2];
    for i in 0..m {
        slice_counts[y[i] as usize][v[i] as usize] += 1;
    }
    if !cfg.allow_partial_slices {
        for yy in 0..2 {
            for vv in 0..2 {
                if slice_counts[yy][vv] < 2 {
                    return Err(Error::BatchComposition(format!(
                        "conditional MMD needs ≥ 2 examples per (y,v) slice \
                         in the batch; slice (y={yy}, v={vv}) has {}",
                        slice_counts[yy][vv]
                    )));
                }
            }
        }
    }
    let r = phi.cols();
    let mut total = 0.0;
    for yy in 0..2u8 {
        if slice_counts[yy as usize][0] == 0 || slice_counts[yy as usize][1] == 0 {
            // Reachable only with allow_partial_slices; drop the term.
            continue;
        }
        let idx: Vec<usize> = (0..m).filter(|&i| y[i] == yy).collect();
        let phi_slice = phi.select_rows(&idx);
        let v_slice: Vec<u8> = idx.iter().map(|&i| v[i]).collect();
        let ubar: Vec<f64> = v_slice
            .iter()
            .map(|&vv| 1.0 / slice_counts[yy as usize][vv as usize] as f64)
            .collect();
        let packed = PackedGroups::pack(&phi_slice, &v_slice, &ubar);
        let mut g0 = vec![0.0; packed.phi0.len()];
        let mut g1 = vec![0.0; packed.phi1.len()];
        let raw = packed_mmd2(&packed, cfg.kernel.gamma, Some((&mut g0, &mut g1)));
        total += clamp_mmd2(raw)?;
        for (k, &local) in packed.idx0.iter().enumerate() {
            let row = dphi.row_mut(idx[local]);
            for a in 0..r {
                row[a] += g0[k * r + a];
            }
        }
        for (k, &local) in packed.idx1.iter().enumerate() {
            let row = dphi.row_mut(idx[local]);
            for a in 0..r {
                row[a] += g1[k * r + a];
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, rng.sample(StandardNormal));
            }
        }
        m
    }

    /// A batch with balanced (y, v) slices for MMD-variant tests.
    fn test_batch(m: usize, d: usize, seed: u64) -> (Mat, Vec<u8>, Vec<u8>, Vec<f64>) {
        assert_eq!(m % 4, 0);
        let x = random_mat(m, d, seed);
        let y: Vec<u8> = (0..m).map(|i| u8::from(i % 2 == 0)).collect();
        let v: Vec<u8> = (0..m).map(|i| u8::from((i / 2) % 2 == 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let u: Vec<f64> = (0..m).map(|_| 0.25 + rng.gen::<f64>()).collect();
        (x, y, v, u)
    }

    #[test]
    fn zero_linear_model_predicts_half() {
        let params = ModelParams::linear(3);
        let x = random_mat(5, 3, 0);
        let f = forward(&params, &x).unwrap();
        assert!(f.prob.iter().all(|&p| p == 0.5));
        assert!(f.phi.as_slice().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn unit_weight_on_unit_feature_gives_sigma_one() {
        let mut params = ModelParams::linear(3);
        params.layer_weights[0].set(0, 0, 1.0);
        let x = Mat::from_rows(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let f = forward(&params, &x).unwrap();
        assert!((f.prob[0] - 0.731_058_578_630_004_9).abs() < 1e-15, "σ(1)");
    }

    #[test]
    fn zero_mlp_predicts_half() {
        let mut params = ModelParams::mlp(4, 8, 0);
        for w in &mut params.layer_weights {
            w.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        }
        let x = random_mat(3, 4, 1);
        let f = forward(&params, &x).unwrap();
        assert!(f.prob.iter().all(|&p| p == 0.5));
        assert!(f.phi.as_slice().iter().all(|&h| h == 0.0), "tanh(0) = 0");
    }

    #[test]
    fn mlp_init_is_seeded_and_scaled() {
        let a = ModelParams::mlp(10, 32, 7);
        let b = ModelParams::mlp(10, 32, 7);
        assert_eq!(a, b, "same seed, same init");
        let c = ModelParams::mlp(10, 32, 8);
        assert_ne!(a, c, "different seed, different init");
    }

    #[test]
    fn zero_model_objective_is_log_two() {
        let params = ModelParams::linear(4);
        let x = random_mat(8, 4, 3);
        let y = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let v = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let u = vec![1.0; 8];
        let cfg = ObjectiveConfig::default();
        let obj = objective_and_grad(&params, &x, &y, &v, &u, &cfg).unwrap();
        assert!(
            (obj.value - 0.693_147_180_559_945_3).abs() < 1e-15,
            "log 2, got {}",
            obj.value
        );
        assert_eq!(obj.parts.mmd2, 0.0);
        assert_eq!(obj.parts.l2, 0.0);
    }

    #[test]
    fn identical_group_embeddings_zero_out_the_mmd_part() {
        // All rows equal ⇒ φ identical across groups ⇒ MMD² = 0.
        let m = 8;
        let x = Mat::from_rows(m, 2, vec![0.3; m * 2]).unwrap();
        let y: Vec<u8> = (0..m as u8).map(|i| i % 2).collect();
        let v: Vec<u8> = (0..m).map(|i| u8::from(i < m / 2)).collect();
        let u = vec![1.0; m];
        let cfg = ObjectiveConfig {
            alpha: 10.0,
            mmd_variant: MmdVariant::Marginal,
            use_weights_in_mmd: true,
            ..Default::default()
        };
        let obj = objective_and_grad(
            &ModelParams::mlp(2, 4, 5),
            &x,
            &y,
            &v,
            &u,
            &cfg,
        )
        .unwrap();
        assert!(obj.parts.mmd2.abs() < 1e-15);
        assert!((obj.value - (obj.parts.loss + obj.parts.l2)).abs() < 1e-15);
    }

    #[test]
    fn batch_composition_is_enforced_for_marginal() {
        let (x, y, _, u) = test_batch(8, 3, 11);
        let v_bad = vec![0, 0, 0, 0, 0, 0, 0, 1]; // one v=1 example
        let cfg = ObjectiveConfig {
            alpha: 1.0,
            mmd_variant: MmdVariant::Marginal,
            ..Default::default()
        };
        let err = objective_and_grad(&ModelParams::linear(3), &x, &y, &v_bad, &u, &cfg)
            .unwrap_err();
        assert!(matches!(err, Error::BatchComposition(_)), "got {err}");
    }

    #[test]
    fn partial_slices_skip_instead_of_failing_when_allowed() {
        let x = random_mat(8, 3, 13);
        // No (y=1, v=1) examples at all.
        let y = vec![1, 1, 1, 1, 0, 0, 0, 0];
        let v = vec![0, 0, 0, 0, 0, 0, 1, 1];
        let u = vec![1.0; 8];
        let strict = ObjectiveConfig {
            alpha: 1.0,
            mmd_variant: MmdVariant::Conditional,
            ..Default::default()
        };
        let err = objective_and_grad(&ModelParams::linear(3), &x, &y, &v, &u, &strict)
            .unwrap_err();
        assert!(matches!(err, Error::BatchComposition(_)));

        let lenient = ObjectiveConfig { allow_partial_slices: true, ..strict };
        let obj = objective_and_grad(&ModelParams::linear(3), &x, &y, &v, &u, &lenient)
            .unwrap();
        // Only the y=0 slice contributes; value is finite and the y=1
        // rows receive no MMD gradient.
        assert!(obj.value.is_finite());
    }

    /// Central finite differences of the objective value with respect to
    /// every parameter.
    fn finite_difference_check(
        params: &ModelParams,
        x: &Mat,
        y: &[u8],
        v: &[u8],
        u: &[f64],
        cfg: &ObjectiveConfig,
    ) {
        let obj = objective_and_grad(params, x, y, v, u, cfg).unwrap();
        let h = 1e-5;
        // Walk parameters via the flat-order visitor on clones.
        let n_slices = params.layer_weights.len() + params.layer_biases.len();
        for s in 0..n_slices {
            let slice_len = {
                let mut len = 0;
                let mut k = 0;
                let mut c = params.clone();
                c.for_each_slice_mut(|sl| {
                    if k == s {
                        len = sl.len();
                    }
                    k += 1;
                });
                len
            };
            for j in 0..slice_len {
                let perturb = |delta: f64| -> f64 {
                    let mut p = params.clone();
                    let mut k = 0;
                    p.for_each_slice_mut(|sl| {
                        if k == s {
                            sl[j] += delta;
                        }
                        k += 1;
                    });
                    objective_and_grad(&p, x, y, v, u, cfg).unwrap().value
                };
                let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
                let mut g = 0.0;
                let mut k = 0;
                let mut gc = obj.grads.clone();
                gc.for_each_slice_mut(|sl| {
                    if k == s {
                        g = sl[j];
                    }
                    k += 1;
                });
                let denom = fd.abs().max(g.abs()).max(1e-7);
                assert!(
                    ((g - fd) / denom).abs() < 1e-5,
                    "slice {s} entry {j}: analytic {g:.9} vs fd {fd:.9}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_across_variants() {
        let (x, y, v, u) = test_batch(12, 3, 21);
        let configs = [
            ObjectiveConfig { lambda_l2: 0.01, ..Default::default() },
            ObjectiveConfig {
                alpha: 2.0,
                lambda_l2: 0.001,
                kernel: KernelConfig { gamma: 3.0 },
                use_weights_in_loss: true,
                use_weights_in_mmd: true,
                mmd_variant: MmdVariant::Marginal,
                allow_partial_slices: false,
            },
            ObjectiveConfig {
                alpha: 1.5,
                kernel: KernelConfig { gamma: 2.0 },
                mmd_variant: MmdVariant::Conditional,
                ..Default::default()
            },
        ];
        for (ci, cfg) in configs.iter().enumerate() {
            for arch in [Arch::Linear, Arch::Mlp] {
                let params = match arch {
                    Arch::Linear => {
                        let mut p = ModelParams::linear(3);
                        let w = random_mat(1, 3, 31 + ci as u64);
                        p.layer_weights[0] = w;
                        p
                    }
                    Arch::Mlp => ModelParams::mlp(3, 4, 41 + ci as u64),
                };
                finite_difference_check(&params, &x, &y, &v, &u, cfg);
            }
        }
    }

    #[test]
    fn objective_is_invariant_to_row_permutation() {
        let (x, y, v, u) = test_batch(12, 3, 51);
        let cfg = ObjectiveConfig {
            alpha: 3.0,
            lambda_l2: 0.001,
            kernel: KernelConfig { gamma: 2.0 },
            use_weights_in_loss: true,
            use_weights_in_mmd: true,
            mmd_variant: MmdVariant::Marginal,
            allow_partial_slices: false,
        };
        let mut params = ModelParams::linear(3);
        params.layer_weights[0] = random_mat(1, 3, 52);
        let a = objective_and_grad(&params, &x, &y, &v, &u, &cfg).unwrap();
        let perm: Vec<usize> = vec![7, 2, 9, 0, 4, 11, 1, 6, 3, 10, 5, 8];
        let xp = x.select_rows(&perm);
        let yp: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
        let vp: Vec<u8> = perm.iter().map(|&i| v[i]).collect();
        let up: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        let b = objective_and_grad(&params, &xp, &yp, &vp, &up, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        for (ga, gb) in a.grads.layer_weights[0]
            .as_slice()
            .iter()
            .zip(b.grads.layer_weights[0].as_slice())
        {
            assert!((ga - gb).abs() < 1e-12);
        }
    }

    #[test]
    fn plain_logistic_objective_matches_reference() {
        // With the MMD off and uniform weights, the objective is ordinary
        // L2-regularized logistic regression.
        let (x, y, v, _) = test_batch(16, 4, 61);
        let u = vec![1.0; 16];
        let lambda = 0.01;
        let cfg = ObjectiveConfig { lambda_l2: lambda, ..Default::default() };
        let mut params = ModelParams::linear(4);
        params.layer_weights[0] = random_mat(1, 4, 62);
        let obj = objective_and_grad(&params, &x, &y, &v, &u, &cfg).unwrap();
        let w = params.layer_weights[0].row(0);
        let mut reference = 0.0;
        for i in 0..16 {
            let z = dot(w, x.row(i));
            let p = sigmoid(z);
            reference += -(f64::from(y[i]) * p.ln()
                + (1.0 - f64::from(y[i])) * (1.0 - p).ln());
        }
        reference = reference / 16.0 + lambda * w.iter().map(|x| x * x).sum::<f64>();
        assert!(
            (obj.value - reference).abs() < 1e-12,
            "{} vs reference {reference}",
            obj.value
        );
    }
}
