//! Training with the importance-weighted MMD penalty.
//!
//! Trains two logistic models on the same strongly confounded sample:
//! a plain L2-regularized baseline, and the weighted objective that adds
//! an RBF-MMD penalty between the two `V`-groups of the learned
//! representation. The penalty drives the representation's group
//! discrepancy toward zero, which is what survives the shift.
//!
//! The sample comes from the shortcut-prone geometry: the label-driven
//! block is weak while the shortcut block reads `V` nearly noiselessly,
//! so an unconstrained fit leans on the shortcut and inverts when the
//! `Y`–`V` association flips at test time.
//!
//! ```bash
//! cargo run --example train_wmmd
//! ```

use shortcut_shield::evaluation::evaluate_grid;
use shortcut_shield::kernel::weighted_mmd2;
use shortcut_shield::model::forward;
use shortcut_shield::simulator::{sample_dataset, DistributionSpec};
use shortcut_shield::trainer::{train, MethodSpec, TrainConfig};
use shortcut_shield::weights::{compute_weights, estimate_stats};

fn main() -> shortcut_shield::Result<()> {
    let spec = DistributionSpec::shortcut_prone();
    let ds = sample_dataset(&spec, 5000, 3)?;
    let w = compute_weights(&estimate_stats(&ds)?, &ds)?;
    println!("training sample: n = {}, rho = {}\n", ds.n(), spec.rho);

    // Batch 256 keeps the per-batch weighted MMD estimate low-noise; the
    // penalty weight 1e3 dominates the shortcut's O(1) group discrepancy
    // without drowning the classification loss.
    let mut cfg = TrainConfig { seed: 3, batch_size: 256, ..TrainConfig::default() };
    cfg.objective.lambda_l2 = 1e-4;

    let baseline = train(&ds, &w, &MethodSpec::from_label("L2-S")?, &cfg)?;

    cfg.objective.alpha = 1e3;
    cfg.objective.kernel.gamma = 100.0;
    cfg.objective.lambda_l2 = 0.0;
    let shielded = train(&ds, &w, &MethodSpec::from_label("wMMD-T")?, &cfg)?;

    println!("wMMD training trace (loss and batch MMD², every 40 epochs):");
    for (e, row) in shielded.trace.iter().enumerate() {
        if e % 40 == 0 || e + 1 == shielded.trace.len() {
            println!("  epoch {e:>3}: loss = {:.4}, mmd2 = {:.3e}", row.train_loss, row.train_mmd2);
        }
    }

    // Final representation discrepancy, measured the same way for both.
    let kernel = shielded.config.objective.kernel;
    for (name, model) in [("L2-S", &baseline), ("wMMD-T", &shielded)] {
        let fwd = forward(&model.params, &ds.x)?;
        let mmd2 = weighted_mmd2(&fwd.phi, &ds.v, &w.u_bar_by_group, kernel)?;
        println!("{name:>8}: final representation MMD² = {mmd2:.3e}");
    }

    // What the penalty buys: performance when the correlation flips.
    println!("\ntest AUROC across the shift family (n_test = 10000):");
    println!("{:>8} {:>10} {:>10} {:>10}", "method", "rho=0.9", "rho=0.5", "rho=0.1");
    for (name, model) in [("L2-S", &baseline), ("wMMD-T", &shielded)] {
        let report = evaluate_grid(&model.params, name, &spec, &[0.9, 0.5, 0.1], 10_000, 3)?;
        let by_rho: Vec<String> = [0.9, 0.5, 0.1]
            .iter()
            .map(|r| {
                let row = report.rows.iter().find(|row| row.rho_test == *r).unwrap();
                format!("{:>10.4}", row.auroc)
            })
            .collect();
        println!("{:>8} {}", name, by_rho.join(" "));
    }
    println!("\nThe baseline rides the shortcut: strong in-distribution, inverted under flip.");
    Ok(())
}
