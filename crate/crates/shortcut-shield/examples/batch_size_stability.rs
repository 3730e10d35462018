//! Marginal vs conditional penalties at small batch sizes.
//!
//! The class-conditional MMD penalty compares `V`-groups inside each
//! class, so every minibatch must populate all four `(y, v)` cells —
//! and when the class marginal is skewed and batches are small, the
//! rare cells hold only a handful of examples, making the penalty's
//! gradient noisy. The marginal penalty only needs the two `V`-groups.
//! This example trains both at batch size 16 on skewed data
//! (`P(Y=1) = 0.3`) across several seeds and compares the seed-to-seed
//! spread of shifted-test AUROC.
//!
//! ```bash
//! cargo run --example batch_size_stability
//! ```

use shortcut_shield::evaluation::evaluate_grid;
use shortcut_shield::simulator::{sample_dataset, DistributionSpec};
use shortcut_shield::trainer::{train, MethodSpec, TrainConfig};
use shortcut_shield::weights::{compute_weights, estimate_stats};

fn spread(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

fn main() -> shortcut_shield::Result<()> {
    let spec = DistributionSpec { p_y1: 0.3, ..DistributionSpec::shortcut_prone() };
    let seeds = [0u64, 1, 2, 3, 4];
    println!(
        "skewed source: P(Y=1) = {}, rho = {}, batch size 16, shifted test at rho = 0.1\n",
        spec.p_y1, spec.rho
    );

    let mut results: Vec<(&str, Vec<f64>)> = Vec::new();
    for label in ["wMMD-T", "cMMD-T"] {
        let method = MethodSpec::from_label(label)?;
        let mut aurocs = Vec::new();
        for &seed in &seeds {
            let ds = sample_dataset(&spec, 2000, seed)?;
            let w = compute_weights(&estimate_stats(&ds)?, &ds)?;
            let mut cfg = TrainConfig { batch_size: 16, seed, ..TrainConfig::default() };
            cfg.objective.alpha = 1e3;
            cfg.objective.kernel.gamma = 100.0;
            let model = train(&ds, &w, &method, &cfg)?;
            let report = evaluate_grid(&model.params, label, &spec, &[0.1], 5000, seed)?;
            aurocs.push(report.rows[0].auroc);
        }
        results.push((label, aurocs));
    }

    println!("{:>8} {}", "method", "AUROC per seed");
    for (label, aurocs) in &results {
        let cells: Vec<String> = aurocs.iter().map(|a| format!("{a:.4}")).collect();
        println!("{label:>8} {}", cells.join("  "));
    }
    println!("\n{:>8} {:>10} {:>12}", "method", "mean", "std");
    for (label, aurocs) in &results {
        let (m, s) = spread(aurocs);
        println!("{label:>8} {m:>10.4} {s:>12.4}");
    }
    println!(
        "\nThe conditional penalty's starved (y, v) cells show up as \
         seed-to-seed instability;\nthe marginal penalty, fed by full \
         v-groups, stays put."
    );
    Ok(())
}
