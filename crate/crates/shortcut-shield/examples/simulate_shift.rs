//! The anti-causal generator and its distribution-shift family.
//!
//! Labels `(Y, V)` are drawn jointly with correlation `ρ`, then features
//! are generated *from* the labels: a core block driven by `Y` and a
//! shortcut block driven by `V`. Shifting `ρ` changes only how often the
//! two labels agree — the class marginal `P(Y)` and the feature
//! mechanism `P(X | Y, V)` stay fixed — so a model that leans on the
//! shortcut block meets exactly the same features at test time, wired to
//! the wrong label.
//!
//! ```bash
//! cargo run --example simulate_shift
//! ```

use shortcut_shield::simulator::{sample_dataset, DistributionSpec};

fn block_mean(ds: &shortcut_shield::simulator::Dataset, range: std::ops::Range<usize>, pick: impl Fn(u8, u8) -> bool) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..ds.n() {
        if pick(ds.y[i], ds.v[i]) {
            let row = ds.x.row(i);
            sum += row[range.clone()].iter().sum::<f64>();
            count += range.len();
        }
    }
    sum / count as f64
}

fn main() -> shortcut_shield::Result<()> {
    let spec = DistributionSpec::default();
    println!("base distribution: rho = {}, P(Y=1) = {}", spec.rho, spec.p_y1);
    println!(
        "features: {} core (driven by Y) + {} shortcut (driven by V) = {} total\n",
        spec.d_core,
        spec.d_shortcut,
        spec.dim()
    );

    // The label joint across the shift family: P(Y=1) never moves, the
    // agreement probability does.
    println!("label joint across the family:");
    println!("{:>6} {:>8} {:>10} {:>10} {:>10} {:>10}", "rho", "P(V=1)", "P(0,0)", "P(0,1)", "P(1,0)", "P(1,1)");
    for rho in [0.9, 0.7, 0.5, 0.3, 0.1] {
        let shifted = spec.at_rho(rho)?;
        println!(
            "{:>6} {:>8.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            rho,
            shifted.p_v1()?,
            shifted.joint_prob(0, 0)?,
            shifted.joint_prob(0, 1)?,
            shifted.joint_prob(1, 0)?,
            shifted.joint_prob(1, 1)?
        );
    }

    // Empirically: the core block follows Y and the shortcut block
    // follows V, at every rho.
    let core = 0..spec.d_core;
    let shortcut = spec.d_core..spec.dim();
    println!("\nper-coordinate block means from n = 20000 samples:");
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>14}",
        "rho", "core|Y=0", "core|Y=1", "short|V=0", "short|V=1", "agree(Y,V)"
    );
    for rho in [0.9, 0.5, 0.1] {
        let shifted = spec.at_rho(rho)?;
        let ds = sample_dataset(&shifted, 20_000, 1)?;
        let agree = ds.y.iter().zip(&ds.v).filter(|(y, v)| y == v).count() as f64 / ds.n() as f64;
        println!(
            "{:>6} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>14.3}",
            rho,
            block_mean(&ds, core.clone(), |y, _| y == 0),
            block_mean(&ds, core.clone(), |y, _| y == 1),
            block_mean(&ds, shortcut.clone(), |_, v| v == 0),
            block_mean(&ds, shortcut.clone(), |_, v| v == 1),
            agree
        );
    }
    println!(
        "\nThe feature mechanism is identical at every rho; only the Y–V \
         agreement rate moves.\nAt rho = 0.9 the shortcut block predicts Y \
         90% of the time — and betrays it at rho = 0.1."
    );
    Ok(())
}
