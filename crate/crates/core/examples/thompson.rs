//! Adaptive assignment among three treatments by Thompson sampling.

use nof1::adaptive::{run_replicates, AdaptiveConfig, ArmTruth};

fn main() -> nof1::error::Result<()> {
    let arms = [("walk", 0.0), ("resistance", 0.5), ("interval", 1.0)]
        .iter()
        .map(|&(id, mean)| ArmTruth { id: id.into(), mean })
        .collect();
    let mut cfg = AdaptiveConfig::new(arms, 1.0, 200, 7);
    cfg.seed = 9;
    let runs = run_replicates(&cfg, 100)?;
    let good = runs.iter().filter(|t| t.best_arm_share(50) > 0.8).count();
    let mean_regret = runs.iter().map(|t| t.cumulative_regret()).sum::<f64>() / runs.len() as f64;
    println!("{good}/100 runs gave the best arm > 80% of the last 50 epochs");
    println!("mean cumulative regret after 200 epochs: {mean_regret:.2}");
    Ok(())
}
