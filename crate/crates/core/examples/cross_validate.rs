//! k-fold cross-validation with per-fold metrics and the pooled summary.
//!
//!     cargo run --release --example cross_validate -- [k]

use concare::data::{generate_synthetic, SyntheticSpec};
use concare::train_eval::{cross_validate, TrainConfig, METRIC_NAMES};

fn main() -> concare::Result<()> {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(4, 2, 400, 5))?;
    let config = TrainConfig {
        max_epochs: 15,
        seed: 5,
        ..TrainConfig::default()
    };
    let result = cross_validate(&raw, k, &config, false)?;

    println!("fold  n_test  best_epoch  {}", METRIC_NAMES.join("  "));
    for f in &result.folds {
        println!(
            "{:>4}  {:>6}  {:>10}  {:.4}  {:.4}  {:.4}",
            f.fold,
            f.test_indices.len(),
            f.best_epoch,
            f.metrics[0],
            f.metrics[1],
            f.metrics[2]
        );
    }
    print!("{}", result.report.to_table());
    Ok(())
}
