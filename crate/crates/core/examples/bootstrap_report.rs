//! Scores a held-out split and summarises it with 100 bootstrap replicates
//! in `mean(std)` form.
//!
//!     cargo run --release --example bootstrap_report

use concare::data::{generate_synthetic, SyntheticSpec};
use concare::train_eval::{bootstrap_eval, fit_holdout, TrainConfig};

fn main() -> concare::Result<()> {
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(4, 2, 400, 21))?;
    let config = TrainConfig {
        max_epochs: 20,
        seed: 21,
        test_fraction: 0.3,
        ..TrainConfig::default()
    };
    let run = fit_holdout(&raw, &config)?;
    let labels = raw.labels(&run.split.test);

    let report = bootstrap_eval(&run.test_scores, &labels, 100, 21)?;
    println!("{} test cases, 100 bootstrap replicates", labels.len());
    print!("{}", report.to_table());
    Ok(())
}
