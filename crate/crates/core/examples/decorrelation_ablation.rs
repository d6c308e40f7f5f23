//! Trains the same split with and without the cross-head decorrelation
//! penalty and compares held-out metrics and the final penalty value.
//!
//!     cargo run --release --example decorrelation_ablation

use concare::data::{generate_synthetic, SyntheticSpec};
use concare::train_eval::{fit_holdout, TrainConfig};

fn main() -> concare::Result<()> {
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(4, 2, 500, 13))?;
    for lambda in [1.0, 0.0] {
        let config = TrainConfig {
            lambda_decorr: lambda,
            max_epochs: 20,
            seed: 13,
            ..TrainConfig::default()
        };
        let run = fit_holdout(&raw, &config)?;
        let last = run.log.records.last().expect("at least one epoch");
        println!("lambda {lambda}: final epoch decorrelation {:.5}", last.train_decorrelation);
        if let Some(report) = &run.test_report {
            print!("{}", report.to_table());
        }
    }
    Ok(())
}
