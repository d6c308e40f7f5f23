//! Trains on a 70/15/15 split of a synthetic cohort, saves the model and
//! reports held-out metrics.
//!
//!     cargo run --release --example train_holdout -- [epochs]

use concare::data::{generate_synthetic, SyntheticSpec};
use concare::model::TrainedModel;
use concare::train_eval::{fit_holdout, TrainConfig};

fn main() -> concare::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let mut spec = SyntheticSpec::new(4, 2, 600, 3);
    spec.label_noise = 0.05;
    let (raw, _) = generate_synthetic(&spec)?;

    let config = TrainConfig {
        max_epochs: epochs,
        seed: 3,
        ..TrainConfig::default()
    };
    let run = fit_holdout(&raw, &config)?;

    println!("epoch  train_loss  ce       decorr   val_auprc");
    for r in &run.log.records {
        println!(
            "{:>5}  {:.5}     {:.5}  {:.5}  {:.4}",
            r.epoch,
            r.train_loss,
            r.train_cross_entropy,
            r.train_decorrelation,
            r.val_auprc.unwrap_or(f64::NAN)
        );
    }
    println!("best epoch {} (stopped early: {})", run.log.best_epoch, run.log.stopped_early);
    if let Some(report) = &run.test_report {
        print!("{}", report.to_table());
    }

    let path = std::env::temp_dir().join("concare-example-model.json");
    run.model.save(&path)?;
    let reloaded = TrainedModel::load(&path)?;
    let prepared = reloaded.prepare(&raw)?;
    assert_eq!(reloaded.scores(&prepared, &run.split.test), run.test_scores);
    println!("model saved to {} and reloaded with identical scores", path.display());
    Ok(())
}
