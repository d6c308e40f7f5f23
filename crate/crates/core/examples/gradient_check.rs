//! Compares analytic gradients of a tiny model with central differences,
//! parameter by parameter.
//!
//!     cargo run --release --example gradient_check

use concare::data::PatientCase;
use concare::model::{ConCare, ModelConfig};
use concare::numerics::grad_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> concare::Result<()> {
    let mut config = ModelConfig::new(3, 2);
    config.hidden = 8;
    config.heads = 2;
    config.ffn = 16;
    let (net, mut store) = ConCare::new(config, 1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // move biases and gains away from their exact initial values
    for e in store.entries_mut() {
        for v in e.value.values_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let cases: Vec<PatientCase> = (0..2)
        .map(|i| PatientCase {
            id: format!("p{i}"),
            baseline: vec![rng.random_range(-1.0..1.0), f64::from(i as u8)],
            timestamps: vec![0.0, 3.5, 11.0, 30.25],
            records: (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect()).collect(),
            label: i as u8,
        })
        .collect();
    let batch: Vec<&PatientCase> = cases.iter().collect();

    let (loss, grads) = net.batch_loss_and_grad(&store, &batch, 1.0);
    store.zero_grad();
    store.accumulate(&grads);
    let report = grad_check(&store, 1e-5, |p| net.batch_loss(p, &batch, 1.0).total);

    println!("loss {:.6} (ce {:.6}, decorrelation {:.6})", loss.total, loss.cross_entropy, loss.decorrelation);
    println!("{:<24} {:>10}", "parameter", "rel error");
    for e in &report.entries {
        println!("{:<24} {:>10.2e}", e.name, e.max_rel_error);
    }
    println!("max relative error {:.2e}", report.max_rel_error());
    Ok(())
}
