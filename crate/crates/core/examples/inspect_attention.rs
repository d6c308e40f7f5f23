//! Trains on a cohort with a planted feature × flag interaction, then prints
//! the learned decay rates and head-averaged self-attention for each flag value.
//!
//!     cargo run --release --example inspect_attention

use concare::data::{generate_synthetic, SyntheticSpec};
use concare::inspect::{decay_table, mean_self_attention, position_names, CaseFilter};
use concare::train_eval::{fit_holdout, TrainConfig};

fn main() -> concare::Result<()> {
    let mut spec = SyntheticSpec::new(4, 2, 600, 9);
    spec.interactions = vec![(0, 1)];
    let (raw, _) = generate_synthetic(&spec)?;
    let config = TrainConfig {
        max_epochs: 25,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = fit_holdout(&raw, &config)?;
    let model = &run.model;

    println!("feature     decay_rate");
    for (name, beta) in decay_table(model) {
        println!("{name:<10}  {beta:.4}");
    }

    let prepared = model.prepare(&raw)?;
    let names = position_names(model);
    for filter in ["flag1=1", "flag1=0"] {
        let selected = filter.parse::<CaseFilter>()?.select(&raw)?;
        let grids = mean_self_attention(model, &prepared, &selected)?;
        println!("\n{filter}: {} cases, attention averaged over {} heads", selected.len(), grids.len());
        print!("{:<10}", "");
        for n in &names {
            print!("{n:>10}");
        }
        println!();
        for (i, row_name) in names.iter().enumerate() {
            print!("{row_name:<10}");
            for j in 0..names.len() {
                let mean = grids.iter().map(|g| g[i][j]).sum::<f64>() / grids.len() as f64;
                print!("{mean:>10.4}");
            }
            println!();
        }
    }
    Ok(())
}
