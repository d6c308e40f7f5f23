//! Generates a synthetic cohort, writes it as line-delimited JSON and reads it back.
//!
//!     cargo run --release --example generate_cohort -- /tmp/cohort

use std::path::PathBuf;

use concare::data::{generate_synthetic, load_dataset, save_dataset, SyntheticSpec};

fn main() -> concare::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("concare-cohort"), PathBuf::from);
    std::fs::create_dir_all(&dir).map_err(|e| concare::Error::Io { path: dir.clone(), source: e })?;

    // two fast and two slow features, one interaction between f0 and flag1
    let mut spec = SyntheticSpec::new(4, 2, 500, 7);
    spec.label_noise = 0.05;
    spec.interactions = vec![(0, 1)];
    let (dataset, manifest) = generate_synthetic(&spec)?;

    let path = dir.join("dataset.jsonl");
    save_dataset(&dataset, &path)?;
    manifest.save(dir.join("manifest.json"))?;

    let back = load_dataset(&path)?;
    assert_eq!(back.cases, dataset.cases);

    let visits: Vec<usize> = dataset.cases.iter().map(|c| c.timestamps.len()).collect();
    let mean_visits = visits.iter().sum::<usize>() as f64 / visits.len() as f64;
    println!("wrote {} cases to {}", dataset.len(), path.display());
    println!("features: {}", dataset.feature_names.join(", "));
    println!("baseline: {}", dataset.baseline_names.join(", "));
    println!("prevalence {:.3}, label threshold {:.3}", manifest.prevalence, manifest.threshold);
    println!("visits per case: mean {mean_visits:.1}, min {}, max {}", visits.iter().min().unwrap(), visits.iter().max().unwrap());
    Ok(())
}
