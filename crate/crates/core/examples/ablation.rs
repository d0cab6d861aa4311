//! Classifier training variants compared on a shared autoencoder:
//! raw current samples with argmax replay labels, then autoencoder
//! preprocessing, then soft targets.
//!
//!     BINPLAY_DATA=data/mnist cargo run --release --example ablation -- 0 1 2

use std::path::PathBuf;

use binplay::harness::{ablation, load_mnist_dir, Experiment, ExperimentConfig};

fn main() -> binplay::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    let config = ExperimentConfig::default();
    let dir = std::env::var_os("BINPLAY_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")));
    let (train, test) = load_mnist_dir(&dir)?;
    let exp = Experiment::from_datasets(config, &train, &test)?;
    let table = ablation(&exp, &train, &seeds, None)?;
    print!("{}", table.to_csv());
    Ok(())
}
