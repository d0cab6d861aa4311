//! Checkpoint sizes stay fixed while the number of remembered samples grows.
//! Uses a small, fast configuration.
//!
//!     BINPLAY_DATA=data/mnist cargo run --release --example memory_report

use std::path::PathBuf;

use binplay::harness::run::memory_csv;
use binplay::harness::{memory_report, run_binplay, Experiment, ExperimentConfig};

fn main() -> binplay::Result<()> {
    let config = ExperimentConfig::parse(
        "data.per_class = 40\ndata.test_limit = 500\n\
         autoencoder.hidden = 64\nautoencoder.warmup_epochs = 1\nautoencoder.assign_epoch_cap = 3\n\
         autoencoder.decoder_epochs = 3\nclassifier.hidden = 32\nclassifier.epochs = 2\n",
    )?;
    let mut config = config;
    if std::env::var_os("BINPLAY_DATA").is_none() {
        config.data.dir = Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")));
    }
    let exp = Experiment::load(config)?;
    let out = std::env::temp_dir().join("binplay_memory_report");
    let _ = std::fs::remove_dir_all(&out);
    run_binplay(&exp, &out, None)?;
    let rows = memory_report(&out)?;
    print!("{}", memory_csv(&rows));
    let samples: Vec<usize> = exp.scenario.batches.iter().map(|b| b.data.len()).collect();
    println!("samples per batch: {samples:?}");
    Ok(())
}
