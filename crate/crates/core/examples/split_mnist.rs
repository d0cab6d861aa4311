//! The full five-batch class-incremental run, next to both baselines.
//!
//!     BINPLAY_DATA=data/mnist cargo run --release --example split_mnist -- [run-dir] [seed]

use std::path::PathBuf;

use binplay::harness::{run_baseline, run_binplay, BaselineMode, Experiment, ExperimentConfig};

fn main() -> binplay::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs/split_mnist"));
    let mut config = ExperimentConfig::default();
    if let Some(seed) = args.next() {
        config.seed = seed.parse().map_err(|_| binplay::Error::Config("seed must be an integer".into()))?;
    }
    if std::env::var_os("BINPLAY_DATA").is_none() {
        config.data.dir = Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")));
    }
    let exp = Experiment::load(config)?;

    let binplay = run_binplay(&exp, &out, None)?;
    print!("{}", binplay.to_csv());
    for mode in [BaselineMode::Finetune, BaselineMode::Joint] {
        let m = run_baseline(&exp, mode, None)?;
        println!("{mode}: final accuracy {:.3}", m.final_accuracy().unwrap_or(0.0));
    }
    println!("run directory: {}", out.display());
    Ok(())
}
