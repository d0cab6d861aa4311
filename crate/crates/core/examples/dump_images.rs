//! Writes the reconstruction of the first sample after each of two batches
//! as PGM files, showing how well an early sample survives later training.
//!
//!     BINPLAY_DATA=data/mnist cargo run --release --example dump_images -- [dest]

use std::path::PathBuf;

use binplay::harness::{dump_images, run_binplay, Experiment, ExperimentConfig};

fn main() -> binplay::Result<()> {
    let dest = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("images"));
    let mut config = ExperimentConfig::parse("data.per_class = 100\ndata.test_limit = 500\nclassifier.epochs = 2\n")?;
    if std::env::var_os("BINPLAY_DATA").is_none() {
        config.data.dir = Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")));
    }
    let exp = Experiment::load(config)?;
    let run = std::env::temp_dir().join("binplay_dump_images");
    let _ = std::fs::remove_dir_all(&run);
    run_binplay(&exp, &run, Some(2))?;
    for batch in 1..=2 {
        for path in dump_images(&run, &[1, 2, 3], Some(batch), &dest)? {
            println!("{}", path.display());
        }
    }
    Ok(())
}
