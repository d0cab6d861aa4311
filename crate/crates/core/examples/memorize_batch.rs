//! Trains the autoencoder on one batch of 400 digits (classes 0 and 1) and
//! reports how well it reproduces them from their codes alone.
//!
//!     BINPLAY_DATA=data/mnist cargo run --release --example memorize_batch

use std::path::PathBuf;
use std::time::Instant;

use binplay::codes::CodeLayout;
use binplay::harness::{build_scenario, load_mnist_dir};
use binplay::replay::{AutoencoderConfig, AutoencoderState, BatchLedger, Phase};
use binplay::seeds;

fn data_dir() -> PathBuf {
    std::env::var_os("BINPLAY_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")))
}

fn main() -> binplay::Result<()> {
    let (train, _) = load_mnist_dir(&data_dir())?;
    let seed = 0;
    let scenario = build_scenario(&train, &[vec![0, 1]], 200, &mut seeds::stream(seed, seeds::SCENARIO))?;
    let images = &scenario.batches[0].data.images;

    let config = AutoencoderConfig::default();
    let mut ae = AutoencoderState::new(
        CodeLayout::default(),
        images.ncols(),
        config.hidden,
        &mut seeds::stream(seed, seeds::AE_INIT),
    )?;
    let mut ledger = BatchLedger::new();
    ledger.push(images.nrows(), vec![0, 1])?;

    let started = Instant::now();
    let log = ae.train_batch(images, &ledger, &config, &mut seeds::batch_stream(seed, seeds::AE_TRAIN, 1))?;
    for phase in [Phase::Warmup, Phase::Assignment, Phase::Decoder] {
        if let Some(last) = log.phase_rows(phase).last() {
            println!("{phase:>8}: {} epochs, last recon mse {:.4}", last.epoch + 1, last.recon_mse);
        }
    }
    println!(
        "assignment {} after {} epochs",
        if log.stable { "stable" } else { "capped" },
        log.assignment_epochs
    );
    println!(
        "per-pixel mse of reconstructions from codes: {:.4} ({:.1}s)",
        log.recon_mse,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
