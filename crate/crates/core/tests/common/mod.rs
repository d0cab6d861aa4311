#![allow(dead_code)]

use std::path::PathBuf;

use binplay::harness::{load_mnist_dir, Dataset, ExperimentConfig};

pub fn data_dir() -> PathBuf {
    std::env::var_os("BINPLAY_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")))
}

pub fn mnist() -> (Dataset, Dataset) {
    load_mnist_dir(&data_dir()).expect("MNIST IDX files under BINPLAY_DATA or data/mnist")
}

/// Five batches of 40 samples with small networks; runs in seconds.
pub const TINY: &str = "\
data.per_class = 20
data.test_limit = 300
autoencoder.hidden = 32
autoencoder.warmup_epochs = 1
autoencoder.assign_epoch_cap = 3
autoencoder.decoder_epochs = 3
autoencoder.minibatch = 16
classifier.hidden = 16
classifier.epochs = 2
classifier.minibatch_current = 8
classifier.minibatch_replay = 8
";

pub fn tiny_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::parse(TINY).expect("tiny config");
    cfg.seed = seed;
    cfg.data.dir = Some(data_dir());
    cfg
}
