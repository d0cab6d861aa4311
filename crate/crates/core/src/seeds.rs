//! Per-component random streams derived from one master seed.
//!
//! Each component XORs the master seed with its own tag, and batch-scoped
//! work additionally selects a ChaCha stream by batch number. Adding a
//! component therefore never shifts the numbers another one sees, and a run
//! resumed from disk at batch `b` draws exactly what an uninterrupted run
//! would have.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SCENARIO: u64 = 0x5343_454e_4152_494f;
pub const AE_INIT: u64 = 0x4145_5f49_4e49_5400;
pub const AE_TRAIN: u64 = 0x4145_5f54_5241_494e;
pub const CLF_INIT: u64 = 0x434c_465f_494e_4954;
pub const CLF_TRAIN: u64 = 0x434c_465f_5452_4e00;
pub const CLF_REPLAY: u64 = 0x434c_465f_5250_4c59;
pub const TEST_SUBSET: u64 = 0x5445_5354_5355_4200;

pub fn stream(master: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master ^ tag)
}

pub fn batch_stream(master: u64, tag: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = stream(master, tag);
    rng.set_stream(batch);
    rng
}
