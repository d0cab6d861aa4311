//! Index-derived binary codes: the default layout, a few codes, and an
//! exhaustive injectivity check of one small subvector.
//!
//!     cargo run --example codes

use std::collections::HashSet;

use binplay::codes::{CodeLayout, SubvectorSpec};

fn main() -> binplay::Result<()> {
    let layout = CodeLayout::default();
    println!(
        "default layout: n = {}, {} samples per batch, {} batches",
        layout.len(),
        layout.capacity(),
        layout.batch_capacity()
    );
    for s in layout.index_subvectors() {
        println!("  m = {:2}  p = {:2}  e = {:2}  multiplier = {}", s.bits(), s.prime(), s.exponent(), s.multiplier());
    }

    for (batch, index) in [(1, 1), (1, 2), (2, 1001)] {
        println!("c({index}) in batch {batch}: {}", layout.full_code(batch, index)?);
    }

    let spec = SubvectorSpec::new(8, 3)?;
    let values: HashSet<u64> = (1..=spec.capacity()).map(|i| spec.encode(i)).collect::<Result<_, _>>()?;
    println!(
        "(m = 8, p = 3): {} indices map to {} distinct values",
        spec.capacity(),
        values.len()
    );

    // Neighbouring indices land far apart in Hamming distance.
    let flips: Vec<u32> = (1..spec.capacity())
        .map(|i| Ok((spec.encode(i)? ^ spec.encode(i + 1)?).count_ones()))
        .collect::<binplay::Result<_>>()?;
    let mean = flips.iter().sum::<u32>() as f64 / flips.len() as f64;
    println!("mean bits flipped between consecutive indices: {mean:.3}");
    Ok(())
}
