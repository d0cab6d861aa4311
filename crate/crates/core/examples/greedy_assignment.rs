//! Greedy latent-to-code matching: order dependence and comparison with the
//! best bijection found by brute force.
//!
//!     cargo run --example greedy_assignment

use binplay::assign::{greedy_assign, shuffle_order};
use binplay::codes::BinaryCode;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn main() -> binplay::Result<()> {
    let book = [BinaryCode::from_bits(&[true, true]), BinaryCode::from_bits(&[true, false])];
    let z = array![[0.9, 0.2], [0.8, 0.1]];
    for order in [[0, 1], [1, 0]] {
        let a = greedy_assign(&z, &book, &order)?;
        println!("visit {order:?}: codes {:?}, total loss {:.2}", a.codes(), a.total_loss());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (count, width) = (5, 6);
    let book: Vec<BinaryCode> = (0..count)
        .map(|_| BinaryCode::from_bits(&(0..width).map(|_| rng.random_bool(0.5)).collect::<Vec<_>>()))
        .collect();
    let z = Array2::from_shape_fn((count, width), |_| rng.random_range(-1.5..1.5));
    let greedy = greedy_assign(&z, &book, &shuffle_order(count, &mut rng))?;
    let best = permutations(count)
        .iter()
        .map(|p| (0..count).map(|s| book[p[s]].distance_sq(z.row(s).as_slice().unwrap())).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    println!("random instance: greedy {:.3} vs optimal {best:.3}", greedy.total_loss());
    Ok(())
}
