//! A bucket that straddles a chunk boundary: plain chunk attention cannot
//! connect its halves, the half-chunk shifted stage can.
//!
//! ```bash
//! cargo run --release -p tbin --example shift_connectivity
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tbin::chunk::{block_pair, partition, shift_indices, AttentionSchema, AttentionTrace, BlockOptions};
use tbin::diff::{Graph, Tensor2};
use tbin::nn::BlockParams;

fn main() -> tbin::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let mut draw = |r: usize, c: usize| Tensor2::from_fn(r, c, |_, _| normal.sample(&mut rng));
    let ids = vec![0, 0, 0, 1, 1, 2, 2, 2];
    let layout = partition(8, 4)?;
    println!("ids {ids:?}; chunks [0..4) [4..8); bucket 1 spans rows 3 and 4");
    println!("shifted order {:?}", shift_indices(8, 2));

    let x = draw(8, 4);
    let first = BlockParams::init(4, 8, &mut draw);
    let second = BlockParams::init(4, 8, &mut draw);
    let mut g = Graph::new();
    let xv = g.leaf(x);
    let a = first.map(&mut |t| g.leaf(t.clone()));
    let b = second.map(&mut |t| g.leaf(t.clone()));
    let mut trace = AttentionTrace::default();
    block_pair(&mut g, xv, &ids, &layout, &a, &b, AttentionSchema::ShiftedChunk, BlockOptions::default(), Some(&mut trace))?;

    for (name, stage) in ["C-SA", "SC-SA"].iter().zip(&trace.stages) {
        let cross: f64 = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|(i, j)| i / 4 != j / 4)
            .map(|(i, j)| stage.get(i, j))
            .sum();
        println!("{name:>6}: w[3][4] = {:.4}, w[4][3] = {:.4}, total cross-chunk weight {cross:.4}", stage.get(3, 4), stage.get(4, 3));
    }
    Ok(())
}
