//! Bucket-masked chunk attention on a small sorted sequence: prints the
//! realized weight matrix of each stage for C-SA, SC-SA and G-SA.
//!
//! ```bash
//! cargo run --release -p tbin --example chunk_attention
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tbin::chunk::{block_pair, partition, AttentionSchema, AttentionTrace, BlockOptions};
use tbin::diff::{Graph, Tensor2};
use tbin::nn::BlockParams;

fn print_weights(w: &Tensor2) {
    for r in 0..w.rows() {
        let row: Vec<String> = (0..w.cols())
            .map(|c| if w.get(r, c) == 0.0 { "   .".into() } else { format!("{:4.2}", w.get(r, c)) })
            .collect();
        println!("    {}", row.join(" "));
    }
}

fn main() -> tbin::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let mut draw = |r: usize, c: usize| Tensor2::from_fn(r, c, |_, _| normal.sample(&mut rng));
    let (len, c, d) = (10, 4, 8);
    // Sorted bucket ids; the tail of the last chunk is padding.
    let raw = [0, 0, 1, 1, 1, 1, 2, 2, 3, 3];
    let layout = partition(len, c)?;
    let ids = layout.pad_ids(&raw)?;
    let x = layout.pad_rows(&draw(len, d))?;
    let first = BlockParams::init(d, 2 * d, &mut draw);
    let second = BlockParams::init(d, 2 * d, &mut draw);
    println!("ids {raw:?}, c = {c}, padded to {}", layout.padded_len);

    for schema in AttentionSchema::ALL {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let a = first.map(&mut |t| g.leaf(t.clone()));
        let b = second.map(&mut |t| g.leaf(t.clone()));
        let mut trace = AttentionTrace::default();
        block_pair(&mut g, xv, &ids, &layout, &a, &b, schema, BlockOptions::default(), Some(&mut trace))?;
        println!("\n{schema}");
        for (k, stage) in trace.stages.iter().enumerate() {
            println!("  stage {k}");
            print_weights(stage);
        }
    }
    Ok(())
}
