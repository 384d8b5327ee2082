//! Matched-seed comparison of attention schemas on a small synthetic task.
//!
//! ```bash
//! cargo run --release -p tbin --example ablation -- [seeds]
//! ```

use tbin::chunk::AttentionSchema;
use tbin::data::{generate, SyntheticSpec};
use tbin::experiment::{ablate, Variant};
use tbin::model::TrainConfig;

fn main() -> tbin::Result<()> {
    let seeds = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seeds"));
    let data = generate(&SyntheticSpec { users: 200, seq_len: 64, ..Default::default() })?;
    let base = TrainConfig { dim: 16, steps: 200, batch_size: 16, learning_rate: 3e-3, eval_every: 0, ..Default::default() };
    let variants = [
        Variant::Baseline,
        Variant::Schema(AttentionSchema::Chunk),
        Variant::Schema(AttentionSchema::Global),
        Variant::Blocks(2),
        Variant::Length { divisor: 2 },
    ];
    let report = ablate(&data, &base, &variants, seeds, |r| {
        eprintln!("{} seed {}: auc {:.4}", r.variant, r.seed, r.auc);
    })?;
    print!("{}", report.table());
    Ok(())
}
