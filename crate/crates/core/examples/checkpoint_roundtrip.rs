//! Trains briefly, saves a checkpoint, loads it back and confirms the two
//! models predict bit-identically.
//!
//! ```bash
//! cargo run --release -p tbin --example checkpoint_roundtrip
//! ```

use tbin::data::{generate, Split, SyntheticSpec};
use tbin::experiment::fit;
use tbin::model::{load_checkpoint, predictions, save_checkpoint, TrainConfig};

fn main() -> tbin::Result<()> {
    let data = generate(&SyntheticSpec { users: 100, seq_len: 32, ..Default::default() })?;
    let config = TrainConfig { dim: 16, steps: 20, batch_size: 16, ..Default::default() };
    let outcome = fit(&data, &config, |_| {})?;

    let path = std::env::temp_dir().join("tbin-roundtrip.tbin");
    save_checkpoint(&outcome.params, &path)?;
    let loaded = load_checkpoint(&path)?;
    println!("{} parameters, {} bytes", loaded.weights.parameter_count(), std::fs::metadata(&path)?.len());

    let test = data.prepared(&loaded, Split::Test)?;
    let before = predictions(&outcome.params, &test)?;
    let after = predictions(&loaded, &test)?;
    let identical = before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("params equal: {}, {} predictions bit-identical: {identical}", loaded == outcome.params, after.len());
    Ok(())
}
