//! Finite-difference check of the full model gradient (every parameter
//! group) on one sample, for each attention schema.
//!
//! ```bash
//! cargo run --release -p tbin --example grad_check
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tbin::chunk::AttentionSchema;
use tbin::diff::{grad_check, Tensor2};
use tbin::model::{forward_graph, prepare, ModelParams, TrainConfig};

fn main() -> tbin::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut randn = |r, c| Tensor2::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let behaviors = randn(16, 6);
    let target = randn(1, 6);
    let user = randn(1, 3);

    for schema in AttentionSchema::ALL {
        let cfg = TrainConfig { dim: 8, chunk_size: 4, blocks: 2, hash_bits: 2, head_hidden: 8, schema, ..Default::default() };
        let params = ModelParams::init(cfg.model_config(6, 6, 3))?.randomized(0.3, 99);
        let prep = prepare(&params, &behaviors)?;
        let leaves: Vec<Tensor2> = params.weights.leaves().into_iter().cloned().collect();
        let report = grad_check(
            |g, p| {
                let w = params.weights.zip_leaves(p)?;
                let t = g.leaf(target.clone());
                let u = g.leaf(user.clone());
                let y = forward_graph(g, &w, &params.config, &prep, t, u, None)?;
                g.bce_mean(y, &[1.0])
            },
            &leaves,
            1e-5,
            1e-4,
        )?;
        println!("{schema}: {} groups, max rel err {:.2e}, passed {}", leaves.len(), report.max_rel_err, report.passed);
        for (name, err) in params.weights.names().iter().zip(&report.per_param) {
            println!("    {name:<40} {err:.2e}");
        }
    }
    Ok(())
}
