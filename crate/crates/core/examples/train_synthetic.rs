//! Trains the default model on the default synthetic task and reports
//! held-out AUC / LogLoss.
//!
//! ```bash
//! cargo run --release -p tbin --example train_synthetic -- [steps]
//! ```

use std::time::Instant;

use tbin::data::{generate, Split, SyntheticSpec};
use tbin::model::{evaluate, train, ModelParams, TrainConfig};

fn main() -> tbin::Result<()> {
    let steps = std::env::args().nth(1).map_or(600, |s| s.parse().expect("steps"));
    let spec = SyntheticSpec::default();
    let data = generate(&spec)?;
    let config = TrainConfig { steps, ..TrainConfig::default() };
    let mut params =
        ModelParams::init(config.model_config(spec.behavior_dim, spec.behavior_dim, spec.user_dim))?;

    let train_set = data.prepared(&params, Split::Train)?;
    let val_set = data.prepared(&params, Split::Val)?;
    let test_set = data.prepared(&params, Split::Test)?;
    println!(
        "{} train / {} val / {} test samples, {} parameters",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        params.weights.parameter_count()
    );
    let before = evaluate(&params, &test_set)?;
    println!("untrained: auc {:.4} logloss {:.4}", before.auc, before.logloss);

    let start = Instant::now();
    train(&mut params, &config, &train_set, &val_set, |r| {
        if let (Some(auc), Some(ll)) = (r.auc, r.logloss) {
            println!(
                "step {:>5}  loss {:.4}  val auc {:.4}  val logloss {:.4}  ({:.1}s)",
                r.step,
                r.loss,
                auc,
                ll,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    let after = evaluate(&params, &test_set)?;
    println!("test: auc {:.4} logloss {:.4}", after.auc, after.logloss);
    Ok(())
}
