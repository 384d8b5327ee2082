use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Tensor2};
use crate::error::{Error, Result};
use crate::model::config::TrainConfig;
use crate::model::forward::{forward_graph, predict_prepared, prepare, PreparedSequence, Sample};
use crate::model::metrics::{auc, bce_loss, EvalMetrics};
use crate::model::optim::Optimizer;
use crate::model::params::ModelParams;

/// A sample with its behaviors already hashed and sorted. Samples of the
/// same user can share one sequence.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub user: Tensor2,
    pub target: Tensor2,
    pub label: u8,
    pub prep: Arc<PreparedSequence>,
}

impl PreparedSample {
    pub fn new(params: &ModelParams, sample: &Sample) -> Result<Self> {
        sample.validate(&params.config)?;
        let prep = Arc::new(prepare(params, &sample.behaviors)?);
        Ok(Self::with_sequence(sample, prep))
    }

    /// Reuses an already prepared behavior sequence.
    pub fn with_sequence(sample: &Sample, prep: Arc<PreparedSequence>) -> Self {
        Self { user: sample.user.clone(), target: sample.target.clone(), label: sample.label, prep }
    }
}

pub fn prepare_samples(params: &ModelParams, samples: &[Sample]) -> Result<Vec<PreparedSample>> {
    samples.iter().map(|s| PreparedSample::new(params, s)).collect()
}

/// Mean BCE over `batch` and its gradient for every weight tensor, in
/// [`Weights::visit`](crate::model::Weights::visit) order.
pub fn batch_gradients(params: &ModelParams, batch: &[&PreparedSample]) -> Result<(f64, Vec<Tensor2>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut total = params.weights.zeros_like().leaves().into_iter().cloned().collect::<Vec<_>>();
    let mut loss = 0.0;
    for s in batch {
        let mut g = Graph::new();
        let w = params.weights.bind(&mut g);
        let t = g.leaf(s.target.clone());
        let u = g.leaf(s.user.clone());
        let y = forward_graph(&mut g, &w, &params.config, &s.prep, t, u, None)?;
        let l = g.bce_mean(y, &[f64::from(s.label)])?;
        loss += g.value(l).get(0, 0);
        g.backward(l)?;
        for (acc, v) in total.iter_mut().zip(w.leaves()) {
            acc.add_assign(&g.grad(*v))?;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for t in &mut total {
        t.data_mut().iter_mut().for_each(|v| *v *= inv);
    }
    Ok((loss * inv, total))
}

/// One optimizer update on the mean BCE of `batch`. Returns the loss
/// before the update.
pub fn train_step(params: &mut ModelParams, optimizer: &mut Optimizer, batch: &[&PreparedSample]) -> Result<f64> {
    let (loss, grads) = batch_gradients(params, batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss is {loss}")));
    }
    optimizer.step(&mut params.weights, &grads);
    Ok(loss)
}

pub fn predictions(params: &ModelParams, samples: &[PreparedSample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| predict_prepared(params, &s.prep, &s.target, &s.user)).collect()
}

pub fn evaluate(params: &ModelParams, samples: &[PreparedSample]) -> Result<EvalMetrics> {
    let preds = predictions(params, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    Ok(EvalMetrics { auc: auc(&preds, &labels)?, logloss: bce_loss(&preds, &labels)? })
}

/// One line of the training metrics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub auc: Option<f64>,
    pub logloss: Option<f64>,
}

/// Runs `config.steps` updates with shuffled mini-batches drawn epoch by
/// epoch. Validation metrics are attached every `eval_every` steps and at
/// the last step. `on_record` sees every step.
pub fn train(
    params: &mut ModelParams,
    config: &TrainConfig,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    mut on_record: impl FnMut(&StepRecord),
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train_set[order[cursor]]);
            cursor += 1;
        }
        let loss = train_step(params, &mut optimizer, &batch)?;
        let eval_now = !val_set.is_empty()
            && (step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0));
        let (auc, logloss) = if eval_now {
            let m = evaluate(params, val_set)?;
            (Some(m.auc), Some(m.logloss))
        } else {
            (None, None)
        };
        let record = StepRecord { step, loss, auc, logloss };
        on_record(&record);
        history.push(record);
    }
    Ok(history)
}
