use crate::chunk::{block_pair, partition, AttentionTrace, ChunkLayout};
use crate::diff::{Graph, Tensor2, Var};
use crate::error::{Error, Result};
use crate::interest::{aggregate, attention_scores, pool_chunks};
use crate::lsh::{bucket_ids, hash_codes, HashAssignment};
use crate::model::config::ModelConfig;
use crate::model::params::{ModelParams, Weights};

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `1 x d_u`.
    pub user: Tensor2,
    /// `1 x d_t`.
    pub target: Tensor2,
    /// `L x d_b`, oldest first.
    pub behaviors: Tensor2,
    pub label: u8,
}

impl Sample {
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Contract(format!("label must be 0 or 1, got {}", self.label)));
        }
        if self.behaviors.rows() == 0 {
            return Err(Error::Contract("behavior sequence is empty".into()));
        }
        let checks = [
            ("user", self.user.shape(), (1, config.user_dim)),
            ("target", self.target.shape(), (1, config.target_dim)),
        ];
        for (op, got, want) in checks {
            if got != want {
                return Err(Error::dim(op, got, want));
            }
        }
        if self.behaviors.cols() != config.behavior_dim {
            return Err(Error::dim("behaviors", self.behaviors.shape(), (0, config.behavior_dim)));
        }
        Ok(())
    }
}

/// Behaviors after hashing, stable sorting and chunk padding. Depends only
/// on the fixed projection, so it can be computed once per sample.
#[derive(Clone, Debug)]
pub struct PreparedSequence {
    /// `L x d_b` rows in bucket order (no padding).
    pub sorted: Tensor2,
    /// Bucket id per padded row.
    pub ids: Vec<u64>,
    pub layout: ChunkLayout,
    pub assignment: HashAssignment,
}

pub fn prepare(params: &ModelParams, behaviors: &Tensor2) -> Result<PreparedSequence> {
    let cfg = &params.config;
    let behaviors = match cfg.max_len {
        Some(max) if behaviors.rows() > max => behaviors.slice_rows(behaviors.rows() - max, max),
        _ => behaviors.clone(),
    };
    let codes = hash_codes(&behaviors, &params.projection)?;
    let assignment = HashAssignment::from_ids(bucket_ids(&codes)?);
    let sorted = assignment.apply(&behaviors)?;
    let layout = partition(sorted.rows(), cfg.chunk_size)?;
    let ids = layout.pad_ids(&assignment.sorted_ids())?;
    Ok(PreparedSequence { sorted, ids, layout, assignment })
}

/// Runs the input projection and all block pairs; returns the
/// `padded_len x d` sequence in sorted order.
pub fn encode(
    g: &mut Graph,
    weights: &Weights<Var>,
    config: &ModelConfig,
    prep: &PreparedSequence,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let xb = g.leaf(prep.sorted.clone());
    let mut h = weights.input.apply(g, xb)?;
    if prep.layout.pad_count > 0 {
        let pad = g.leaf(Tensor2::zeros(prep.layout.pad_count, config.dim));
        h = g.concat_rows(&[h, pad])?;
    }
    for pair in weights.blocks.chunks(2) {
        h = block_pair(
            g,
            h,
            &prep.ids,
            &prep.layout,
            &pair[0],
            &pair[1],
            config.schema,
            config.block_options(),
            trace.as_deref_mut(),
        )?;
    }
    Ok(h)
}

/// Full forward pass up to the click probability (`1 x 1`).
pub fn forward_graph(
    g: &mut Graph,
    weights: &Weights<Var>,
    config: &ModelConfig,
    prep: &PreparedSequence,
    target: Var,
    user: Var,
    trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let h = encode(g, weights, config, prep, trace)?;
    let interests = pool_chunks(g, h, &prep.layout)?;
    let scores = attention_scores(g, interests.vectors, target, &weights.target_attention)?;
    let xi = aggregate(g, interests.vectors, scores)?;
    let features = g.concat_cols(&[xi, target, user])?;
    let logit = weights.head.apply(g, features)?;
    Ok(g.sigmoid(logit))
}

pub fn predict_prepared(
    params: &ModelParams,
    prep: &PreparedSequence,
    target: &Tensor2,
    user: &Tensor2,
) -> Result<f64> {
    let mut g = Graph::new();
    let w = params.weights.bind(&mut g);
    let t = g.leaf(target.clone());
    let u = g.leaf(user.clone());
    let y = forward_graph(&mut g, &w, &params.config, prep, t, u, None)?;
    Ok(g.value(y).get(0, 0))
}

/// Click probability for one sample.
pub fn predict(params: &ModelParams, sample: &Sample) -> Result<f64> {
    sample.validate(&params.config)?;
    let prep = prepare(params, &sample.behaviors)?;
    predict_prepared(params, &prep, &sample.target, &sample.user)
}

/// Encoder output for every behavior, back in the original order with
/// padding dropped (`L x d`).
pub fn item_outputs(params: &ModelParams, behaviors: &Tensor2) -> Result<Tensor2> {
    let prep = prepare(params, behaviors)?;
    let mut g = Graph::new();
    let w = params.weights.bind(&mut g);
    let h = encode(&mut g, &w, &params.config, &prep, None)?;
    let real = g.value(h).slice_rows(0, prep.layout.len);
    prep.assignment.restore(&real)
}

/// Attention weights realized by every attention stage of the encoder.
pub fn attention_trace(params: &ModelParams, behaviors: &Tensor2) -> Result<(PreparedSequence, AttentionTrace)> {
    let prep = prepare(params, behaviors)?;
    let mut g = Graph::new();
    let w = params.weights.bind(&mut g);
    let mut trace = AttentionTrace::default();
    encode(&mut g, &w, &params.config, &prep, Some(&mut trace))?;
    Ok((prep, trace))
}
