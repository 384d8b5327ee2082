//! Chunk pooling into interest vectors and target attention over them.

use crate::chunk::ChunkLayout;
use crate::diff::{Graph, Tensor2, Var};
use crate::error::{Error, Result};
use crate::nn::{param_tree, Linear, Mlp};

/// `target` maps the target item into model space; `score` rates one
/// `[interest ‖ target]` row.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetAttentionParams<T> {
    pub target: Linear<T>,
    pub score: Mlp<T>,
}
param_tree!(TargetAttentionParams { leaves: [], nested: [target, score] });

impl TargetAttentionParams<Tensor2> {
    pub fn init(
        target_dim: usize,
        dim: usize,
        hidden: usize,
        draw: &mut dyn FnMut(usize, usize) -> Tensor2,
    ) -> Self {
        Self {
            target: Linear { w: draw(target_dim, dim), b: Tensor2::zeros(1, dim) },
            score: Mlp {
                hidden: Linear { w: draw(2 * dim, hidden), b: Tensor2::zeros(1, hidden) },
                out: Linear { w: draw(hidden, 1), b: Tensor2::zeros(1, 1) },
            },
        }
    }
}

/// Pooled interest vectors, one row per chunk holding at least one real row.
#[derive(Clone, Debug)]
pub struct InterestSet {
    pub vectors: Var,
    /// Real-row count of every chunk of the layout, including dropped ones.
    pub chunk_validity: Vec<usize>,
    /// Indices of the chunks that produced a row of `vectors`.
    pub kept_chunks: Vec<usize>,
}

impl InterestSet {
    pub fn len(&self) -> usize {
        self.kept_chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_chunks.is_empty()
    }
}

/// Mean of the real rows of every chunk. Padding sits at the tail of the
/// sorted sequence, so each chunk's real rows are a prefix of it.
pub fn pool_chunks(g: &mut Graph, x: Var, layout: &ChunkLayout) -> Result<InterestSet> {
    if g.value(x).rows() != layout.padded_len {
        return Err(Error::dim("pool_chunks", g.value(x).shape(), (layout.padded_len, 0)));
    }
    let validity = layout.valid_counts();
    let mut pooled = Vec::new();
    let mut kept = Vec::new();
    for (j, &count) in validity.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let start = layout.chunk_rows(j).start;
        let rows: Vec<usize> = (start..start + count).collect();
        let chunk = g.gather_rows(x, &rows)?;
        pooled.push(g.mean_rows(chunk)?);
        kept.push(j);
    }
    if pooled.is_empty() {
        return Err(Error::Contract("no chunk holds a real row; sequence is empty".into()));
    }
    let vectors = if pooled.len() == 1 { pooled[0] } else { g.concat_rows(&pooled)? };
    Ok(InterestSet { vectors, chunk_validity: validity, kept_chunks: kept })
}

/// Raw relevance score of every interest vector for the target item, as a
/// `C_eff x 1` column. Scores are not normalized.
pub fn attention_scores(
    g: &mut Graph,
    interests: Var,
    target: Var,
    params: &TargetAttentionParams<Var>,
) -> Result<Var> {
    let count = g.value(interests).rows();
    let t = params.target.apply(g, target)?;
    if g.value(t).shape() != (1, g.value(interests).cols()) {
        return Err(Error::dim("attention_scores", g.value(interests).shape(), g.value(t).shape()));
    }
    let tiled = g.gather_rows(t, &vec![0; count])?;
    let joined = g.concat_cols(&[interests, tiled])?;
    params.score.apply(g, joined)
}

/// `sum_j s_j * interest_j` as a `1 x d` row.
pub fn aggregate(g: &mut Graph, interests: Var, scores: Var) -> Result<Var> {
    let (n, _) = g.value(interests).shape();
    if g.value(scores).shape() != (n, 1) {
        return Err(Error::dim("aggregate", g.value(interests).shape(), g.value(scores).shape()));
    }
    g.t_matmul(scores, interests)
}
