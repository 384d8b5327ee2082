//! Chunk partitioning, same-bucket masks and the chunked / shifted-chunk
//! self-attention blocks.
//!
//! All functions here work on the bucket-sorted, padded sequence. A block
//! pair runs chunk attention in its first block and, for the shifted
//! schema, rotates the sequence by half a chunk before the second block's
//! attention and rotates it back afterwards.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Tensor2, Var, MASK_NEG};
use crate::error::{Error, Result};
use crate::lsh::PAD_BUCKET;
use crate::nn::{AttentionParams, BlockParams};

/// How a sequence of length `len` is cut into equal chunks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkLayout {
    pub len: usize,
    pub padded_len: usize,
    pub chunk_size: usize,
    pub chunks: usize,
    pub pad_count: usize,
    /// Cyclic offset applied before attention: 0 or `chunk_size / 2`.
    pub shift: usize,
}

/// Smallest padded layout of `len` rows into chunks of `chunk_size`.
pub fn partition(len: usize, chunk_size: usize) -> Result<ChunkLayout> {
    if chunk_size < 2 || chunk_size % 2 != 0 {
        return Err(Error::Config(format!("chunk size must be even and >= 2, got {chunk_size}")));
    }
    if len == 0 {
        return Err(Error::Config("sequence length must be >= 1".into()));
    }
    let chunks = len.div_ceil(chunk_size);
    let padded_len = chunks * chunk_size;
    Ok(ChunkLayout { len, padded_len, chunk_size, chunks, pad_count: padded_len - len, shift: 0 })
}

impl ChunkLayout {
    /// The same layout with a half-chunk cyclic offset.
    pub fn shifted(&self) -> Self {
        Self { shift: self.chunk_size / 2, ..*self }
    }

    pub fn chunk_rows(&self, chunk: usize) -> Range<usize> {
        chunk * self.chunk_size..(chunk + 1) * self.chunk_size
    }

    /// Number of real (non-pad) rows in each chunk.
    pub fn valid_counts(&self) -> Vec<usize> {
        (0..self.chunks)
            .map(|j| {
                let r = self.chunk_rows(j);
                r.end.min(self.len).saturating_sub(r.start)
            })
            .collect()
    }

    /// Appends zero rows so `x` has `padded_len` rows.
    pub fn pad_rows(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.rows() != self.len {
            return Err(Error::dim("pad_rows", x.shape(), (self.len, x.cols())));
        }
        let pad = Tensor2::zeros(self.pad_count, x.cols());
        Tensor2::concat_rows(&[x, &pad])
    }

    /// Appends the reserved padding id.
    pub fn pad_ids(&self, ids: &[u64]) -> Result<Vec<u64>> {
        if ids.len() != self.len {
            return Err(Error::dim("pad_ids", (self.len, 1), (ids.len(), 1)));
        }
        let mut out = ids.to_vec();
        out.resize(self.padded_len, PAD_BUCKET);
        Ok(out)
    }
}

/// `0` where query and key share a bucket, [`MASK_NEG`] elsewhere. Padding
/// rows only see themselves.
pub fn bucket_mask(ids: &[u64]) -> Tensor2 {
    let n = ids.len();
    Tensor2::from_fn(n, n, |i, j| {
        if i == j || (ids[i] == ids[j] && ids[i] != PAD_BUCKET) {
            0.0
        } else {
            MASK_NEG
        }
    })
}

/// Mask for global attention: every real row sees every real row.
pub fn global_mask(ids: &[u64]) -> Tensor2 {
    let n = ids.len();
    Tensor2::from_fn(n, n, |i, j| {
        if i == j || (ids[i] != PAD_BUCKET && ids[j] != PAD_BUCKET) {
            0.0
        } else {
            MASK_NEG
        }
    })
}

/// `out[k] = in[(k + offset) mod n]`.
pub fn shift_indices(n: usize, offset: usize) -> Vec<usize> {
    (0..n).map(|k| (k + offset) % n.max(1)).collect()
}

pub fn cyclic_shift(x: &Tensor2, ids: &[u64], offset: usize) -> Result<(Tensor2, Vec<u64>)> {
    if ids.len() != x.rows() {
        return Err(Error::dim("cyclic_shift", x.shape(), (ids.len(), 1)));
    }
    let idx = shift_indices(x.rows(), offset);
    Ok((x.gather_rows(&idx)?, idx.iter().map(|&i| ids[i]).collect()))
}

pub fn reverse_shift(x: &Tensor2, ids: &[u64], offset: usize) -> Result<(Tensor2, Vec<u64>)> {
    let n = x.rows().max(1);
    cyclic_shift(x, ids, (n - offset % n) % n)
}

/// Which attention pattern the transformer blocks use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttentionSchema {
    /// Chunk attention, then half-chunk shifted chunk attention.
    #[default]
    #[serde(rename = "sc-sa")]
    ShiftedChunk,
    /// Chunk attention in every block.
    #[serde(rename = "c-sa")]
    Chunk,
    /// Unrestricted attention over the whole sequence.
    #[serde(rename = "g-sa")]
    Global,
}

impl AttentionSchema {
    pub const ALL: [AttentionSchema; 3] =
        [AttentionSchema::ShiftedChunk, AttentionSchema::Chunk, AttentionSchema::Global];

    pub fn name(self) -> &'static str {
        match self {
            AttentionSchema::ShiftedChunk => "sc-sa",
            AttentionSchema::Chunk => "c-sa",
            AttentionSchema::Global => "g-sa",
        }
    }
}

impl fmt::Display for AttentionSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttentionSchema {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attention schema {s:?} (sc-sa, c-sa, g-sa)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockOptions {
    pub heads: usize,
    pub eps: f64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self { heads: 1, eps: 1e-5 }
    }
}

/// Realized attention weights, one `padded_len x padded_len` matrix per
/// attention stage, in sorted (unshifted) row coordinates and averaged over
/// heads.
#[derive(Clone, Debug, Default)]
pub struct AttentionTrace {
    pub stages: Vec<Tensor2>,
}

/// `softmax(Q K^T / sqrt(d_head) + M) V` per head, heads concatenated.
/// Returns the output and the head-averaged weights.
fn attend(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    mask: &Tensor2,
    heads: usize,
) -> Result<(Var, Tensor2)> {
    let (rows, dim) = g.value(q).shape();
    if heads == 0 || dim % heads != 0 {
        return Err(Error::Config(format!("model dim {dim} not divisible by {heads} heads")));
    }
    let head_dim = dim / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut weights = Tensor2::zeros(rows, rows);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            let s = h * head_dim;
            (g.slice_cols(q, s, head_dim)?, g.slice_cols(k, s, head_dim)?, g.slice_cols(v, s, head_dim)?)
        };
        let scores = g.matmul_t(qh, kh)?;
        let scores = g.scale(scores, scale);
        let probs = g.masked_softmax_rows(scores, mask)?;
        weights.add_assign(g.value(probs))?;
        outs.push(g.matmul(probs, vh)?);
    }
    let out = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    Ok((out, weights.scale(1.0 / heads as f64)))
}

/// Self-attention inside one chunk, including the output projection.
pub fn chunk_self_attention(
    g: &mut Graph,
    x: Var,
    params: &AttentionParams<Var>,
    mask: &Tensor2,
    heads: usize,
) -> Result<Var> {
    let q = g.matmul(x, params.wq)?;
    let k = g.matmul(x, params.wk)?;
    let v = g.matmul(x, params.wv)?;
    let (out, _) = attend(g, q, k, v, mask, heads)?;
    params.out.apply(g, out)
}

/// Chunk attention over a padded, sorted sequence. With `layout.shift > 0`
/// the rows are cyclically shifted first, masks are rebuilt from the
/// shifted ids, and the result is shifted back.
pub fn chunked_attention(
    g: &mut Graph,
    x: Var,
    ids: &[u64],
    layout: &ChunkLayout,
    params: &AttentionParams<Var>,
    heads: usize,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let n = layout.padded_len;
    if g.value(x).rows() != n || ids.len() != n {
        return Err(Error::dim("chunked_attention", g.value(x).shape(), (ids.len(), n)));
    }
    let idx = shift_indices(n, layout.shift);
    let (xs, shifted_ids) = if layout.shift == 0 {
        (x, ids.to_vec())
    } else {
        (g.gather_rows(x, &idx)?, idx.iter().map(|&i| ids[i]).collect())
    };
    let q = g.matmul(xs, params.wq)?;
    let k = g.matmul(xs, params.wk)?;
    let v = g.matmul(xs, params.wv)?;

    let mut dense = trace.as_ref().map(|_| Tensor2::zeros(n, n));
    let mut outs = Vec::with_capacity(layout.chunks);
    for j in 0..layout.chunks {
        let range = layout.chunk_rows(j);
        let mask = bucket_mask(&shifted_ids[range.clone()]);
        let rows: Vec<usize> = range.collect();
        let (qc, kc, vc) = if layout.chunks == 1 {
            (q, k, v)
        } else {
            (g.gather_rows(q, &rows)?, g.gather_rows(k, &rows)?, g.gather_rows(v, &rows)?)
        };
        let (out, w) = attend(g, qc, kc, vc, &mask, heads)?;
        if let Some(d) = dense.as_mut() {
            for (a, &ra) in rows.iter().enumerate() {
                for (b, &rb) in rows.iter().enumerate() {
                    d.set(idx[ra], idx[rb], w.get(a, b));
                }
            }
        }
        outs.push(out);
    }
    let joined = if outs.len() == 1 { outs[0] } else { g.concat_rows(&outs)? };
    let projected = params.out.apply(g, joined)?;
    if let (Some(t), Some(d)) = (trace.as_mut(), dense) {
        t.stages.push(d);
    }
    if layout.shift == 0 {
        Ok(projected)
    } else {
        let back = shift_indices(n, n - layout.shift % n);
        g.gather_rows(projected, &back)
    }
}

/// Attention over the whole padded sequence; padding rows see themselves.
pub fn global_attention(
    g: &mut Graph,
    x: Var,
    ids: &[u64],
    params: &AttentionParams<Var>,
    heads: usize,
    trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let q = g.matmul(x, params.wq)?;
    let k = g.matmul(x, params.wk)?;
    let v = g.matmul(x, params.wv)?;
    let (out, w) = attend(g, q, k, v, &global_mask(ids), heads)?;
    if let Some(t) = trace {
        t.stages.push(w);
    }
    params.out.apply(g, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Chunk { shifted: bool },
    Global,
}

/// `a = Attn(LN(x)) + x; b = MLP(LN(a)) + a`.
fn block(
    g: &mut Graph,
    x: Var,
    ids: &[u64],
    layout: &ChunkLayout,
    params: &BlockParams<Var>,
    stage: Stage,
    opts: BlockOptions,
    trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let h = params.ln_attn.apply(g, x, opts.eps)?;
    let attn = match stage {
        Stage::Chunk { shifted } => {
            let l = if shifted { layout.shifted() } else { ChunkLayout { shift: 0, ..*layout } };
            chunked_attention(g, h, ids, &l, &params.attn, opts.heads, trace)?
        }
        Stage::Global => global_attention(g, h, ids, &params.attn, opts.heads, trace)?,
    };
    let a = g.add(attn, x)?;
    let h = params.ln_mlp.apply(g, a, opts.eps)?;
    let m = params.mlp.apply(g, h)?;
    g.add(m, a)
}

/// Two successive blocks. For [`AttentionSchema::ShiftedChunk`] the
/// first runs chunk attention and the second shifted chunk attention.
#[allow(clippy::too_many_arguments)]
pub fn block_pair(
    g: &mut Graph,
    x: Var,
    ids: &[u64],
    layout: &ChunkLayout,
    first: &BlockParams<Var>,
    second: &BlockParams<Var>,
    schema: AttentionSchema,
    opts: BlockOptions,
    mut trace: Option<&mut AttentionTrace>,
) -> Result<Var> {
    let (s1, s2) = match schema {
        AttentionSchema::ShiftedChunk => {
            (Stage::Chunk { shifted: false }, Stage::Chunk { shifted: true })
        }
        AttentionSchema::Chunk => (Stage::Chunk { shifted: false }, Stage::Chunk { shifted: false }),
        AttentionSchema::Global => (Stage::Global, Stage::Global),
    };
    let b = block(g, x, ids, layout, first, s1, opts, trace.as_deref_mut())?;
    block(g, b, ids, layout, second, s2, opts, trace)
}
