//! Reference implementations used as test oracles. Written directly from
//! the textbook formulas on nested `Vec`s, without touching the crate's
//! tensor or graph code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tbin::diff::Tensor2;
use tbin::nn::{AttentionParams, BlockParams, LayerNormParams, Linear, Mlp};

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

pub fn to_mat(t: &Tensor2) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn max_abs(a: &Mat, b: &Tensor2) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, |r| r.len())), b.shape());
    let mut m: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((v - b.get(r, c)).abs());
        }
    }
    m
}

/// Triple loop `a * b`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn linear(x: &Mat, l: &Linear<Tensor2>) -> Mat {
    let y = matmul(x, &to_mat(&l.w));
    y.into_iter().map(|r| r.iter().zip(l.b.row(0)).map(|(v, b)| v + b).collect()).collect()
}

pub fn relu(x: &Mat) -> Mat {
    x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

pub fn mlp(x: &Mat, m: &Mlp<Tensor2>) -> Mat {
    linear(&relu(&linear(x, &m.hidden)), &m.out)
}

pub fn layer_norm(x: &Mat, p: &LayerNormParams<Tensor2>, eps: f64) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(c, v)| (v - mean) / (var + eps).sqrt() * p.gain.get(0, c) + p.bias.get(0, c))
                .collect()
        })
        .collect()
}

/// Softmax over the entries of `row` where `keep` holds; others get 0.
pub fn softmax_where(row: &[f64], keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let max = (0..row.len()).filter(|&j| keep(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = (0..row.len()).map(|j| if keep(j) { (row[j] - max).exp() } else { 0.0 }).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Single-head masked attention: row `i` attends to `j` iff `allow(i, j)`.
/// Returns the pre-output-projection result and the weight matrix.
pub fn masked_attention(
    x: &Mat,
    wq: &Tensor2,
    wk: &Tensor2,
    wv: &Tensor2,
    heads: usize,
    allow: impl Fn(usize, usize) -> bool,
) -> (Mat, Mat) {
    let q = matmul(x, &to_mat(wq));
    let k = matmul(x, &to_mat(wk));
    let v = matmul(x, &to_mat(wv));
    let n = x.len();
    let d = q[0].len();
    let hd = d / heads;
    let mut out = vec![vec![0.0; d]; n];
    let mut avg = vec![vec![0.0; n]; n];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let p = softmax_where(&scores, |j| allow(i, j));
            for j in 0..n {
                avg[i][j] += p[j] / heads as f64;
                for c in cols.clone() {
                    out[i][c] += p[j] * v[j][c];
                }
            }
        }
    }
    (out, avg)
}

/// Attention sublayer with output projection.
pub fn attention(
    x: &Mat,
    p: &AttentionParams<Tensor2>,
    heads: usize,
    allow: impl Fn(usize, usize) -> bool,
) -> Mat {
    let (o, _) = masked_attention(x, &p.wq, &p.wk, &p.wv, heads, allow);
    linear(&o, &p.out)
}

/// Pre-norm transformer block with the given attention pattern.
pub fn block(x: &Mat, p: &BlockParams<Tensor2>, heads: usize, eps: f64, allow: impl Fn(usize, usize) -> bool) -> Mat {
    let a = add(&attention(&layer_norm(x, &p.ln_attn, eps), &p.attn, heads, allow), x);
    add(&mlp(&layer_norm(&a, &p.ln_mlp, eps), &p.mlp), &a)
}

/// Block parameters with every tensor random, norms included.
pub fn random_block(rng: &mut ChaCha8Rng, dim: usize, hidden: usize, std: f64) -> BlockParams<Tensor2> {
    let mut p = BlockParams::zeros(dim, hidden);
    p.visit_mut("", &mut |_, t| *t = randn(rng, t.rows(), t.cols(), std));
    p
}

pub fn random_ids(rng: &mut ChaCha8Rng, n: usize, buckets: u64) -> Vec<u64> {
    (0..n).map(|_| rng.random_range(0..buckets)).collect()
}

/// `1 / (1 + e^-x)`.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// O(n^2) pairwise AUC with ties counted one half.
pub fn pairwise_auc(preds: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            den += 1.0;
            if preds[i] > preds[j] {
                num += 1.0;
            } else if preds[i] == preds[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn direct_bce(preds: &[f64], labels: &[u8]) -> f64 {
    let n = preds.len() as f64;
    -preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            if y == 1 { p.ln() } else { (1.0 - p).ln() }
        })
        .sum::<f64>()
        / n
}

/// `1 - theta / pi`.
pub fn collision_law(theta: f64) -> f64 {
    1.0 - theta / std::f64::consts::PI
}

/// Two unit vectors in `dim` dimensions at angle `theta`, randomly oriented.
pub fn pair_at_angle(rng: &mut ChaCha8Rng, dim: usize, theta: f64) -> (Vec<f64>, Vec<f64>) {
    let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| StandardNormal.sample(rng)).collect() };
    let norm = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    let mut a = gauss(rng);
    norm(&mut a);
    let mut b = gauss(rng);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    b.iter_mut().zip(&a).for_each(|(x, y)| *x -= dot * y);
    norm(&mut b);
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| theta.cos() * x + theta.sin() * y).collect();
    (a, c)
}
