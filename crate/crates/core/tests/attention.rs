mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use tbin::chunk::{
    block_pair, bucket_mask, chunk_self_attention, chunked_attention, partition, AttentionSchema, AttentionTrace,
    BlockOptions, ChunkLayout,
};
use tbin::diff::{Graph, Tensor2};
use tbin::lsh::PAD_BUCKET;
use tbin::nn::{AttentionParams, BlockParams, Linear};

fn random_attention(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> AttentionParams<Tensor2> {
    AttentionParams {
        wq: randn(rng, d, d, 0.5),
        wk: randn(rng, d, d, 0.5),
        wv: randn(rng, d, d, 0.5),
        out: Linear { w: randn(rng, d, d, 0.5), b: randn(rng, 1, d, 0.5) },
    }
}

fn same_bucket(ids: &[u64]) -> impl Fn(usize, usize) -> bool + '_ {
    move |i, j| ids[i] == ids[j] && (ids[i] != PAD_BUCKET || i == j)
}

#[test]
fn chunk_attention_matches_dense_oracle() {
    let mut rng = rng(1);
    for _ in 0..100 {
        let c = rng.random_range(1..=8);
        let heads = if rng.random_bool(0.5) { 1 } else { 2 };
        let d = heads * rng.random_range(1..=16 / heads);
        let x = randn(&mut rng, c, d, 1.0);
        let ids = random_ids(&mut rng, c, 3);
        let p = random_attention(&mut rng, d);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let pv = p.map(&mut |t| g.leaf(t.clone()));
        let y = chunk_self_attention(&mut g, xv, &pv, &bucket_mask(&ids), heads).unwrap();
        let expect = attention(&to_mat(&x), &p, heads, same_bucket(&ids));
        assert!(max_abs(&expect, g.value(y)) < 1e-9);
    }
}

/// Sorted ids where every bucket lies inside one chunk.
fn chunk_aligned_ids(rng: &mut rand_chacha::ChaCha8Rng, chunks: usize, c: usize) -> Vec<u64> {
    let mut ids = Vec::new();
    let mut next = 0u64;
    for _ in 0..chunks {
        let mut left = c;
        while left > 0 {
            let n = rng.random_range(1..=left);
            ids.extend(std::iter::repeat_n(next, n));
            next += 1;
            left -= n;
        }
    }
    ids
}

#[test]
fn chunk_attention_reduces_to_bucket_attention() {
    let mut rng = rng(2);
    for _ in 0..50 {
        let c = 2 * rng.random_range(1..=4);
        let chunks = rng.random_range(1..=64 / c);
        let d = rng.random_range(1..=8);
        let ids = chunk_aligned_ids(&mut rng, chunks, c);
        let n = ids.len();
        let x = randn(&mut rng, n, d, 1.0);
        let p = random_attention(&mut rng, d);
        let layout = partition(n, c).unwrap();
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let pv = p.map(&mut |t| g.leaf(t.clone()));
        let y = chunked_attention(&mut g, xv, &ids, &layout, &pv, 1, None).unwrap();
        let expect = attention(&to_mat(&x), &p, 1, same_bucket(&ids));
        assert!(max_abs(&expect, g.value(y)) < 1e-9);
    }
}

#[test]
fn padded_rows_only_see_themselves() {
    let mut rng = rng(3);
    let layout = partition(5, 4).unwrap();
    let ids = layout.pad_ids(&[0, 0, 1, 1, 1]).unwrap();
    assert_eq!(&ids[5..], &[PAD_BUCKET; 3]);
    let x = layout.pad_rows(&randn(&mut rng, 5, 4, 1.0)).unwrap();
    let p = random_attention(&mut rng, 4);
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let pv = p.map(&mut |t| g.leaf(t.clone()));
    let mut trace = AttentionTrace::default();
    chunked_attention(&mut g, xv, &ids, &layout, &pv, 1, Some(&mut trace)).unwrap();
    let w = &trace.stages[0];
    for r in 5..8 {
        for c in 0..8 {
            assert_eq!(w.get(r, c), if r == c { 1.0 } else { 0.0 });
        }
    }
    for r in 0..5 {
        for c in 5..8 {
            assert_eq!(w.get(r, c), 0.0);
        }
    }
}

fn run_pair(
    x: &Tensor2,
    ids: &[u64],
    layout: &ChunkLayout,
    first: &BlockParams<Tensor2>,
    second: &BlockParams<Tensor2>,
    schema: AttentionSchema,
    heads: usize,
    trace: Option<&mut AttentionTrace>,
) -> Tensor2 {
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let a = first.map(&mut |t| g.leaf(t.clone()));
    let b = second.map(&mut |t| g.leaf(t.clone()));
    let opts = BlockOptions { heads, eps: 1e-5 };
    let y = block_pair(&mut g, xv, ids, layout, &a, &b, schema, opts, trace).unwrap();
    g.value(y).clone()
}

#[test]
fn single_bucket_single_chunk_is_a_dense_transformer() {
    let mut rng = rng(4);
    for trial in 0..20 {
        let c = 2 * rng.random_range(1..=4);
        let heads = 1 + trial % 2;
        let d = heads * rng.random_range(1..=4);
        let x = randn(&mut rng, c, d, 1.0);
        let first = random_block(&mut rng, d, 2 * d, 0.4);
        let second = random_block(&mut rng, d, 2 * d, 0.4);
        let ids = vec![7; c];
        let layout = partition(c, c).unwrap();
        let all = |_: usize, _: usize| true;
        let expect = block(&block(&to_mat(&x), &first, heads, 1e-5, all), &second, heads, 1e-5, all);
        for schema in AttentionSchema::ALL {
            let y = run_pair(&x, &ids, &layout, &first, &second, schema, heads, None);
            assert!(max_abs(&expect, &y) < 1e-9, "{schema}");
        }
    }
}

#[test]
fn block_pair_matches_oracle_with_shift() {
    // Oracle for the shifted stage: rows i, j interact iff they share a
    // bucket and fall in the same chunk after rotating by c / 2.
    let mut rng = rng(5);
    for _ in 0..20 {
        let c = 2 * rng.random_range(1..=4);
        let n = rng.random_range(1..=24);
        let d = rng.random_range(1..=6);
        let layout = partition(n, c).unwrap();
        let mut raw = random_ids(&mut rng, n, 3);
        raw.sort_unstable();
        let ids = layout.pad_ids(&raw).unwrap();
        let x = layout.pad_rows(&randn(&mut rng, n, d, 1.0)).unwrap();
        let first = random_block(&mut rng, d, 2 * d, 0.4);
        let second = random_block(&mut rng, d, 2 * d, 0.4);
        let np = layout.padded_len;
        let half = c / 2;
        let chunk_of = |i: usize, shift: usize| ((i + np - shift) % np) / c;
        let same = same_bucket(&ids);
        let plain = |i: usize, j: usize| same(i, j) && chunk_of(i, 0) == chunk_of(j, 0);
        let shifted = |i: usize, j: usize| same(i, j) && chunk_of(i, half) == chunk_of(j, half);
        let h = block(&to_mat(&x), &first, 1, 1e-5, plain);
        let y = run_pair(&x, &ids, &layout, &first, &second, AttentionSchema::ShiftedChunk, 1, None);
        assert!(max_abs(&block(&h, &second, 1, 1e-5, shifted), &y) < 1e-9);
        let y = run_pair(&x, &ids, &layout, &first, &second, AttentionSchema::Chunk, 1, None);
        assert!(max_abs(&block(&h, &second, 1, 1e-5, plain), &y) < 1e-9);
    }
}

#[test]
fn zero_output_projections_make_blocks_identity() {
    let mut rng = rng(6);
    let d = 8;
    let mut draw = |r: usize, c: usize| randn(&mut rng, r, c, 0.3);
    let first = BlockParams::init(d, 16, &mut draw);
    let second = BlockParams::init(d, 16, &mut draw);
    let mut rng = common::rng(7);
    let layout = partition(13, 4).unwrap();
    let ids = layout.pad_ids(&random_ids(&mut rng, 13, 2)).unwrap();
    let x = layout.pad_rows(&randn(&mut rng, 13, d, 1.0)).unwrap();
    for schema in AttentionSchema::ALL {
        let y = run_pair(&x, &ids, &layout, &first, &second, schema, 2, None);
        assert!(y.bit_eq(&x), "{schema}");
    }
}

/// Bucket 1 straddles the boundary between chunk 0 and chunk 1.
#[test]
fn shifted_stage_connects_neighbouring_chunks() {
    let mut rng = rng(8);
    let ids = vec![0, 0, 0, 1, 1, 2, 2, 2];
    let layout = partition(8, 4).unwrap();
    let x = randn(&mut rng, 8, 4, 1.0);
    let first = random_block(&mut rng, 4, 8, 0.3);
    let second = random_block(&mut rng, 4, 8, 0.3);
    let mut trace = AttentionTrace::default();
    run_pair(&x, &ids, &layout, &first, &second, AttentionSchema::ShiftedChunk, 1, Some(&mut trace));
    let (csa, scsa) = (&trace.stages[0], &trace.stages[1]);
    assert_eq!(csa.get(3, 4), 0.0);
    assert_eq!(csa.get(4, 3), 0.0);
    assert!(scsa.get(3, 4) > 0.0 && scsa.get(4, 3) > 0.0);
    for i in 0..4 {
        for j in 4..8 {
            assert_eq!(csa.get(i, j), 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_respect_buckets_and_rows_sum_to_one(
        raw in prop::collection::vec(0u64..4, 1..30),
        half in 1usize..5,
        seed in 0u64..1000,
        shifted in any::<bool>(),
    ) {
        let mut raw = raw;
        raw.sort_unstable();
        let c = 2 * half;
        let mut layout = partition(raw.len(), c).unwrap();
        if shifted {
            layout = layout.shifted();
        }
        let ids = layout.pad_ids(&raw).unwrap();
        let mut rng = common::rng(seed);
        let x = layout.pad_rows(&randn(&mut rng, raw.len(), 3, 1.0)).unwrap();
        let p = random_attention(&mut rng, 3);
        let mut g = Graph::new();
        let xv = g.leaf(x);
        let pv = p.map(&mut |t| g.leaf(t.clone()));
        let mut trace = AttentionTrace::default();
        chunked_attention(&mut g, xv, &ids, &layout, &pv, 1, Some(&mut trace)).unwrap();
        let w = &trace.stages[0];
        for i in 0..layout.padded_len {
            let total: f64 = w.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for j in 0..layout.padded_len {
                if ids[i] != ids[j] {
                    prop_assert_eq!(w.get(i, j), 0.0);
                }
            }
        }
    }
}
