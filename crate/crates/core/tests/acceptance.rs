//! End-to-end acceptance checks. Runs as a plain program so the criteria
//! execute one after another (the timing check never shares the CPU with
//! training) and every criterion prints one PASS/FAIL line.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use tbin::bench::{closed_form_macs, paired_doubling_ratio, run_schema, BenchInput, Schema, SweepConfig};
use tbin::chunk::{
    block_pair, bucket_mask, chunk_self_attention, chunked_attention, cyclic_shift, partition, reverse_shift,
    AttentionSchema, AttentionTrace, BlockOptions,
};
use tbin::data::{generate, Split, SyntheticSpec};
use tbin::diff::{grad_check, Graph, Tensor2};
use tbin::experiment::{ablate, fit, Variant};
use tbin::lsh::{bucket_ids, hash_codes, stable_sort, ProjectionMatrix, PAD_BUCKET};
use tbin::model::{
    auc, bce_loss, evaluate, forward_graph, load_checkpoint, predict, prepare, save_checkpoint, ModelParams,
    Sample, TrainConfig,
};
use tbin::nn::{AttentionParams, Linear};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    let s = elapsed.as_secs_f64();
    check(s < limit_s, format!("{detail}; {s:.1}s (limit {limit_s}s)"))
}

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

fn chunk_attention_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(101);
    let mut worst = 0.0f64;
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
        let y = chunk_self_attention(&mut g, xv, &pv, &bucket_mask(&ids), heads).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs(&attention(&to_mat(&x), &p, heads, same_bucket(&ids)), g.value(y)));
    }
    check(worst < 1e-9, format!("max abs err {worst:.2e} over 100 instances"))
        .and_then(|d| within(start.elapsed(), 10.0, d))
}

fn bucket_reduction() -> Outcome {
    let mut rng = rng(102);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = 2 * rng.random_range(1..=4);
        let chunks = rng.random_range(1..=64 / c);
        let d = rng.random_range(1..=8);
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
        let x = randn(&mut rng, ids.len(), d, 1.0);
        let p = random_attention(&mut rng, d);
        let layout = partition(ids.len(), c).map_err(|e| e.to_string())?;
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let pv = p.map(&mut |t| g.leaf(t.clone()));
        let y = chunked_attention(&mut g, xv, &ids, &layout, &pv, 1, None).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs(&attention(&to_mat(&x), &p, 1, same_bucket(&ids)), g.value(y)));
    }
    check(worst < 1e-9, format!("max abs err {worst:.2e} over 50 instances, L <= 64"))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(103);
    let cfg = TrainConfig { dim: 8, chunk_size: 4, blocks: 2, hash_bits: 2, head_hidden: 8, ..Default::default() };
    let params = ModelParams::init(cfg.model_config(6, 6, 3)).map_err(|e| e.to_string())?.randomized(0.3, 99);
    let behaviors = randn(&mut rng, 16, 6, 1.0);
    let target = randn(&mut rng, 1, 6, 1.0);
    let user = randn(&mut rng, 1, 3, 1.0);
    let prep = prepare(&params, &behaviors).map_err(|e| e.to_string())?;
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
    )
    .map_err(|e| e.to_string())?;
    let names = params.weights.names();
    let (worst, name) = report
        .per_param
        .iter()
        .zip(&names)
        .fold((0.0f64, ""), |(w, n), (&e, name)| if e > w { (e, name.as_str()) } else { (w, n) });
    check(
        report.per_param.iter().all(|&e| e < 1e-4),
        format!("{} groups, worst rel err {worst:.2e} ({name})", names.len()),
    )
    .and_then(|d| within(start.elapsed(), 60.0, d))
}

fn collision_law_holds() -> Outcome {
    let start = Instant::now();
    let (dim, n, bits) = (32, 10_000, 50);
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, theta) in [30.0f64, 60.0, 90.0, 120.0].into_iter().enumerate() {
        let mut rng = rng(200 + i as u64);
        let (a, b) = pair_at_angle(&mut rng, dim, theta.to_radians());
        let pair = Tensor2::from_fn(2, dim, |r, c| if r == 0 { a[c] } else { b[c] });
        let mut same = 0usize;
        for k in 0..n / bits {
            let proj = ProjectionMatrix::sample(dim, bits, 7000 + 100 * i as u64 + k as u64).map_err(|e| e.to_string())?;
            let h = hash_codes(&pair, &proj).map_err(|e| e.to_string())?;
            same += (0..bits).filter(|&j| h.get(0, j) == h.get(1, j)).count();
        }
        let rate = same as f64 / n as f64;
        let want = collision_law(theta.to_radians());
        ok &= (rate - want).abs() <= 0.02;
        lines.push(format!("{theta}deg {rate:.4} vs {want:.4}"));
    }
    check(ok, lines.join(", ")).and_then(|d| within(start.elapsed(), 10.0, d))
}

fn round_trips() -> Outcome {
    let mut rng = rng(104);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut failures = [0usize; 3];
    for trial in 0..100u64 {
        let n = rng.random_range(1..200);
        let d = rng.random_range(1..12);
        let x = randn(&mut rng, n, d, 1.0);
        let proj = ProjectionMatrix::sample(d, rng.random_range(1..8), trial).map_err(|e| e.to_string())?;
        let ids = bucket_ids(&hash_codes(&x, &proj).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let (a, sorted) = stable_sort(&x, &ids).map_err(|e| e.to_string())?;
        if !a.restore(&sorted).map_err(|e| e.to_string())?.bit_eq(&x) {
            failures[0] += 1;
        }

        let off = rng.random_range(0..=n);
        let (xs, is) = cyclic_shift(&x, &ids, off).map_err(|e| e.to_string())?;
        let (xb, ib) = reverse_shift(&xs, &is, off).map_err(|e| e.to_string())?;
        if !xb.bit_eq(&x) || ib != ids {
            failures[1] += 1;
        }

        let schema = AttentionSchema::ALL[trial as usize % AttentionSchema::ALL.len()];
        let cfg = TrainConfig { dim: 8, chunk_size: 4, blocks: 2, head_hidden: 6, schema, ..Default::default() };
        let p = ModelParams::init(cfg.model_config(5, 4, 3)).map_err(|e| e.to_string())?.randomized(0.5, trial);
        let path = dir.path().join(format!("m{trial}.tbin"));
        save_checkpoint(&p, &path).map_err(|e| e.to_string())?;
        let q = load_checkpoint(&path).map_err(|e| e.to_string())?;
        let s = Sample {
            user: randn(&mut rng, 1, 3, 1.0),
            target: randn(&mut rng, 1, 4, 1.0),
            behaviors: randn(&mut rng, 9, 5, 1.0),
            label: 1,
        };
        let same_pred = predict(&p, &s).map_err(|e| e.to_string())?.to_bits()
            == predict(&q, &s).map_err(|e| e.to_string())?.to_bits();
        if q != p || !same_pred {
            failures[2] += 1;
        }
    }
    check(
        failures == [0; 3],
        format!("failures sort/shift/checkpoint {}/{}/{} of 100", failures[0], failures[1], failures[2]),
    )
}

fn shift_connectivity() -> Outcome {
    let mut rng = rng(105);
    let ids = vec![0, 0, 0, 1, 1, 2, 2, 2];
    let layout = partition(8, 4).map_err(|e| e.to_string())?;
    let x = randn(&mut rng, 8, 4, 1.0);
    let first = random_block(&mut rng, 4, 8, 0.3);
    let second = random_block(&mut rng, 4, 8, 0.3);
    let mut trace = AttentionTrace::default();
    let mut g = Graph::new();
    let xv = g.leaf(x);
    let a = first.map(&mut |t| g.leaf(t.clone()));
    let b = second.map(&mut |t| g.leaf(t.clone()));
    let opts = BlockOptions { heads: 1, eps: 1e-5 };
    block_pair(&mut g, xv, &ids, &layout, &a, &b, AttentionSchema::ShiftedChunk, opts, Some(&mut trace))
        .map_err(|e| e.to_string())?;
    let (csa, scsa) = (&trace.stages[0], &trace.stages[1]);
    let cross: f64 = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).filter(|(i, j)| i / 4 != j / 4).map(|(i, j)| csa.get(i, j)).sum();
    let straddle = scsa.get(3, 4).min(scsa.get(4, 3));
    check(cross == 0.0 && straddle > 0.0, format!("C-SA cross-chunk weight {cross}, SC-SA min weight 3<->4 {straddle:.4}"))
}

fn complexity() -> Outcome {
    let (chunk, dim) = (64, 64);
    let mut mismatches = Vec::new();
    for len in [256, 512, 1024, 2048] {
        let input = BenchInput::random(len, dim, 16, len as u64).map_err(|e| e.to_string())?;
        for schema in [Schema::Global, Schema::Chunk, Schema::ShiftedChunk] {
            let (_, counter, _) = run_schema(schema, &input, chunk).map_err(|e| e.to_string())?;
            if Some(counter.macs) != closed_form_macs(schema, len, chunk, dim) {
                mismatches.push(format!("{schema}@{len}"));
            }
        }
    }
    let config = SweepConfig { trials: 11, min_trial_ms: 100.0, chunk, dim, ..Default::default() };
    let (c_ratio, _) = paired_doubling_ratio(Schema::Chunk, 1024, &config).map_err(|e| e.to_string())?;
    let (g_ratio, _) = paired_doubling_ratio(Schema::Global, 1024, &config).map_err(|e| e.to_string())?;
    check(
        mismatches.is_empty() && (1.8..=2.6).contains(&c_ratio) && (3.4..=4.6).contains(&g_ratio),
        format!(
            "counter mismatches {mismatches:?}; 1024->2048 time ratio C-SA {c_ratio:.2} [1.8, 2.6], G-SA {g_ratio:.2} [3.4, 4.6]"
        ),
    )
}

fn end_to_end_learning() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec::default();
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let config = TrainConfig::default();
    let init = ModelParams::init(config.model_config(spec.behavior_dim, spec.behavior_dim, spec.user_dim))
        .map_err(|e| e.to_string())?;
    let untrained = evaluate(&init, &data.prepared(&init, Split::Test).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let outcome = fit(&data, &config, |_| {}).map_err(|e| e.to_string())?;
    let m = outcome.test;
    check(
        m.auc > 0.95 && m.logloss < 0.35 && (0.45..=0.55).contains(&untrained.auc) && config.steps <= 2000,
        format!(
            "{} steps: test AUC {:.4} LogLoss {:.4}; untrained AUC {:.4}",
            config.steps, m.auc, m.logloss, untrained.auc
        ),
    )
    .and_then(|d| within(start.elapsed(), 600.0, d))
}

fn metric_correctness() -> Outcome {
    let mut rng = rng(106);
    let (mut auc_bad, mut bce_worst, mut batches) = (0, 0.0f64, 0);
    while batches < 1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..50);
        let preds: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        if pos == 0 || pos == n {
            continue;
        }
        batches += 1;
        if auc(&preds, &labels).map_err(|e| e.to_string())? != pairwise_auc(&preds, &labels) {
            auc_bad += 1;
        }
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        bce_worst = bce_worst.max((bce_loss(&probs, &labels).map_err(|e| e.to_string())? - direct_bce(&probs, &labels)).abs());
    }
    check(auc_bad == 0 && bce_worst < 1e-12, format!("AUC mismatches {auc_bad}/1000, BCE max err {bce_worst:.1e}"))
}

fn ablation_harness() -> Outcome {
    let spec = SyntheticSpec { users: 200, seq_len: 64, ..Default::default() };
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let base =
        TrainConfig { dim: 16, steps: 200, batch_size: 16, learning_rate: 3e-3, eval_every: 0, ..Default::default() };
    let variants = [Variant::Baseline, Variant::Schema(AttentionSchema::Chunk), Variant::Schema(AttentionSchema::Global)];
    let report = ablate(&data, &base, &variants, 5, |_| {}).map_err(|e| e.to_string())?;
    println!("{}", report.table().trim_end());
    let rows = report.summary.iter().map(|s| format!("{} {:.4}", s.variant, s.auc_mean)).collect::<Vec<_>>();
    check(
        report.summary.len() == 3 && report.summary.iter().all(|s| s.runs == 5),
        format!("5 matched seeds per variant; mean AUC {}", rows.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence, masked chunk attention", chunk_attention_oracle),
        ("oracle equivalence, bucket reduction", bucket_reduction),
        ("gradient fidelity", gradient_fidelity),
        ("LSH collision law", collision_law_holds),
        ("round-trip invariants", round_trips),
        ("shift connectivity", shift_connectivity),
        ("complexity", complexity),
        ("end-to-end learning", end_to_end_learning),
        ("metric correctness", metric_correctness),
        ("ablation harness", ablation_harness),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
