//! Forward-only attention kernels for the four attention schemas, with
//! exact multiply-accumulate and sort-comparison counters, and a timing
//! sweep over sequence lengths.
//!
//! Attention MACs are counted as `rows * cols * d` for every `Q K^T` and
//! every `P V` product actually executed, so
//! G-SA costs `2 L^2 d` and both chunk schemas cost `2 L c d`.
//! Sorting is reported separately from attention.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chunk::{partition, shift_indices};
use crate::diff::Tensor2;
use crate::error::{Error, Result};
use crate::lsh::{bucket_ids, hash_codes, HashAssignment, ProjectionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schema {
    /// Every row attends to every row.
    #[serde(rename = "g-sa")]
    Global,
    /// Attention inside each hash bucket of the sorted sequence.
    #[serde(rename = "b-sa")]
    Bucket,
    /// Attention inside fixed chunks of the sorted sequence, bucket masked.
    #[serde(rename = "c-sa")]
    Chunk,
    /// Chunk attention on the sequence rotated by half a chunk.
    #[serde(rename = "sc-sa")]
    ShiftedChunk,
}

impl Schema {
    pub const ALL: [Schema; 4] = [Schema::Global, Schema::Bucket, Schema::Chunk, Schema::ShiftedChunk];

    pub fn name(self) -> &'static str {
        match self {
            Schema::Global => "g-sa",
            Schema::Bucket => "b-sa",
            Schema::Chunk => "c-sa",
            Schema::ShiftedChunk => "sc-sa",
        }
    }

    fn sorts(self) -> bool {
        self != Schema::Global
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schema {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown schema {s:?} (g-sa, b-sa, c-sa, sc-sa)")))
    }
}

/// Closed-form attention MACs of a schema with uniform inputs.
pub fn closed_form_macs(schema: Schema, len: usize, chunk: usize, dim: usize) -> Option<u64> {
    let (l, c, d) = (len as u64, chunk as u64, dim as u64);
    match schema {
        Schema::Global => Some(2 * l * l * d),
        Schema::Chunk | Schema::ShiftedChunk if len % chunk == 0 => Some(2 * l * c * d),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub macs: u64,
    pub peak_intermediate: u64,
}

/// Random inputs shared by every schema at one sequence length.
#[derive(Clone, Debug)]
pub struct BenchInput {
    pub q: Tensor2,
    pub k: Tensor2,
    pub v: Tensor2,
    /// Bucket id of every row, in original order.
    pub ids: Vec<u64>,
}

impl BenchInput {
    /// `len x dim` standard normal Q, K, V; rows are hashed from K.
    pub fn random(len: usize, dim: usize, hash_bits: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Tensor2::from_fn(len, dim, |_, _| StandardNormal.sample(&mut rng));
        let (q, k, v) = (draw(), draw(), draw());
        let projection = ProjectionMatrix::sample(dim, hash_bits, seed ^ 0x1b5)?;
        let ids = bucket_ids(&hash_codes(&k, &projection)?)?;
        Ok(Self { q, k, v, ids })
    }

    /// Every row in one bucket.
    pub fn single_bucket(len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Tensor2::from_fn(len, dim, |_, _| StandardNormal.sample(&mut rng));
        let (q, k, v) = (draw(), draw(), draw());
        Self { q, k, v, ids: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Inputs reordered by bucket, plus the sort cost.
#[derive(Clone, Debug)]
pub struct SortedInput {
    pub q: Tensor2,
    pub k: Tensor2,
    pub v: Tensor2,
    pub ids: Vec<u64>,
    pub assignment: HashAssignment,
    pub comparisons: u64,
}

pub fn sort_input(input: &BenchInput) -> Result<SortedInput> {
    let mut comparisons = 0;
    let assignment = HashAssignment::from_ids_counted(input.ids.clone(), &mut comparisons);
    Ok(SortedInput {
        q: assignment.apply(&input.q)?,
        k: assignment.apply(&input.k)?,
        v: assignment.apply(&input.v)?,
        ids: assignment.sorted_ids(),
        assignment,
        comparisons,
    })
}

/// Row-major Q, K, V of one sequence with optional bucket ids.
struct Rows<'a> {
    q: &'a [f64],
    k: &'a [f64],
    v: &'a [f64],
    d: usize,
    ids: Option<&'a [u64]>,
}

/// `softmax(Q K^T / sqrt(d) + M) V` for query rows `qr` against key rows
/// `kr`, written into the matching rows of `out`. `M` keeps pairs with equal
/// ids. The full score block is computed, masked entries included.
fn attend_block(x: &Rows, qr: Range<usize>, kr: Range<usize>, out: &mut [f64], scores: &mut Vec<f64>, counter: &mut OpCounter) {
    let d = x.d;
    let nk = kr.len();
    let scale = 1.0 / (d as f64).sqrt();
    scores.clear();
    scores.resize(qr.len() * nk, 0.0);
    counter.macs += 2 * (qr.len() * nk * d) as u64;
    counter.peak_intermediate = counter.peak_intermediate.max((qr.len() * nk) as u64);
    // Key tiles keep the touched K and V rows in L1.
    let tiles: Vec<Range<usize>> =
        kr.clone().step_by(KEY_TILE).map(|t| t..(t + KEY_TILE).min(kr.end)).collect();
    for tile in &tiles {
        for (a, r) in qr.clone().enumerate() {
            let q = &x.q[r * d..(r + 1) * d];
            let row = &mut scores[a * nk..(a + 1) * nk];
            for c in tile.clone() {
                let k = &x.k[c * d..(c + 1) * d];
                row[c - kr.start] = q.iter().zip(k).map(|(p, q)| p * q).sum::<f64>() * scale;
            }
        }
    }
    for (a, r) in qr.clone().enumerate() {
        let row = &mut scores[a * nk..(a + 1) * nk];
        let keep = |b: usize| x.ids.is_none_or(|ids| ids[r] == ids[kr.start + b]);
        let mut max = f64::NEG_INFINITY;
        for (b, s) in row.iter().enumerate() {
            if keep(b) {
                max = max.max(*s);
            }
        }
        let mut total = 0.0;
        for (b, s) in row.iter_mut().enumerate() {
            *s = if keep(b) { (*s - max).exp() } else { 0.0 };
            total += *s;
        }
        let inv = 1.0 / total;
        row.iter_mut().for_each(|s| *s *= inv);
        out[r * d..(r + 1) * d].iter_mut().for_each(|v| *v = 0.0);
    }
    for tile in &tiles {
        for (a, r) in qr.clone().enumerate() {
            let row = &scores[a * nk..(a + 1) * nk];
            let o = &mut out[r * d..(r + 1) * d];
            for c in tile.clone() {
                let w = row[c - kr.start];
                for (ov, vv) in o.iter_mut().zip(&x.v[c * d..(c + 1) * d]) {
                    *ov += w * vv;
                }
            }
        }
    }
}

/// Attention restricted to each `(start, len)` block of rows.
fn blocked(x: &Rows, n: usize, bounds: &[(usize, usize)], counter: &mut OpCounter) -> Result<Tensor2> {
    let mut out = Tensor2::zeros(n, x.d);
    let mut scores = Vec::new();
    for &(start, len) in bounds {
        attend_block(x, start..start + len, start..start + len, out.data_mut(), &mut scores, counter);
    }
    Ok(out)
}

/// Attention stage of one schema. `Global` reads `input` directly; the
/// other schemas read the bucket-sorted rows and return sorted rows.
pub fn attention_stage(
    schema: Schema,
    input: &BenchInput,
    sorted: &SortedInput,
    chunk: usize,
    counter: &mut OpCounter,
) -> Result<Tensor2> {
    let n = input.len();
    let d = input.q.cols();
    let sorted_rows = Rows { q: sorted.q.data(), k: sorted.k.data(), v: sorted.v.data(), d, ids: Some(&sorted.ids) };
    match schema {
        Schema::Global => {
            // Query rows in blocks so the score rows stay cache resident.
            let x = Rows { q: input.q.data(), k: input.k.data(), v: input.v.data(), d, ids: None };
            let mut out = Tensor2::zeros(n, d);
            let mut scores = Vec::new();
            for start in (0..n).step_by(QUERY_BLOCK) {
                let end = (start + QUERY_BLOCK).min(n);
                attend_block(&x, start..end, 0..n, out.data_mut(), &mut scores, counter);
            }
            Ok(out)
        }
        Schema::Bucket => {
            let mut bounds = Vec::new();
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && sorted.ids[end] == sorted.ids[start] {
                    end += 1;
                }
                bounds.push((start, end - start));
                start = end;
            }
            blocked(&sorted_rows, n, &bounds, counter)
        }
        Schema::Chunk | Schema::ShiftedChunk => {
            let layout = partition(n, chunk)?;
            if layout.pad_count != 0 {
                return Err(Error::Config(format!("benchmark length {n} must be a multiple of chunk {chunk}")));
            }
            let bounds: Vec<(usize, usize)> = (0..layout.chunks).map(|j| (j * chunk, chunk)).collect();
            if schema == Schema::Chunk {
                return blocked(&sorted_rows, n, &bounds, counter);
            }
            let shift = shift_indices(n, chunk / 2);
            let ids: Vec<u64> = shift.iter().map(|&i| sorted.ids[i]).collect();
            let (q, k, v) = (sorted.q.gather_rows(&shift)?, sorted.k.gather_rows(&shift)?, sorted.v.gather_rows(&shift)?);
            let x = Rows { q: q.data(), k: k.data(), v: v.data(), d, ids: Some(&ids) };
            let out = blocked(&x, n, &bounds, counter)?;
            out.gather_rows(&shift_indices(n, n - chunk / 2))
        }
    }
}

/// Query rows per global-attention score block.
pub const QUERY_BLOCK: usize = 64;

/// Key rows per tile inside one score block.
pub const KEY_TILE: usize = 64;

/// Output of a schema in the original row order.
pub fn run_schema(schema: Schema, input: &BenchInput, chunk: usize) -> Result<(Tensor2, OpCounter, u64)> {
    let sorted = sort_input(input)?;
    let mut counter = OpCounter::default();
    let out = attention_stage(schema, input, &sorted, chunk, &mut counter)?;
    if schema.sorts() {
        Ok((sorted.assignment.restore(&out)?, counter, sorted.comparisons))
    } else {
        Ok((out, counter, 0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaReport {
    pub schema: Schema,
    pub len: usize,
    pub chunk: usize,
    pub dim: usize,
    /// Median wall time of one attention-stage call, milliseconds.
    pub median_ms: f64,
    pub macs: u64,
    pub sort_comparisons: u64,
    /// Largest score matrix materialized, in elements.
    pub peak_intermediate: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schemas: Vec<Schema>,
    pub lens: Vec<usize>,
    pub chunk: usize,
    pub dim: usize,
    /// Hash width used to bucket the benchmark rows.
    pub hash_bits: usize,
    pub trials: usize,
    /// Each trial repeats the kernel until at least this much time passed.
    pub min_trial_ms: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemas: Schema::ALL.to_vec(),
            lens: vec![256, 512, 1024, 2048],
            chunk: 64,
            dim: 64,
            hash_bits: 16,
            trials: 7,
            min_trial_ms: 50.0,
            seed: 3,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 3 {
            return Err(Error::Config(format!("trials must be >= 3, got {}", self.trials)));
        }
        if self.lens.is_empty() || self.lens.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("lens must be non-empty and strictly ascending".into()));
        }
        if self.schemas.is_empty() {
            return Err(Error::Config("no schemas selected".into()));
        }
        partition(1, self.chunk)?;
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times the attention stage of every schema at every length. Inputs are
/// identical across schemas at a given length. Trials are interleaved: each
/// round times every (length, schema) pair once, so slow drift of the
/// machine affects all lengths alike. Single-threaded.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SchemaReport>> {
    config.validate()?;
    struct Cell {
        input: usize,
        schema: Schema,
        counter: OpCounter,
        reps: usize,
        times: Vec<f64>,
    }
    let mut inputs = Vec::with_capacity(config.lens.len());
    for &len in &config.lens {
        let input = BenchInput::random(len, config.dim, config.hash_bits, config.seed ^ len as u64)?;
        let sorted = sort_input(&input)?;
        inputs.push((input, sorted));
    }
    let mut cells = Vec::new();
    for (i, (input, sorted)) in inputs.iter().enumerate() {
        for &schema in &config.schemas {
            let mut counter = OpCounter::default();
            let warm = Instant::now();
            attention_stage(schema, input, sorted, config.chunk, &mut counter)?;
            let once_ms = warm.elapsed().as_secs_f64() * 1e3;
            let reps = ((config.min_trial_ms / once_ms.max(1e-6)).ceil() as usize).clamp(1, 100_000);
            cells.push(Cell { input: i, schema, counter, reps, times: Vec::with_capacity(config.trials) });
        }
    }
    for _ in 0..config.trials {
        for cell in &mut cells {
            let (input, sorted) = &inputs[cell.input];
            let start = Instant::now();
            for _ in 0..cell.reps {
                let mut scratch = OpCounter::default();
                std::hint::black_box(attention_stage(cell.schema, input, sorted, config.chunk, &mut scratch)?);
            }
            cell.times.push(start.elapsed().as_secs_f64() * 1e3 / cell.reps as f64);
        }
    }
    Ok(cells
        .into_iter()
        .map(|cell| {
            let (input, sorted) = &inputs[cell.input];
            SchemaReport {
                schema: cell.schema,
                len: input.len(),
                chunk: config.chunk,
                dim: config.dim,
                median_ms: median(cell.times),
                macs: cell.counter.macs,
                sort_comparisons: if cell.schema.sorts() { sorted.comparisons } else { 0 },
                peak_intermediate: cell.counter.peak_intermediate,
            }
        })
        .collect())
}

/// Time ratio of the attention stage between lengths `len` and `2 * len`
/// for one schema. Every trial times both lengths back to back, in
/// alternating order, and yields one ratio; the median ratio is returned
/// along with all of them.
pub fn paired_doubling_ratio(
    schema: Schema,
    len: usize,
    config: &SweepConfig,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    let mut cases = Vec::with_capacity(2);
    for n in [len, 2 * len] {
        let input = BenchInput::random(n, config.dim, config.hash_bits, config.seed ^ n as u64)?;
        let sorted = sort_input(&input)?;
        let warm = Instant::now();
        attention_stage(schema, &input, &sorted, config.chunk, &mut OpCounter::default())?;
        let once_ms = warm.elapsed().as_secs_f64() * 1e3;
        let reps = ((config.min_trial_ms / once_ms.max(1e-6)).ceil() as usize).clamp(1, 100_000);
        cases.push((input, sorted, reps));
    }
    let time = |i: usize| -> Result<f64> {
        let (input, sorted, reps) = &cases[i];
        let start = Instant::now();
        for _ in 0..*reps {
            let mut scratch = OpCounter::default();
            std::hint::black_box(attention_stage(schema, input, sorted, config.chunk, &mut scratch)?);
        }
        Ok(start.elapsed().as_secs_f64() * 1e3 / *reps as f64)
    };
    let mut ratios = Vec::with_capacity(config.trials);
    for t in 0..config.trials {
        let (short, long) = if t % 2 == 0 {
            let a = time(0)?;
            (a, time(1)?)
        } else {
            let b = time(1)?;
            (time(0)?, b)
        };
        ratios.push(long / short);
    }
    Ok((median(ratios.clone()), ratios))
}

pub const CSV_HEADER: &str = "schema,L,c,d,macs,sort_comparisons,median_ms";

pub fn write_csv(mut w: impl Write, reports: &[SchemaReport]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6}",
            r.schema, r.len, r.chunk, r.dim, r.macs, r.sort_comparisons, r.median_ms
        )?;
    }
    Ok(())
}

/// Time ratio between consecutive lengths for one schema.
pub fn doubling_ratios(reports: &[SchemaReport], schema: Schema) -> Vec<(usize, usize, f64)> {
    let rows: Vec<&SchemaReport> = reports.iter().filter(|r| r.schema == schema).collect();
    rows.windows(2).map(|w| (w[0].len, w[1].len, w[1].median_ms / w[0].median_ms)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(closed_form_macs(Schema::Global, 1024, 64, 64), Some(2 * 1024 * 1024 * 64));
        assert_eq!(closed_form_macs(Schema::Chunk, 1024, 64, 64), Some(2 * 1024 * 64 * 64));
        assert_eq!(closed_form_macs(Schema::Chunk, 100, 64, 64), None);
    }

    #[test]
    fn counters_match_closed_forms_on_small_input() {
        let input = BenchInput::random(64, 8, 6, 1).unwrap();
        for schema in [Schema::Global, Schema::Chunk, Schema::ShiftedChunk] {
            let (_, c, _) = run_schema(schema, &input, 16).unwrap();
            assert_eq!(Some(c.macs), closed_form_macs(schema, 64, 16, 8), "{schema}");
        }
        let (_, c, cmp) = run_schema(Schema::Bucket, &input, 16).unwrap();
        let sorted = sort_input(&input).unwrap();
        let mut sizes = std::collections::BTreeMap::new();
        for id in &sorted.ids {
            *sizes.entry(*id).or_insert(0u64) += 1;
        }
        assert_eq!(c.macs, sizes.values().map(|n| 2 * n * n * 8).sum::<u64>());
        assert!(cmp > 0);
    }

    #[test]
    fn degenerate_single_bucket_all_schemas_agree() {
        let input = BenchInput::single_bucket(16, 4, 9);
        let (reference, _, _) = run_schema(Schema::Global, &input, 16).unwrap();
        for schema in Schema::ALL {
            let (out, _, _) = run_schema(schema, &input, 16).unwrap();
            assert!(out.max_abs_diff(&reference) < 1e-12, "{schema}");
        }
    }

    #[test]
    fn sweep_validation() {
        let bad = SweepConfig { trials: 2, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SweepConfig { lens: vec![512, 256], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let cfg = SweepConfig { lens: vec![32, 64], chunk: 8, dim: 4, trials: 3, min_trial_ms: 0.0, ..Default::default() };
        let reports = run_sweep(&cfg).unwrap();
        assert_eq!(reports.len(), 8);
        let mut buf = Vec::new();
        write_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 9);
    }
}
