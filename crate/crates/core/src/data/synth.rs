//! Cluster-structured synthetic CTR data.
//!
//! `clusters` unit-norm centers (pairwise at least `min_center_angle_deg`
//! apart) each own `items_per_cluster` items: the center plus isotropic
//! Gaussian noise whose expected norm is `noise_scale` times the center
//! norm. Each user likes `interests_per_user` clusters and has a fixed
//! behavior sequence drawn from them. A sample pairs a user with a target
//! item from a uniformly random cluster; the clean label says whether that
//! cluster is one of the user's interests, and training labels are flipped
//! with probability `label_noise`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::cache::EmbeddingCache;
use crate::diff::Tensor2;
use crate::error::{Error, Result};
use crate::model::{prepare, ModelParams, PreparedSample, PreparedSequence, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub behavior_dim: usize,
    pub items_per_cluster: usize,
    pub users: usize,
    pub samples_per_user: usize,
    pub seq_len: usize,
    pub interests_per_user: usize,
    pub user_dim: usize,
    pub label_noise: f64,
    pub noise_scale: f64,
    pub min_center_angle_deg: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Also flip validation and test labels.
    pub noisy_holdout: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clusters: 8,
            behavior_dim: 32,
            items_per_cluster: 64,
            users: 1000,
            samples_per_user: 4,
            seq_len: 128,
            interests_per_user: 3,
            user_dim: 8,
            label_noise: 0.05,
            noise_scale: 0.1,
            min_center_angle_deg: 30.0,
            val_fraction: 0.1,
            test_fraction: 0.1,
            noisy_holdout: false,
            seed: 17,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.clusters < 2 {
            return bad(format!("clusters must be >= 2, got {}", self.clusters));
        }
        if self.interests_per_user == 0 || self.interests_per_user > self.clusters {
            return bad(format!(
                "interests_per_user must be in 1..={} (clusters), got {}",
                self.clusters, self.interests_per_user
            ));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label_noise must be in [0, 0.5), got {}", self.label_noise));
        }
        for (name, v) in [
            ("behavior_dim", self.behavior_dim),
            ("items_per_cluster", self.items_per_cluster),
            ("users", self.users),
            ("samples_per_user", self.samples_per_user),
            ("seq_len", self.seq_len),
            ("user_dim", self.user_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be finite and >= 0".into());
        }
        if !(0.0..90.0).contains(&self.min_center_angle_deg) {
            return bad("min_center_angle_deg must be in [0, 90)".into());
        }
        let holdout = self.val_fraction + self.test_fraction;
        if self.val_fraction < 0.0 || self.test_fraction < 0.0 || holdout >= 1.0 {
            return bad("val_fraction + test_fraction must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Fraction of samples whose clean label is 1.
    pub fn positive_rate(&self) -> f64 {
        self.interests_per_user as f64 / self.clusters as f64
    }
}

/// AUC of the cluster-membership oracle against labels flipped with
/// probability `noise`, for clean positive rate `p`. Ties between equal
/// oracle scores count one half.
pub fn oracle_auc_bound(p: f64, noise: f64) -> f64 {
    let pos_hit = p * (1.0 - noise) / (p * (1.0 - noise) + (1.0 - p) * noise);
    let neg_hit = (1.0 - p) * (1.0 - noise) / ((1.0 - p) * (1.0 - noise) + p * noise);
    pos_hit * neg_hit + 0.5 * (pos_hit * (1.0 - neg_hit) + (1.0 - pos_hit) * neg_hit)
}

/// One JSON-lines sample; embeddings are referenced by cache id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub user: u64,
    pub target: u64,
    pub target_cluster: usize,
    pub behaviors: Vec<u64>,
    pub user_interests: Vec<usize>,
    pub profile: Vec<f32>,
    /// Observed label (possibly flipped).
    pub label: u8,
    pub clean_label: u8,
}

impl SampleRecord {
    /// Whether the target cluster is one of the user's interests.
    pub fn oracle_score(&self) -> f64 {
        f64::from(u8::from(self.user_interests.contains(&self.target_cluster)))
    }

    pub fn resolve(&self, cache: &EmbeddingCache) -> Result<Sample> {
        Ok(Sample {
            user: Tensor2::row_vector(self.profile.iter().map(|&v| f64::from(v)).collect()),
            target: row_of(cache, self.target)?,
            behaviors: rows_of(cache, &self.behaviors)?,
            label: self.label,
        })
    }
}

pub fn row_of(cache: &EmbeddingCache, id: u64) -> Result<Tensor2> {
    Ok(Tensor2::row_vector(cache.get(id)?.iter().map(|&v| f64::from(v)).collect()))
}

pub fn rows_of(cache: &EmbeddingCache, ids: &[u64]) -> Result<Tensor2> {
    let mut data = Vec::with_capacity(ids.len() * cache.dim());
    for &id in ids {
        data.extend(cache.get(id)?.iter().map(|&v| f64::from(v)));
    }
    Tensor2::new(ids.len(), cache.dim(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?} (train, val, test)")))
    }
}

pub const CACHE_FILE: &str = "items.tbec";
pub const SPEC_FILE: &str = "spec.json";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: SyntheticSpec,
    pub centers: Vec<Vec<f64>>,
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub cache: EmbeddingCache,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[SampleRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.split(split).iter().map(|r| r.resolve(&self.cache)).collect()
    }

    /// Resolved and hash-sorted samples of `split`; each user's behavior
    /// sequence is prepared once and shared.
    pub fn prepared(&self, params: &ModelParams, split: Split) -> Result<Vec<PreparedSample>> {
        let mut by_user: HashMap<u64, Arc<PreparedSequence>> = HashMap::new();
        self.split(split)
            .iter()
            .map(|r| {
                let sample = r.resolve(&self.cache)?;
                sample.validate(&params.config)?;
                let prep = match by_user.get(&r.user) {
                    Some(p) => Arc::clone(p),
                    None => {
                        let p = Arc::new(prepare(params, &sample.behaviors)?);
                        by_user.insert(r.user, Arc::clone(&p));
                        p
                    }
                };
                Ok(PreparedSample::with_sequence(&sample, prep))
            })
            .collect()
    }

    /// Writes `train.jsonl`, `val.jsonl`, `test.jsonl`, the embedding cache
    /// and the resolved spec into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for split in Split::ALL {
            let mut w = BufWriter::new(File::create(dir.join(format!("{}.jsonl", split.name())))?);
            for r in self.split(split) {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        self.cache.write(dir.join(CACHE_FILE))?;
        fs::write(dir.join(SPEC_FILE), serde_json::to_string_pretty(&self.spec)? + "\n")?;
        Ok(())
    }

    /// Reads a directory written by [`write_dir`](Self::write_dir). Cluster
    /// centers are not stored and come back empty.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: SyntheticSpec = serde_json::from_slice(&fs::read(dir.join(SPEC_FILE))?)?;
        let cache = EmbeddingCache::read(dir.join(CACHE_FILE))?;
        let mut splits = Vec::new();
        for split in Split::ALL {
            splits.push(read_jsonl(dir.join(format!("{}.jsonl", split.name())))?);
        }
        let test = splits.pop().expect("three splits");
        let val = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(Self { spec, centers: Vec::new(), train, val, test, cache })
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates the full dataset. Deterministic in `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.behavior_dim;

    let max_cos = spec.min_center_angle_deg.to_radians().cos();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.clusters);
    let mut attempts = 0;
    while centers.len() < spec.clusters {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Config(format!(
                "cannot place {} centers {}° apart in {d} dimensions",
                spec.clusters, spec.min_center_angle_deg
            )));
        }
        let c = unit_gaussian(&mut rng, d);
        if centers.iter().all(|o| crate::diff::dot(o, &c) <= max_cos) {
            centers.push(c);
        }
    }

    let per_coord = spec.noise_scale / (d as f64).sqrt();
    let mut cache = EmbeddingCache::new(d);
    for (k, center) in centers.iter().enumerate() {
        for i in 0..spec.items_per_cluster {
            let row: Vec<f32> = center
                .iter()
                .map(|&c| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    (c + per_coord * n) as f32
                })
                .collect();
            cache.insert((k * spec.items_per_cluster + i) as u64, &row)?;
        }
    }
    let item_of = |rng: &mut ChaCha8Rng, cluster: usize| {
        (cluster * spec.items_per_cluster + rng.random_range(0..spec.items_per_cluster)) as u64
    };

    let mut records = Vec::with_capacity(spec.users * spec.samples_per_user);
    let mut flips = Vec::with_capacity(records.capacity());
    for user in 0..spec.users {
        let mut interests = index::sample(&mut rng, spec.clusters, spec.interests_per_user).into_vec();
        interests.sort_unstable();
        let profile: Vec<f32> =
            (0..spec.user_dim).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v as f32).collect();
        let behaviors: Vec<u64> = (0..spec.seq_len)
            .map(|_| {
                let c = interests[rng.random_range(0..interests.len())];
                item_of(&mut rng, c)
            })
            .collect();
        for _ in 0..spec.samples_per_user {
            let target_cluster = rng.random_range(0..spec.clusters);
            let target = item_of(&mut rng, target_cluster);
            let clean = u8::from(interests.contains(&target_cluster));
            flips.push(rng.random_bool(spec.label_noise));
            records.push(SampleRecord {
                id: records.len() as u64,
                user: user as u64,
                target,
                target_cluster,
                behaviors: behaviors.clone(),
                user_interests: interests.clone(),
                profile: profile.clone(),
                label: clean,
                clean_label: clean,
            });
        }
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);
    let n = records.len();
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    let n_val = (n as f64 * spec.val_fraction).round() as usize;
    let n_train = n - n_test - n_val;
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(n_val);
    let mut test = Vec::with_capacity(n_test);
    for (pos, &k) in order.iter().enumerate() {
        let mut r = records[k].clone();
        let holdout = pos >= n_train;
        if flips[k] && (!holdout || spec.noisy_holdout) {
            r.label = 1 - r.clean_label;
        }
        if pos < n_train {
            train.push(r);
        } else if pos < n_train + n_val {
            val.push(r);
        } else {
            test.push(r);
        }
    }
    Ok(Dataset { spec: spec.clone(), centers, train, val, test, cache })
}
