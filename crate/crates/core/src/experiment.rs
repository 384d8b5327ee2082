//! Training runs on a synthetic dataset, and matched-seed ablations over
//! architecture variants.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::chunk::AttentionSchema;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{evaluate, train, EvalMetrics, ModelParams, StepRecord, TrainConfig};

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub history: Vec<StepRecord>,
    /// Metrics on the validation split after the last step.
    pub val: EvalMetrics,
    pub test: EvalMetrics,
}

/// Initializes a model sized for `data` and trains it under `config`.
pub fn fit(data: &Dataset, config: &TrainConfig, on_record: impl FnMut(&StepRecord)) -> Result<FitOutcome> {
    let spec = &data.spec;
    let mut params = ModelParams::init(config.model_config(spec.behavior_dim, spec.behavior_dim, spec.user_dim))?;
    let train_set = data.prepared(&params, Split::Train)?;
    let val_set = data.prepared(&params, Split::Val)?;
    let test_set = data.prepared(&params, Split::Test)?;
    let history = train(&mut params, config, &train_set, &val_set, on_record)?;
    let val = evaluate(&params, &val_set)?;
    let test = evaluate(&params, &test_set)?;
    Ok(FitOutcome { params, history, val, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Schema(AttentionSchema),
    Blocks(usize),
    /// Keeps the last `seq_len / divisor` behaviors.
    Length { divisor: usize },
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Baseline,
        Variant::Schema(AttentionSchema::Chunk),
        Variant::Schema(AttentionSchema::Global),
        Variant::Blocks(2),
        Variant::Blocks(6),
        Variant::Length { divisor: 10 },
        Variant::Length { divisor: 2 },
        Variant::Length { divisor: 1 },
    ];

    pub fn name(self) -> String {
        match self {
            Variant::Baseline => "baseline".into(),
            Variant::Schema(s) => s.name().into(),
            Variant::Blocks(t) => format!("t{t}"),
            Variant::Length { divisor: 1 } => "len".into(),
            Variant::Length { divisor } => format!("len/{divisor}"),
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|v| v.name()).collect()
    }

    /// `base` with this variant's change applied.
    pub fn apply(self, base: &TrainConfig, seq_len: usize) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Baseline => {}
            Variant::Schema(s) => cfg.schema = s,
            Variant::Blocks(t) => cfg.blocks = t,
            Variant::Length { divisor } => cfg.max_len = Some((seq_len / divisor).max(1)),
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown variant {s:?}; valid variants: {}", Self::names().join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRun {
    pub variant: String,
    pub seed: u64,
    pub auc: f64,
    pub logloss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationSummary {
    pub variant: String,
    pub runs: usize,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub logloss_mean: f64,
    pub logloss_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub summary: Vec<AblationSummary>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains every variant once per seed on the same data. Seed `k` sets the
/// init and batch-order seed to `base.seed + k` for every variant, so runs
/// sharing `k` differ only in the variant. Metrics are on the test split.
pub fn ablate(
    data: &Dataset,
    base: &TrainConfig,
    variants: &[Variant],
    seeds: usize,
    mut on_run: impl FnMut(&AblationRun),
) -> Result<AblationReport> {
    if variants.is_empty() || seeds == 0 {
        return Err(Error::Config("ablation needs at least one variant and one seed".into()));
    }
    let mut runs = Vec::new();
    for k in 0..seeds as u64 {
        for &variant in variants {
            let mut cfg = variant.apply(base, data.spec.seq_len);
            cfg.seed = base.seed.wrapping_add(k);
            let out = fit(data, &cfg, |_| {})?;
            let run = AblationRun { variant: variant.name(), seed: cfg.seed, auc: out.test.auc, logloss: out.test.logloss };
            on_run(&run);
            runs.push(run);
        }
    }
    let summary = variants
        .iter()
        .map(|v| {
            let name = v.name();
            let mine: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == name).collect();
            let (auc_mean, auc_sd) = mean_sd(&mine.iter().map(|r| r.auc).collect::<Vec<_>>());
            let (logloss_mean, logloss_sd) = mean_sd(&mine.iter().map(|r| r.logloss).collect::<Vec<_>>());
            AblationSummary { variant: name, runs: mine.len(), auc_mean, auc_sd, logloss_mean, logloss_sd }
        })
        .collect();
    Ok(AblationReport { runs, summary })
}

impl AblationReport {
    /// Markdown comparison table, one row per variant.
    pub fn table(&self) -> String {
        let mut s = String::from("| variant | runs | AUC | LogLoss |\n|---|---|---|---|\n");
        for r in &self.summary {
            s += &format!(
                "| {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} |\n",
                r.variant, r.runs, r.auc_mean, r.auc_sd, r.logloss_mean, r.logloss_sd
            );
        }
        s
    }
}
