//! The `tbin` command line: `gen-data`, `train`, `eval`, `bench`, `ablate`.
//!
//! Every command takes an optional JSON `--config` file with flat keys and
//! any number of `--set key=value` overrides (applied in order, last wins).
//! Values parse as JSON when possible and as plain strings otherwise, so
//! `--set schema=c-sa` and `--set max_len=null` both work. Unknown keys are
//! rejected. The resolved configuration is written to the output directory.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::bench::{run_sweep, write_csv, SweepConfig};
use crate::data::{generate, Dataset, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::experiment::{ablate, fit, Variant};
use crate::model::{evaluate, load_checkpoint, save_checkpoint, TrainConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.tbin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BENCH_FILE: &str = "bench.csv";
pub const ABLATION_RUNS_FILE: &str = "ablation.jsonl";
pub const ABLATION_TABLE_FILE: &str = "ablation.md";

#[derive(Debug, Parser)]
#[command(name = "tbin", version, about = "LSH-sorted long behavior sequence CTR model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON file with flat configuration keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set users=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its embedding cache.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a model; writes a checkpoint and a metrics log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print `{"auc", "logloss"}` of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Time the attention schemas over a range of sequence lengths.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Matched-seed training runs of architecture variants.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma separated; defaults to every variant.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Defaults of `T`, then the keys of `file`, then `overrides` in order.
pub fn resolve_config<T>(file: Option<&Path>, overrides: &[String]) -> Result<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut merged = match serde_json::to_value(T::default())? {
        Value::Object(m) => m,
        _ => unreachable!("configs serialize to objects"),
    };
    if let Some(path) = file {
        let text = fs::read_to_string(path)?;
        match serde_json::from_str::<Value>(&text)? {
            Value::Object(m) => merged.extend(m),
            _ => return Err(Error::Config(format!("{} must hold a JSON object", path.display()))),
        }
    }
    apply_overrides(&mut merged, overrides)?;
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))
}

fn apply_overrides(map: &mut Map<String, Value>, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
        let key = key.trim();
        if !map.contains_key(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Runs one parsed command, writing its report to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData { out: dir, cfg } => {
            let spec: SyntheticSpec = resolve_config(cfg.config.as_deref(), &cfg.overrides)?;
            let data = generate(&spec)?;
            data.write_dir(&dir)?;
            let summary = serde_json::json!({
                "train": data.train.len(),
                "val": data.val.len(),
                "test": data.test.len(),
                "items": data.cache.len(),
                "positive_rate": spec.positive_rate(),
            });
            writeln!(out, "{summary}")?;
        }
        Command::Train { data, out: dir, cfg } => {
            let config: TrainConfig = resolve_config(cfg.config.as_deref(), &cfg.overrides)?;
            config.validate()?;
            let dataset = Dataset::read_dir(&data)?;
            fs::create_dir_all(&dir)?;
            write_json(&dir.join(CONFIG_FILE), &config)?;
            let mut log = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
            let mut log_err = None;
            let outcome = fit(&dataset, &config, |r| {
                if log_err.is_none() {
                    if let Err(e) = serde_json::to_writer(&mut log, r).map_err(Error::from).and_then(|_| {
                        log.write_all(b"\n")?;
                        Ok(())
                    }) {
                        log_err = Some(e);
                    }
                }
            })?;
            if let Some(e) = log_err {
                return Err(e);
            }
            log.flush()?;
            save_checkpoint(&outcome.params, dir.join(CHECKPOINT_FILE))?;
            let summary = serde_json::json!({
                "steps": config.steps,
                "val": outcome.val,
                "test": outcome.test,
            });
            writeln!(out, "{summary}")?;
        }
        Command::Eval { checkpoint, data, split } => {
            let split = Split::parse(&split)?;
            let params = load_checkpoint(&checkpoint)?;
            let dataset = Dataset::read_dir(&data)?;
            let samples = dataset.prepared(&params, split)?;
            let m = evaluate(&params, &samples)?;
            writeln!(out, "{}", serde_json::json!({ "auc": m.auc, "logloss": m.logloss }))?;
        }
        Command::Bench { out: dir, cfg } => {
            let config: SweepConfig = resolve_config(cfg.config.as_deref(), &cfg.overrides)?;
            config.validate()?;
            fs::create_dir_all(&dir)?;
            write_json(&dir.join(CONFIG_FILE), &config)?;
            let reports = run_sweep(&config)?;
            write_csv(File::create(dir.join(BENCH_FILE))?, &reports)?;
            write_csv(&mut *out, &reports)?;
        }
        Command::Ablate { data, out: dir, variants, seeds, cfg } => {
            let variants: Vec<Variant> = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| v.trim().parse()).collect::<Result<_>>()?
            };
            let config: TrainConfig = resolve_config(cfg.config.as_deref(), &cfg.overrides)?;
            config.validate()?;
            let dataset = Dataset::read_dir(&data)?;
            fs::create_dir_all(&dir)?;
            write_json(&dir.join(CONFIG_FILE), &config)?;
            let report = ablate(&dataset, &config, &variants, seeds, |_| {})?;
            let mut runs = BufWriter::new(File::create(dir.join(ABLATION_RUNS_FILE))?);
            for r in &report.runs {
                serde_json::to_writer(&mut runs, r)?;
                runs.write_all(b"\n")?;
            }
            runs.flush()?;
            let table = report.table();
            fs::write(dir.join(ABLATION_TABLE_FILE), &table)?;
            write!(out, "{table}")?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Failures print a single `error: <kind>: <message>`
/// line to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error: usage: {first}");
            return 2;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {}: {msg}", e.kind());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_last_wins_and_parse_json() {
        let cfg: TrainConfig =
            resolve_config(None, &["steps=3".into(), "schema=c-sa".into(), "steps=9".into()]).unwrap();
        assert_eq!(cfg.steps, 9);
        assert_eq!(cfg.schema, crate::chunk::AttentionSchema::Chunk);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = resolve_config::<TrainConfig>(None, &["stepz=3".into()]).unwrap_err();
        assert_eq!(e.kind(), "config");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"users": 5, "bogus": 1}"#).unwrap();
        let e = resolve_config::<SyntheticSpec>(Some(&path), &[]).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"users": 5, "seq_len": 16}"#).unwrap();
        let spec: SyntheticSpec = resolve_config(Some(&path), &["users=7".into()]).unwrap();
        assert_eq!((spec.users, spec.seq_len), (7, 16));
    }
}
