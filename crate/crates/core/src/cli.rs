//! Command-line front end: `generate | train | eval | cv | inspect`.
//!
//! Settings resolve as defaults, then the `--config` TOML file, then flags.
//! The config file is flat: run options and training fields share one table.
//! Every command writes the resolved config as `config.toml` into its output directory.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, save_dataset, SyntheticSpec};
use crate::head::HeadKeys;
use crate::inspect::{export, CaseFilter};
use crate::model::TrainedModel;
use crate::train_eval::{
    bootstrap_eval, cross_validate, derive_seed, fit_holdout, EvalReport, TrainConfig, METRIC_NAMES,
};
use crate::{Error, Result};

const DEFAULT_OUT: &str = "concare-out";

/// Command-independent run options; training fields live in [`TrainConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub cases: usize,
    pub features: usize,
    pub baseline: usize,
    pub label_noise: f64,
    pub prevalence: f64,
    /// `[feature, baseline flag]` pairs.
    pub interactions: Vec<[usize; 2]>,
    /// Bootstrap replicates for `eval`; 0 reports point estimates only.
    pub bootstrap: usize,
    pub folds: usize,
    pub parallel: bool,
    pub filter: Option<String>,
    pub per_patient: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dataset: None,
            model: None,
            out: None,
            cases: 1000,
            features: 4,
            baseline: 2,
            label_noise: 0.0,
            prevalence: 0.25,
            interactions: Vec::new(),
            bootstrap: 0,
            folds: 10,
            parallel: false,
            filter: None,
            per_patient: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub options: RunOptions,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Parses a flat TOML table, rejecting keys that belong to neither section.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(one_line(&e.to_string())))?;
        let train_keys = toml::Table::try_from(TrainConfig::default())
            .map_err(|e| Error::Config(e.to_string()))?;
        let (train, options): (toml::Table, toml::Table) = table
            .into_iter()
            .partition(|(k, _)| train_keys.contains_key(k));
        let parse_err = |e: toml::de::Error| Error::Config(one_line(&e.to_string()));
        Ok(Self {
            options: options.try_into().map_err(parse_err)?,
            train: train.try_into().map_err(parse_err)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        let err = |e: toml::ser::Error| Error::Config(e.to_string());
        let mut table = toml::Table::try_from(&self.options).map_err(err)?;
        table.extend(toml::Table::try_from(&self.train).map_err(err)?);
        toml::to_string(&table).map_err(err)
    }

    fn out_dir(&self) -> PathBuf {
        self.options
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn write_resolved(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("config.toml"), &self.to_toml()?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "concare", version, about = "Clinical risk prediction from irregular patient time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort and its ground-truth manifest.
    Generate(GenerateArgs),
    /// Train on a holdout split and save the model.
    Train(TrainArgs),
    /// Score a dataset with a saved model.
    Eval(EvalArgs),
    /// k-fold cross-validation.
    Cv(CvArgs),
    /// Export decay rates and attention maps.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat TOML file with run options and training fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    /// Baseline dimensions: age plus binary flags.
    #[arg(long)]
    pub baseline: Option<usize>,
    /// Probability of flipping each label.
    #[arg(long)]
    pub label_noise: Option<f64>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    /// Feature × baseline-flag interaction as `FEATURE:FLAG`; repeatable.
    #[arg(long = "interaction", value_parser = parse_pair)]
    pub interactions: Vec<[usize; 2]>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "epochs")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Weight of the cross-head decorrelation penalty; 0 disables it.
    #[arg(long)]
    pub lambda_decorr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn: Option<usize>,
    /// Ignore visit timestamps in the per-feature attention.
    #[arg(long)]
    pub time_unaware: bool,
    /// Separate key projection per position in the risk head.
    #[arg(long)]
    pub per_position_keys: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Train folds concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Restrict attention averages, e.g. `label=1` or `flag1=0`.
    #[arg(long)]
    pub filter: Option<String>,
    /// Also write per-patient final attention weights.
    #[arg(long)]
    pub per_patient: bool,
}

fn parse_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not FEATURE:FLAG"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
    Ok([parse(a)?, parse(b)?])
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.train.seed, common.seed);
    if common.out.is_some() {
        cfg.options.out = common.out.clone();
    }
    Ok(cfg)
}

fn apply_model_args(train: &mut TrainConfig, a: &ModelArgs) {
    set(&mut train.lr, a.lr);
    set(&mut train.batch_size, a.batch_size);
    set(&mut train.max_epochs, a.max_epochs);
    set(&mut train.patience, a.patience);
    set(&mut train.lambda_decorr, a.lambda_decorr);
    set(&mut train.hidden, a.hidden);
    set(&mut train.heads, a.heads);
    set(&mut train.ffn, a.ffn);
    if a.time_unaware {
        train.time_aware = false;
    }
    if a.per_position_keys {
        train.head_keys = HeadKeys::PerPosition;
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("missing `{what}` (flag --{what} or config key)")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs one parsed command, writing human-readable progress to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, text: String| {
        let _ = writeln!(out, "{text}");
    };
    match cli.command {
        Command::Generate(a) => {
            let mut cfg = resolve(&a.common)?;
            let o = &mut cfg.options;
            set(&mut o.cases, a.cases);
            set(&mut o.features, a.features);
            set(&mut o.baseline, a.baseline);
            set(&mut o.label_noise, a.label_noise);
            set(&mut o.prevalence, a.prevalence);
            if !a.interactions.is_empty() {
                o.interactions = a.interactions;
            }
            let mut spec = SyntheticSpec::new(o.features, o.baseline, o.cases, cfg.train.seed);
            spec.label_noise = o.label_noise;
            spec.target_prevalence = o.prevalence;
            spec.interactions = o.interactions.iter().map(|p| (p[0], p[1])).collect();
            let (dataset, manifest) = generate_synthetic(&spec)?;

            let dir = cfg.out_dir();
            create_dir(&dir)?;
            let path = dir.join("dataset.jsonl");
            save_dataset(&dataset, &path)?;
            manifest.save(dir.join("manifest.json"))?;
            cfg.write_resolved(&dir)?;
            say(
                stdout,
                format!(
                    "cases={} prevalence={:.4} dataset={}",
                    dataset.len(),
                    manifest.prevalence,
                    path.display()
                ),
            );
        }
        Command::Train(a) => {
            let mut cfg = resolve(&a.common)?;
            if a.dataset.is_some() {
                cfg.options.dataset = a.dataset;
            }
            apply_model_args(&mut cfg.train, &a.model);
            let raw = load_dataset(required(&cfg.options.dataset, "dataset")?)?;
            let run = fit_holdout(&raw, &cfg.train)?;

            let dir = cfg.out_dir();
            create_dir(&dir)?;
            run.model.save(dir.join("model.json"))?;
            let log_path = dir.join("train_log.jsonl");
            let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            run.log.write_jsonl(&mut log_file)?;
            cfg.write_resolved(&dir)?;
            say(
                stdout,
                format!(
                    "epochs={} best_epoch={} train={} validation={} test={}",
                    run.log.records.len(),
                    run.log.best_epoch,
                    run.split.train.len(),
                    run.split.validation.len(),
                    run.split.test.len()
                ),
            );
            if let Some(report) = &run.test_report {
                write_json(&dir.join("test_report.json"), report)?;
                say(stdout, report.to_table());
            }
        }
        Command::Eval(a) => {
            let mut cfg = resolve(&a.common)?;
            if a.model.is_some() {
                cfg.options.model = a.model;
            }
            if a.dataset.is_some() {
                cfg.options.dataset = a.dataset;
            }
            set(&mut cfg.options.bootstrap, a.bootstrap);
            let model = TrainedModel::load(required(&cfg.options.model, "model")?)?;
            let raw = load_dataset(required(&cfg.options.dataset, "dataset")?)?;
            let prepared = model.prepare(&raw)?;
            let all: Vec<usize> = (0..prepared.len()).collect();
            let scores = model.scores(&prepared, &all);
            let labels = prepared.labels(&all);
            let report = if cfg.options.bootstrap > 0 {
                bootstrap_eval(
                    &scores,
                    &labels,
                    cfg.options.bootstrap,
                    derive_seed(cfg.train.seed, 4),
                )?
            } else {
                EvalReport::point(&scores, &labels)?
            };

            let dir = cfg.out_dir();
            create_dir(&dir)?;
            write_json(&dir.join("report.json"), &report)?;
            cfg.write_resolved(&dir)?;
            say(stdout, report.to_table());
        }
        Command::Cv(a) => {
            let mut cfg = resolve(&a.common)?;
            if a.dataset.is_some() {
                cfg.options.dataset = a.dataset;
            }
            set(&mut cfg.options.folds, a.folds);
            cfg.options.parallel |= a.parallel;
            apply_model_args(&mut cfg.train, &a.model);
            let raw = load_dataset(required(&cfg.options.dataset, "dataset")?)?;
            let result = cross_validate(&raw, cfg.options.folds, &cfg.train, cfg.options.parallel)?;

            let dir = cfg.out_dir();
            create_dir(&dir)?;
            write_json(&dir.join("cv_report.json"), &result.report)?;
            let folds_path = dir.join("folds.csv");
            let file = fs::File::create(&folds_path).map_err(|e| Error::io(&folds_path, e))?;
            let mut w = csv::Writer::from_writer(file);
            let header = ["fold", "n_test", "best_epoch"].into_iter().chain(METRIC_NAMES);
            w.write_record(header)?;
            for f in &result.folds {
                let mut row = vec![f.fold.to_string(), f.test_indices.len().to_string(), f.best_epoch.to_string()];
                row.extend(f.metrics.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&folds_path, e))?;
            cfg.write_resolved(&dir)?;
            say(stdout, result.report.to_table());
        }
        Command::Inspect(a) => {
            let mut cfg = resolve(&a.common)?;
            if a.model.is_some() {
                cfg.options.model = a.model;
            }
            if a.dataset.is_some() {
                cfg.options.dataset = a.dataset;
            }
            if a.filter.is_some() {
                cfg.options.filter = a.filter;
            }
            cfg.options.per_patient |= a.per_patient;
            let filter = cfg
                .options
                .filter
                .as_deref()
                .map(str::parse::<CaseFilter>)
                .transpose()?;
            let model = TrainedModel::load(required(&cfg.options.model, "model")?)?;
            let raw = load_dataset(required(&cfg.options.dataset, "dataset")?)?;
            let dir = cfg.out_dir();
            let out = export(&model, &raw, filter.as_ref(), cfg.options.per_patient, &dir)?;
            cfg.write_resolved(&dir)?;
            say(
                stdout,
                format!(
                    "selected={} heads={} decay={}",
                    out.n_selected,
                    out.heads.len(),
                    out.decay.display()
                ),
            );
        }
    }
    Ok(())
}

/// Single-line JSON error record.
pub fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": one_line(message) }).to_string()
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage");
            eprintln!("{}", error_line("usage", first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
