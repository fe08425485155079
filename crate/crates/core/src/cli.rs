//! Command-line front end and the run-config file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_pipeline, AugmentationConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    curve_csv, evaluate, failures, nan_robustness_curve, normalized_csv, report_csv, EvalTask, Forecaster, MetricReport,
    PredictionRecord, SeasonalNaive, StoredForecasts,
};
use crate::generators::{generate, GeneratorSettings, Source};
use crate::model::checkpoint::load_checkpoint;
use crate::model::{Model, ModelConfig};
use crate::seed;
use crate::stats;
use crate::timeseries::{read_dataset, write_dataset, DatasetFormat, FreqUnit, Frequency, TimeSeries};
use crate::training::{train, TrainConfig, TrainSource, TrainerState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub count: usize,
    pub length: usize,
    /// Source names; empty means every source.
    pub sources: Vec<String>,
    /// Source name to weight; absent sources weigh 1.
    pub weights: BTreeMap<String, f64>,
    /// Fixed frequency such as `"1H"`; random per series when absent.
    pub frequency: Option<String>,
    pub settings: GeneratorSettings,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            count: 100,
            length: 512,
            sources: Vec::new(),
            weights: BTreeMap::new(),
            frequency: None,
            settings: GeneratorSettings::default(),
        }
    }
}

impl GenerationConfig {
    pub fn resolved_sources(&self) -> Result<Vec<Source>> {
        if self.sources.is_empty() {
            return Ok(Source::all());
        }
        self.sources.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Trailing values of each task series held out as the target.
    pub horizon: usize,
    /// Seasonal period for the baseline and MASE; from the frequency when absent.
    pub season: Option<usize>,
    pub fractions: Vec<f64>,
    pub dataset_name: String,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            season: None,
            fractions: vec![0.0, 0.3, 0.6, 0.9],
            dataset_name: "dataset".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Dataset files used as training pools next to the generator sources.
    pub train_pools: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub generation: GenerationConfig,
    pub augmentation: AugmentationConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.augmentation.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        self.generation.resolved_sources()?;
        if self.generation.length < 2 {
            return Err(Error::Config("generation.length must be >= 2".into()));
        }
        if self.evaluation.horizon == 0 {
            return Err(Error::Config("evaluation.horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "tsweave", version, about = "Synthetic time-series priors, a linear-RNN quantile forecaster and its evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run-config JSON file [default: built-in defaults]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed [default: master_seed from the config, 0 without one]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for generation, augmentation and evaluation [default: available cores]
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a synthetic corpus into a dataset file
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output dataset file
        #[arg(long)]
        out: PathBuf,
        /// Number of series [default: generation.count]
        #[arg(long)]
        count: Option<usize>,
        /// Dataset format [default: jsonl]
        #[arg(long, value_parser = ["jsonl", "bin"])]
        format: Option<String>,
    },
    /// Run the augmentation pipeline over a dataset
    Augment {
        #[command(flatten)]
        common: Common,
        /// Source dataset file
        #[arg(long)]
        input: PathBuf,
        /// Output dataset file
        #[arg(long)]
        out: PathBuf,
        /// Number of augmented series [default: size of the input]
        #[arg(long)]
        count: Option<usize>,
        /// Dataset format [default: jsonl]
        #[arg(long, value_parser = ["jsonl", "bin"])]
        format: Option<String>,
    },
    /// Train a model; writes checkpoints and loss.csv into the output directory
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Optimizer steps [default: training.iterations]
        #[arg(long)]
        iterations: Option<usize>,
        /// Trainer state file to resume from [default: none]
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Write JSON-Lines quantile forecasts for every series of a dataset
    Forecast {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint [default: io.checkpoint]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset file [default: io.tasks]
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output predictions file
        #[arg(long)]
        out: PathBuf,
        /// Forecast length [default: evaluation.horizon]
        #[arg(long)]
        horizon: Option<usize>,
        /// Forecast past the end of each series instead of its held-out tail [default: off]
        #[arg(long)]
        future: bool,
    },
    /// Score a checkpoint, a predictions file or the seasonal-naive baseline
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Task dataset; the trailing horizon of each series is the target [default: io.tasks]
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Model checkpoint [default: io.checkpoint]
        #[arg(long, conflicts_with_all = ["predictions", "baseline"])]
        checkpoint: Option<PathBuf>,
        /// Predictions file written by `forecast` [default: none]
        #[arg(long, conflicts_with = "baseline")]
        predictions: Option<PathBuf>,
        /// Score the seasonal-naive forecaster itself [default: off]
        #[arg(long)]
        baseline: bool,
        /// Output directory for report.csv and normalized.csv
        #[arg(long)]
        out: PathBuf,
        /// Held-out length [default: evaluation.horizon]
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// CRPS against the share of missing history values
    NanSweep {
        #[command(flatten)]
        common: Common,
        /// Task dataset [default: io.tasks]
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Model checkpoint [default: io.checkpoint]
        #[arg(long, conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        /// Sweep the seasonal-naive forecaster [default: off]
        #[arg(long)]
        baseline: bool,
        /// Comma-separated fractions in [0, 1) [default: evaluation.fractions]
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Output curve CSV
        #[arg(long)]
        out: PathBuf,
        /// Held-out length [default: evaluation.horizon]
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Summary statistics of a dataset as JSON
    Inspect {
        /// Dataset file
        #[arg(long)]
        input: PathBuf,
        /// Output file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(common: &Common) -> Result<(RunConfig, u64)> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed_value = common.seed.unwrap_or(cfg.master_seed);
    Ok((cfg, seed_value))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidInput("--workers must be >= 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn format_of(flag: Option<&str>, cfg: &RunConfig) -> Result<DatasetFormat> {
    match flag {
        Some(s) => s.parse(),
        None => Ok(cfg.io.format.unwrap_or(DatasetFormat::Jsonl)),
    }
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::Config(format!("no {what} given (flag or io section)")))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { common, out, count, format } => {
            let (mut cfg, seed_value) = load_config(&common)?;
            if let Some(c) = count {
                cfg.generation.count = c;
            }
            let format = format_of(format.as_deref(), &cfg)?;
            let series = with_workers(common.workers, || generate_corpus(&cfg.generation, seed_value))?;
            write_dataset(&series, &out, format)
        }
        Command::Augment {
            common,
            input,
            out,
            count,
            format,
        } => {
            let (cfg, seed_value) = load_config(&common)?;
            let pool = read_dataset(&input)?;
            let n = count.unwrap_or(pool.len());
            let format = format_of(format.as_deref(), &cfg)?;
            let series = with_workers(common.workers, || augment_corpus(&pool, &cfg.augmentation, seed_value, n))?;
            write_dataset(&series, &out, format)
        }
        Command::Train {
            common,
            out,
            iterations,
            resume,
        } => {
            let (mut cfg, seed_value) = load_config(&common)?;
            if let Some(n) = iterations {
                cfg.training.iterations = n;
            }
            let sources = training_sources(&cfg)?;
            let mut state = match resume {
                Some(p) => TrainerState::load(&p)?,
                None => TrainerState::new(Model::new(cfg.model.clone(), seed::derive(seed_value, seed::stream_id("model"), 0))?),
            };
            let report = with_workers(common.workers, || train(&mut state, &sources, &cfg.training, seed_value, Some(&out)))?;
            let last = report.trace.last().map_or(f64::NAN, |r| r.loss);
            println!("trained to step {} (last loss {last})", state.opt.step);
            Ok(())
        }
        Command::Forecast {
            common,
            checkpoint,
            input,
            out,
            horizon,
            future,
        } => {
            let (cfg, _) = load_config(&common)?;
            let model = load_checkpoint(&required(checkpoint.or(cfg.io.checkpoint.clone()), "checkpoint")?)?;
            let series = read_dataset(&required(input.or(cfg.io.tasks.clone()), "input dataset")?)?;
            let h = horizon.unwrap_or(cfg.evaluation.horizon);
            let records = with_workers(common.workers, || forecast_records(&model, &series, h, future))?;
            let mut text = Vec::new();
            for r in &records {
                serde_json::to_writer(&mut text, r)?;
                text.push(b'\n');
            }
            fs::write(&out, text).map_err(|e| Error::io(&out, e))
        }
        Command::Evaluate {
            common,
            tasks,
            checkpoint,
            predictions,
            baseline,
            out,
            horizon,
        } => {
            let (cfg, _) = load_config(&common)?;
            let tasks = load_tasks(tasks.or(cfg.io.tasks.clone()), horizon.unwrap_or(cfg.evaluation.horizon), cfg.evaluation.season)?;
            let forecaster: Box<dyn Forecaster> = if baseline {
                Box::new(SeasonalNaive {
                    quantiles: cfg.model.quantiles.clone(),
                })
            } else if let Some(p) = predictions {
                Box::new(read_predictions(&p)?)
            } else {
                Box::new(load_checkpoint(&required(checkpoint.or(cfg.io.checkpoint.clone()), "checkpoint")?)?)
            };
            let report = with_workers(common.workers, || evaluate(forecaster.as_ref(), &tasks))?;
            write_report(&out, &cfg.evaluation.dataset_name, &report)
        }
        Command::NanSweep {
            common,
            tasks,
            checkpoint,
            baseline,
            fractions,
            out,
            horizon,
        } => {
            let (cfg, seed_value) = load_config(&common)?;
            let tasks = load_tasks(tasks.or(cfg.io.tasks.clone()), horizon.unwrap_or(cfg.evaluation.horizon), cfg.evaluation.season)?;
            let forecaster: Box<dyn Forecaster> = if baseline {
                Box::new(SeasonalNaive {
                    quantiles: cfg.model.quantiles.clone(),
                })
            } else {
                Box::new(load_checkpoint(&required(checkpoint.or(cfg.io.checkpoint.clone()), "checkpoint")?)?)
            };
            let fractions = fractions.unwrap_or(cfg.evaluation.fractions.clone());
            let curve = with_workers(common.workers, || nan_robustness_curve(forecaster.as_ref(), &tasks, &fractions, seed_value))?;
            fs::write(&out, curve_csv(&curve)).map_err(|e| Error::io(&out, e))
        }
        Command::Inspect { input, out } => {
            let series = read_dataset(&input)?;
            let text = serde_json::to_string_pretty(&inspect(&series))? + "\n";
            match out {
                Some(p) => fs::write(&p, text).map_err(|e| Error::io(&p, e)),
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| Error::io("<stdout>", e)),
            }
        }
    }
}

const GEN_FREQS: [FreqUnit; 6] = [
    FreqUnit::Minutes,
    FreqUnit::Hours,
    FreqUnit::Days,
    FreqUnit::Weeks,
    FreqUnit::Months,
    FreqUnit::Quarters,
];
const GEN_ATTEMPTS: usize = 10;

/// One series per index; index `i` depends only on `(seed, i)`.
pub fn generate_corpus(cfg: &GenerationConfig, seed_value: u64) -> Result<Vec<TimeSeries>> {
    let sources = cfg.resolved_sources()?;
    let weights: Vec<f64> = sources.iter().map(|s| cfg.weights.get(s.name()).copied().unwrap_or(1.0)).collect();
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("generation weights must be nonnegative and not all zero".into()));
    }
    let fixed: Option<Frequency> = cfg.frequency.as_deref().map(str::parse).transpose()?;
    (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng_for(seed_value, "generate", i as u64);
            let mut last = None;
            for _ in 0..GEN_ATTEMPTS {
                let src = sources[crate::sampling::weighted_index(&mut rng, &weights)];
                let freq = fixed.unwrap_or_else(|| Frequency::of(GEN_FREQS[rng.random_range(0..GEN_FREQS.len())]));
                match generate(src, &mut rng, cfg.length, freq, &cfg.settings) {
                    Ok(mut out) => {
                        let k = rng.random_range(0..out.len());
                        let s = out.swap_remove(k);
                        return Ok(s.with_id(format!("series_{i:06}")));
                    }
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap_or(Error::RetryExhausted {
                what: "generation",
                attempts: GEN_ATTEMPTS,
            }))
        })
        .collect()
}

/// Augmented series `i` depends only on `(seed, i)` and the pool.
pub fn augment_corpus(pool: &[TimeSeries], cfg: &AugmentationConfig, seed_value: u64, count: usize) -> Result<Vec<TimeSeries>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng_for(seed_value, "augment", i as u64);
            Ok(augment_pipeline(pool, &mut rng, cfg)?.with_id(format!("aug_{i:06}")))
        })
        .collect()
}

/// Generator sources from the generation section plus one pool per
/// `io.train_pools` file, named after the file stem.
pub fn training_sources(cfg: &RunConfig) -> Result<Vec<TrainSource>> {
    let mut out: Vec<TrainSource> = cfg
        .generation
        .resolved_sources()?
        .into_iter()
        .map(|s| {
            let mut t = TrainSource::generator(s);
            if let crate::training::SourceData::Generator { settings, .. } = &mut t.data {
                **settings = cfg.generation.settings.clone();
            }
            t
        })
        .collect();
    for p in &cfg.io.train_pools {
        let name = p.file_stem().map_or("pool".into(), |s| s.to_string_lossy().into_owned());
        out.push(TrainSource::pool(name, read_dataset(p)?));
    }
    Ok(out)
}

fn forecast_records(model: &Model, series: &[TimeSeries], horizon: usize, future: bool) -> Result<Vec<PredictionRecord>> {
    series
        .par_iter()
        .map(|s| {
            let history = if future {
                s.clone()
            } else {
                if horizon >= s.len() {
                    return Err(Error::InvalidInput(format!("series '{}' is not longer than the horizon", s.id)));
                }
                s.window(0, s.len() - horizon)?
            };
            let f = model.predict(&history, horizon)?;
            Ok(PredictionRecord {
                task_id: s.id.clone(),
                horizon,
                quantiles: f.quantiles,
                values: f.values,
            })
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<StoredForecasts> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = StoredForecasts::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: PredictionRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            index: i,
            reason: e.to_string(),
        })?;
        if out.by_task.is_empty() {
            out.quantiles = r.quantiles.clone();
        } else if out.quantiles != r.quantiles {
            return Err(Error::MalformedRecord {
                index: i,
                reason: "quantile levels differ from earlier records".into(),
            });
        }
        if r.values.len() != r.horizon {
            return Err(Error::MalformedRecord {
                index: i,
                reason: "values do not match the horizon".into(),
            });
        }
        out.by_task.insert(r.task_id, r.values);
    }
    Ok(out)
}

/// Every series becomes a task holding out its last `horizon` values.
pub fn tasks_from_dataset(series: &[TimeSeries], horizon: usize, season: Option<usize>) -> Result<Vec<EvalTask>> {
    series
        .iter()
        .map(|s| EvalTask::split(s, horizon, season.unwrap_or_else(|| s.freq.seasonal_period())))
        .collect()
}

fn load_tasks(path: Option<PathBuf>, horizon: usize, season: Option<usize>) -> Result<Vec<EvalTask>> {
    let series = read_dataset(&required(path, "task dataset")?)?;
    tasks_from_dataset(&series, horizon, season)
}

fn write_report(dir: &Path, dataset: &str, report: &MetricReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("report.csv");
    fs::write(&p, report_csv(report)).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("normalized.csv");
    fs::write(&p, normalized_csv(&[(dataset.to_string(), report.clone())])).map_err(|e| Error::io(&p, e))?;
    for (id, msg) in failures(report) {
        eprintln!("task {id}: {msg}");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub series: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub mean_length: f64,
    pub missing_fraction: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub frequencies: BTreeMap<String, usize>,
    /// Leading provenance token (generator or augmentation source) counts.
    pub provenance: BTreeMap<String, usize>,
}

pub fn inspect(series: &[TimeSeries]) -> DatasetSummary {
    let observed: Vec<f64> = series.iter().flat_map(|s| s.observed()).collect();
    let total: usize = series.iter().map(|s| s.len()).sum();
    let mut frequencies = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for s in series {
        *frequencies.entry(s.freq.to_string()).or_insert(0) += 1;
        let head = s.provenance.split(['|', ':', '(']).next().unwrap_or("").to_string();
        *provenance.entry(head).or_insert(0) += 1;
    }
    DatasetSummary {
        series: series.len(),
        min_length: series.iter().map(|s| s.len()).min().unwrap_or(0),
        max_length: series.iter().map(|s| s.len()).max().unwrap_or(0),
        mean_length: if series.is_empty() { 0.0 } else { total as f64 / series.len() as f64 },
        missing_fraction: if total == 0 { 0.0 } else { 1.0 - observed.len() as f64 / total as f64 },
        mean: stats::mean(&observed),
        std: stats::std_dev(&observed),
        min: observed.iter().copied().fold(f64::INFINITY, f64::min),
        max: observed.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        frequencies,
        provenance,
    }
}
