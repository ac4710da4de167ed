//! Command-line front end.
//!
//! Exit codes: `0` success, `1` usage error, `2` bad data or configuration,
//! `3` runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{Classifier, ClassifierKind, Model};
use crate::dataset::{
    expand_interval_labels, read_feature_csv, read_interval_labels, stratified_split, write_feature_csv, Label,
    LabeledSample, SplitSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, confusion_matrix, render_report, render_report_machine};
use crate::mlp::{gradient_check, train_mlp, MlpConfig, MlpModel};
use crate::pipeline::{run_stream, Pipeline, PipelineConfig, StreamSummary, Thresholds};
use crate::stream::write_frames;
use crate::svm::{train_svm, KernelSpec, SvmConfig};
use crate::synthgen::{generate_dataset, generate_sequence, ScenarioSpec};
use crate::tracking::{TrackerConfig, VelocityRuleConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "posewatch", version, about = "Skeleton-based fight detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic feature datasets or keypoint streams.
    #[command(subcommand)]
    GenData(GenData),
    /// Expand interval label rows into one label per frame.
    ExpandLabels(ExpandLabelsArgs),
    /// Stratified train/validation/test split of a feature CSV.
    Split(SplitArgs),
    /// Train a classifier head.
    #[command(subcommand)]
    Train(Train),
    /// Print a classification report for a model on a feature CSV.
    Evaluate(EvaluateArgs),
    /// Run stream inference over keypoint streams.
    Infer(InferArgs),
    /// Compare MLP backprop gradients against finite differences.
    GradientCheck(GradientCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum GenData {
    /// Labelled feature CSV.
    Dataset {
        #[arg(long, default_value_t = 452)]
        normal: usize,
        #[arg(long, default_value_t = 218)]
        fight: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Keypoint stream in JSON lines.
    Stream {
        #[arg(long, value_enum, default_value_t = Scenario::Fight)]
        scenario: Scenario,
        #[arg(long, default_value_t = 300)]
        frames: u64,
        /// People in the crowd scenario.
        #[arg(long, default_value_t = 10)]
        persons: usize,
        /// Keypoint jitter in body heights.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Optional per-frame, per-person label CSV.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Fight,
    Walker,
    StationaryWalk,
    TwoWalkers,
    Crowd,
}

#[derive(Debug, Args)]
pub struct ExpandLabelsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Receives train.csv, val.csv and test.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Train {
    Svm(TrainSvmArgs),
    Mlp(TrainMlpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Rbf,
    Linear,
}

#[derive(Debug, Args)]
pub struct TrainSvmArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelName>,
    /// RBF width; defaults to 1 / (features · variance).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_passes: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainMlpArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Validation CSV for per-epoch accuracy.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Fail unless the model is of this kind.
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<String>,
    /// Keypoint stream; repeat for several streams processed concurrently.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// One per input; without it all results go to stdout in input order.
    #[arg(long)]
    pub output: Vec<PathBuf>,
    #[arg(long)]
    pub t_warn: Option<f64>,
    #[arg(long)]
    pub t_alert: Option<f64>,
    /// Smoothing window in frames.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub hysteresis: Option<f64>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub grace_frames: Option<u32>,
    #[arg(long)]
    pub velocity_threshold: Option<f64>,
    #[arg(long)]
    pub no_velocity_rule: bool,
    /// Abort on the first malformed line.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GradientCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "64,32")]
    pub hidden: String,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Flat `key = value` settings; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim().replace('-', "_");
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("config line {}: unknown key '{key}'", n + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&fs::read_to_string(p)?, allowed),
            None => Ok(Self::default()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'"))))
            .transpose()
    }

    /// Flag value if given, otherwise the file's, otherwise `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }
}

pub const INFER_KEYS: &[&str] = &[
    "model",
    "classifier",
    "t_warn",
    "t_alert",
    "window",
    "hysteresis",
    "iou_threshold",
    "grace_frames",
    "velocity_threshold",
    "velocity_window",
    "velocity_rule",
    "min_keypoints",
    "strict",
];
pub const SVM_KEYS: &[&str] = &["seed", "kernel", "gamma", "c", "tol", "max_passes"];
pub const MLP_KEYS: &[&str] = &["seed", "hidden", "epochs", "batch_size", "lr", "dropout"];

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("invalid hidden layer list '{s}'"))))
        .collect()
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if is_stdio(path) {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

fn create_output(path: &Path) -> Result<Box<dyn Write>> {
    if is_stdio(path) {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn read_samples(path: &Path) -> Result<Vec<LabeledSample>> {
    read_feature_csv(open_input(path)?)
}

fn write_samples(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut out = create_output(path)?;
    write_feature_csv(samples, &mut out)?;
    out.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(e) if !matches!(e.kind(), io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied) => EXIT_RUNTIME,
        _ => EXIT_DATA,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::GenData(g) => gen_data(g),
        Command::ExpandLabels(a) => expand_labels(a),
        Command::Split(a) => split(a),
        Command::Train(Train::Svm(a)) => train_svm_cmd(a),
        Command::Train(Train::Mlp(a)) => train_mlp_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Infer(a) => infer(a),
        Command::GradientCheck(a) => gradient_check_cmd(a),
    }
}

fn gen_data(cmd: GenData) -> Result<u8> {
    match cmd {
        GenData::Dataset { normal, fight, seed, out } => {
            let samples = generate_dataset(normal, fight, seed)?;
            write_samples(&out, &samples)?;
        }
        GenData::Stream { scenario, frames, persons, noise, seed, out, ground_truth } => {
            let mut spec = match scenario {
                Scenario::Fight => ScenarioSpec::fight_with_bystander(seed, frames),
                Scenario::Walker => ScenarioSpec::single_walker(seed, frames),
                Scenario::StationaryWalk => ScenarioSpec::stationary_walk(seed, frames),
                Scenario::TwoWalkers => ScenarioSpec::two_walkers(seed, frames),
                Scenario::Crowd => ScenarioSpec::crowd(seed, frames, persons),
            };
            if let Some(n) = noise {
                spec.noise_sigma = n;
            }
            let stream = generate_sequence(&spec)?;
            let mut w = create_output(&out)?;
            write_frames(&mut w, &stream.frames)?;
            w.flush()?;
            if let Some(path) = ground_truth {
                let mut csv = csv::Writer::from_writer(create_output(&path)?);
                csv.write_record(["frame", "person", "label"])?;
                for (frame, labels) in stream.frames.iter().zip(&stream.ground_truth) {
                    for (p, label) in labels.iter().enumerate() {
                        csv.write_record([frame.frame_index.to_string(), p.to_string(), label.to_string()])?;
                    }
                }
                csv.flush()?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn expand_labels(args: ExpandLabelsArgs) -> Result<u8> {
    let rows = read_interval_labels(open_input(&args.labels)?)?;
    let frames = expand_interval_labels(&rows)?;
    let mut csv = csv::Writer::from_writer(create_output(&args.out)?);
    csv.write_record(["Session", "Frame", "Actor", "Label"])?;
    for (key, label) in &frames {
        csv.write_record([key.session.to_string(), key.frame.to_string(), key.actor.to_string(), label.to_string()])?;
    }
    csv.flush()?;
    eprintln!("{} rows expanded to {} labelled frames", rows.len(), frames.len());
    Ok(EXIT_OK)
}

fn split(args: SplitArgs) -> Result<u8> {
    let spec = SplitSpec::new(args.train, args.val, args.test, args.seed)?;
    let samples = read_samples(&args.features)?;
    let parts = stratified_split(&samples, &spec)?;
    fs::create_dir_all(&args.out_dir)?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        write_samples(&args.out_dir.join(format!("{name}.csv")), part)?;
        eprintln!("{name}: {} samples", part.len());
    }
    Ok(EXIT_OK)
}

fn train_svm_cmd(args: TrainSvmArgs) -> Result<u8> {
    let file = ConfigFile::load(args.config.as_deref(), SVM_KEYS)?;
    let defaults = SvmConfig::default();
    let kernel_name = match args.kernel {
        Some(k) => k,
        None => match file.get::<String>("kernel")?.as_deref() {
            None | Some("rbf") => KernelName::Rbf,
            Some("linear") => KernelName::Linear,
            Some(other) => return Err(Error::Config(format!("unknown kernel '{other}'"))),
        },
    };
    let kernel = match kernel_name {
        KernelName::Linear => KernelSpec::Linear,
        KernelName::Rbf => match args.gamma.map(Some).unwrap_or(file.get("gamma")?) {
            Some(gamma) => KernelSpec::Rbf { gamma },
            None => KernelSpec::RbfScaled,
        },
    };
    let config = SvmConfig {
        kernel,
        c: file.pick(args.c, "c", defaults.c)?,
        tolerance: file.pick(args.tol, "tol", defaults.tolerance)?,
        max_passes: file.pick(args.max_passes, "max_passes", defaults.max_passes)?,
        seed: file.pick(args.seed, "seed", defaults.seed)?,
    };
    let samples = read_samples(&args.features)?;
    let model = train_svm(&samples, &config)?;
    write_text(&args.out, &Model::Svm(model.clone()).to_text())?;
    eprintln!("trained svm on {} samples: {} support vectors", samples.len(), model.support_vectors.len());
    Ok(EXIT_OK)
}

fn train_mlp_cmd(args: TrainMlpArgs) -> Result<u8> {
    let file = ConfigFile::load(args.config.as_deref(), MLP_KEYS)?;
    let d = MlpConfig::default();
    let hidden = match args.hidden.or(file.get("hidden")?) {
        Some(s) => parse_hidden(&s)?,
        None => d.hidden_dims.clone(),
    };
    let config = MlpConfig {
        hidden_dims: hidden,
        dropout_rate: file.pick(args.dropout, "dropout", d.dropout_rate)?,
        learning_rate: file.pick(args.lr, "lr", d.learning_rate)?,
        epochs: file.pick(args.epochs, "epochs", d.epochs)?,
        batch_size: file.pick(args.batch_size, "batch_size", d.batch_size)?,
        seed: file.pick(args.seed, "seed", d.seed)?,
        ..d
    };
    let train = read_samples(&args.features)?;
    let val = match &args.val {
        Some(p) => read_samples(p)?,
        None => Vec::new(),
    };
    let (model, history) = train_mlp(&train, &val, &config)?;
    for (epoch, loss) in history.loss.iter().enumerate() {
        let val_acc = history.val_accuracy[epoch].map(|a| format!(" val_acc {a:.4}")).unwrap_or_default();
        eprintln!("epoch {:>3} loss {loss:.5} train_acc {:.4}{val_acc}", epoch + 1, history.train_accuracy[epoch]);
    }
    write_text(&args.out, &Model::Mlp(model).to_text())?;
    Ok(EXIT_OK)
}

fn parse_kind(s: Option<&str>) -> Result<Option<ClassifierKind>> {
    s.map(str::parse).transpose()
}

fn evaluate(args: EvaluateArgs) -> Result<u8> {
    let model = Model::load_expecting(&args.model, parse_kind(args.classifier.as_deref())?)?;
    let samples = read_samples(&args.features)?;
    let y_true: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let y_pred = samples.iter().map(|s| model.predict_label(s.features.as_slice())).collect::<Result<Vec<_>>>()?;
    let cm = confusion_matrix(&y_true, &y_pred)?;
    let report = classification_report(&cm)?;
    let text = match args.format {
        Format::Text => {
            let mut t = render_report(&report, true);
            t.push_str(&format!("\nConfusion matrix (rows true, columns predicted)\n{:>8}{:>8}\n{:>8}{:>8}\n", cm.tn, cm.fp, cm.fn_, cm.tp));
            t
        }
        Format::Machine => render_report_machine(&report, &cm)? + "\n",
    };
    print!("{text}");
    if report.zero_division {
        eprintln!("warning: some metrics had a zero denominator and were reported as 0");
    }
    Ok(EXIT_OK)
}

fn pipeline_config(args: &InferArgs, file: &ConfigFile) -> Result<PipelineConfig> {
    let d = PipelineConfig::default();
    let dt = TrackerConfig::default();
    let dv = VelocityRuleConfig::default();
    let velocity_on = !args.no_velocity_rule && file.get::<bool>("velocity_rule")?.unwrap_or(true);
    let velocity_rule = velocity_on
        .then(|| -> Result<VelocityRuleConfig> {
            Ok(VelocityRuleConfig {
                velocity_threshold: file.pick(args.velocity_threshold, "velocity_threshold", dv.velocity_threshold)?,
                window_frames: file.get("velocity_window")?.unwrap_or(dv.window_frames),
                ..dv
            })
        })
        .transpose()?;
    Ok(PipelineConfig {
        thresholds: Thresholds {
            t_warn: file.pick(args.t_warn, "t_warn", d.thresholds.t_warn)?,
            t_alert: file.pick(args.t_alert, "t_alert", d.thresholds.t_alert)?,
        },
        smoothing_window: file.pick(args.window, "window", d.smoothing_window)?,
        hysteresis: file.pick(args.hysteresis, "hysteresis", d.hysteresis)?,
        tracker: TrackerConfig {
            iou_threshold: file.pick(args.iou_threshold, "iou_threshold", dt.iou_threshold)?,
            grace_frames: file.pick(args.grace_frames, "grace_frames", dt.grace_frames)?,
            ..dt
        },
        velocity_rule,
        min_detected_keypoints: file.get("min_keypoints")?.unwrap_or(d.min_detected_keypoints),
        ..d
    })
}

fn summary_text(input: &Path, s: &StreamSummary, format: Format) -> Result<String> {
    Ok(match format {
        Format::Text => format!(
            "{}: {} frames, {} skipped, {} events ({} fight), {:.1} frames/s",
            input.display(),
            s.frames_processed,
            s.frames_skipped,
            s.events_emitted,
            s.fight_events,
            s.throughput_fps
        ),
        Format::Machine => serde_json::json!({
            "input": input.display().to_string(),
            "frames": s.frames_processed,
            "skipped": s.frames_skipped,
            "events": s.events_emitted,
            "fight_events": s.fight_events,
            "fps": s.throughput_fps,
        })
        .to_string(),
    })
}

fn infer(args: InferArgs) -> Result<u8> {
    let file = ConfigFile::load(args.config.as_deref(), INFER_KEYS)?;
    let config = pipeline_config(&args, &file)?;
    config.validate()?;
    let strict = args.strict || file.get::<bool>("strict")?.unwrap_or(false);
    let model_path = match args.model.clone().or(file.get("model")?) {
        Some(p) => p,
        None => return Err(Error::Config("a model is required (--model or 'model' in the config file)".into())),
    };
    let kind = parse_kind(args.classifier.as_deref().or(file.values.get("classifier").map(String::as_str)))?;
    let model: Arc<dyn Classifier> = Arc::new(Model::load_expecting(&model_path, kind)?);
    if !args.output.is_empty() && args.output.len() != args.input.len() {
        return Err(Error::Config(format!(
            "{} outputs given for {} inputs",
            args.output.len(),
            args.input.len()
        )));
    }
    if args.input.iter().filter(|p| is_stdio(p)).count() > 1 {
        return Err(Error::Config("standard input can only be read once".into()));
    }

    let results: Vec<Result<(StreamSummary, Vec<u8>)>> = std::thread::scope(|scope| {
        let workers: Vec<_> = args
            .input
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let model = Arc::clone(&model);
                let config = config.clone();
                let output = args.output.get(i).cloned();
                scope.spawn(move || -> Result<(StreamSummary, Vec<u8>)> {
                    let mut pipeline = Pipeline::new(config, model)?;
                    let reader = open_input(input)?;
                    match output {
                        Some(path) => {
                            let summary = run_stream(reader, &mut pipeline, create_output(&path)?, strict)?;
                            Ok((summary, Vec::new()))
                        }
                        None => {
                            let mut buf = Vec::new();
                            let summary = run_stream(reader, &mut pipeline, &mut buf, strict)?;
                            Ok((summary, buf))
                        }
                    }
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().unwrap_or_else(|_| Err(Error::Stream("worker panicked".into())))).collect()
    });

    let mut stdout = io::stdout().lock();
    let mut failure = None;
    for (input, result) in args.input.iter().zip(results) {
        match result {
            Ok((summary, buf)) => {
                stdout.write_all(&buf)?;
                for d in &summary.diagnostics {
                    eprintln!("{}: {d}", input.display());
                }
                eprintln!("{}", summary_text(input, &summary, args.format)?);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", input.display());
                failure.get_or_insert(exit_code(&e));
            }
        }
    }
    stdout.flush()?;
    Ok(failure.unwrap_or(EXIT_OK))
}

fn gradient_check_cmd(args: GradientCheckArgs) -> Result<u8> {
    if args.batch < 2 {
        return Err(Error::Config("gradient check needs a batch of at least 2".into()));
    }
    let config = MlpConfig {
        hidden_dims: parse_hidden(&args.hidden)?,
        dropout_rate: args.dropout,
        seed: args.seed,
        ..MlpConfig::default()
    };
    let model = MlpModel::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let batch: Vec<Vec<f64>> =
        (0..args.batch).map(|_| (0..config.input_dim).map(|_| rng.random::<f64>()).collect()).collect();
    let labels: Vec<Label> = (0..args.batch).map(|i| if i % 2 == 0 { Label::Normal } else { Label::Fight }).collect();
    let err = gradient_check(&model, &batch, &labels)?;
    println!("max relative error {err:.3e} over {} parameters", model.parameter_count());
    Ok(if err < args.tolerance { EXIT_OK } else { EXIT_RUNTIME })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let f = ConfigFile::parse("# comment\nt_warn = 0.4\nwindow=9  # trailing\n\n", INFER_KEYS).unwrap();
        assert_eq!(f.get::<f64>("t_warn").unwrap(), Some(0.4));
        assert_eq!(f.get::<usize>("window").unwrap(), Some(9));
        assert_eq!(f.get::<f64>("t_alert").unwrap(), None);
        assert!(ConfigFile::parse("bogus = 1", INFER_KEYS).is_err());
        assert!(ConfigFile::parse("t_warn 0.4", INFER_KEYS).is_err());
        assert!(f.get::<usize>("t_warn").is_err());
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let f = ConfigFile::parse("window = 9\nt_warn = 0.4", INFER_KEYS).unwrap();
        assert_eq!(f.pick(Some(3), "window", 15).unwrap(), 3);
        assert_eq!(f.pick(None, "window", 15).unwrap(), 9);
        assert_eq!(f.pick(None, "t_alert", 0.8).unwrap(), 0.8);
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["posewatch", "--bogus"]), EXIT_USAGE);
        assert_eq!(main_with_args(["posewatch", "train", "svm"]), EXIT_USAGE);
        assert_eq!(main_with_args(["posewatch", "--help"]), EXIT_OK);
    }

    #[test]
    fn hidden_list() {
        assert_eq!(parse_hidden("64, 32").unwrap(), vec![64, 32]);
        assert!(parse_hidden("64,x").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Io(io::Error::new(io::ErrorKind::NotFound, "x"))), EXIT_DATA);
        assert_eq!(exit_code(&Error::Io(io::Error::other("x"))), EXIT_RUNTIME);
    }
}
