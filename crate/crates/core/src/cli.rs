//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::eval::{benchmark, extract_all, render_reports, EvalConfig, Method};
use crate::feature::{EnvelopeParams, DEFAULT_DECIMATION, DEFAULT_WINDOW};
use crate::hmm::{train_pair, TrainConfig, TwoClassModel, DEFAULT_STATES, DEFAULT_VARIANCE_FLOOR};
use crate::sim::{default_template, generate_dataset, PulseTemplate, SimConfig, DEFAULT_PULSE_LEN};
use crate::types::StateLabel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "radar-motion",
    version,
    about = "IR-UWB radar rest/move classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labelled dataset.
    Simulate(SimulateArgs),
    /// Export per-frame-set feature CSVs.
    Extract(ExtractArgs),
    /// Train the two class GMM-HMMs and write them as JSON.
    Train(TrainArgs),
    /// Label frame sets with a trained model.
    Classify(ClassifyArgs),
    /// Leave-one-out accuracy of every method.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Proposed,
    CleanConv,
    CleanShort,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => Method::ProposedGmmHmm,
            MethodArg::CleanConv => Method::CleanConventionalDtw,
            MethodArg::CleanShort => Method::CleanShortTemplateDtw,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Frame sets per state.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    per_state: u32,
    #[arg(long, default_value_t = 200.0)]
    fps: f64,
    /// Nominal capture length in seconds.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// Frame-count jitter: each set has nominal T plus a uniform draw from
    /// [-jitter, jitter].
    #[arg(long, default_value_t = 100)]
    jitter: u32,
    /// Additive noise standard deviation.
    #[arg(long, default_value_t = 3.0, conflicts_with = "snr_db")]
    noise: f64,
    /// Planted-target SNR in dB (sets noise = amp / 10^(snr/20)).
    #[arg(long)]
    snr_db: Option<f64>,
    /// Reflector peak amplitude.
    #[arg(long, default_value_t = 30.0)]
    amp: f64,
    #[arg(long, default_value_t = DEFAULT_PULSE_LEN)]
    pulse_len: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "SIM")]
    participant: String,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Proposed)]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_DECIMATION)]
    decimation: usize,
    #[arg(long, default_value_t = DEFAULT_PULSE_LEN)]
    pulse_len: usize,
    /// CSV of pulse taps replacing the built-in pulse for the CLEAN methods.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = crate::clean::DEFAULT_SHORT_FRACTION)]
    short_fraction: f64,
}

#[derive(Debug, Args)]
struct TrainingArgs {
    #[arg(long, default_value_t = DEFAULT_STATES)]
    states: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FLOOR)]
    var_floor: f64,
}

impl TrainingArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            n_states: self.states,
            max_iters: self.max_iters,
            ll_tol: self.tol,
            variance_floor: self.var_floor,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Feature extractor; defaults to the one stored in the model.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Dataset directory; repeat for one table column per participant.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::CleanConv, MethodArg::CleanShort, MethodArg::Proposed])]
    methods: Vec<MethodArg>,
    /// Write the machine-readable report here.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

/// Stored classifier: the two models plus the feature settings they expect.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    method: MethodArg,
    window: usize,
    decimation: usize,
    short_fraction: f64,
    template: Vec<f64>,
    models: TwoClassModel,
}

fn load_template(args: &FeatureArgs) -> Result<PulseTemplate> {
    let Some(path) = &args.template else {
        return default_template(args.pulse_len);
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut taps = Vec::new();
    for (n, line) in text.lines().enumerate() {
        for field in line.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            taps.push(field.parse::<f64>().map_err(|_| Error::Parse {
                file: path.clone(),
                row: n + 1,
                message: format!("{field:?} is not a number"),
            })?);
        }
    }
    PulseTemplate::from_taps(taps)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn eval_config(features: &FeatureArgs, training: Option<&TrainingArgs>) -> Result<EvalConfig> {
    Ok(EvalConfig {
        train: training.map(TrainingArgs::config).unwrap_or_default(),
        envelope: EnvelopeParams {
            window: features.window,
            decimation: features.decimation,
        },
        template: load_template(features)?,
        short_fraction: features.short_fraction,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let noise = match args.snr_db {
        Some(db) => args.amp.abs() / 10f64.powf(db / 20.0),
        None => args.noise,
    };
    let cfg = SimConfig {
        fps: args.fps,
        noise_sigma: noise,
        target_amp: args.amp,
        pulse: default_template(args.pulse_len)?,
        ..SimConfig::with_seed(args.seed)
    }
    .with_duration(args.duration);
    let jitter = i64::from(args.jitter);
    let ds = generate_dataset(
        &cfg,
        args.per_state as usize,
        -jitter..=jitter,
        &args.participant,
    )?;
    write_dataset(&ds, &args.out)?;

    let lens = ds.frame_sets().iter().map(|f| f.len());
    let (lo, hi) = lens.fold((usize::MAX, 0), |(lo, hi), t| (lo.min(t), hi.max(t)));
    println!(
        "wrote {} frame sets ({} Rest, {} Move) to {}",
        ds.len(),
        ds.count(StateLabel::Rest),
        ds.count(StateLabel::Move),
        args.out.display()
    );
    println!(
        "participant {}, seed {}, fps {}, T in [{lo}, {hi}], noise sigma {noise}",
        args.participant, args.seed, args.fps
    );
    Ok(())
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let ds = read_dataset(&args.data)?;
    let cfg = eval_config(&args.features, None)?;
    let method = Method::from(args.features.method);
    let features = extract_all(&ds, method, &cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for (fs, seq) in ds.frame_sets().iter().zip(&features) {
        let mut text = String::new();
        for step in seq.steps() {
            let row: Vec<String> = step.iter().map(|v| v.to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        write_text(&args.out.join(format!("{}.csv", fs.id())), &text)?;
    }
    println!(
        "wrote {} {} feature files to {}",
        features.len(),
        args.features
            .method
            .to_possible_value()
            .expect("named")
            .get_name(),
        args.out.display()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let ds = read_dataset(&args.data)?;
    let cfg = eval_config(&args.features, Some(&args.training))?;
    let features = extract_all(&ds, args.features.method.into(), &cfg)?;
    let mut rest = Vec::new();
    let mut motion = Vec::new();
    for (i, seq) in features.into_iter().enumerate() {
        match ds.label(i) {
            StateLabel::Rest => rest.push(seq),
            StateLabel::Move => motion.push(seq),
        }
    }
    let models = train_pair(&rest, &motion, &cfg.train)?;
    let file = ModelFile {
        method: args.features.method,
        window: cfg.envelope.window,
        decimation: cfg.envelope.decimation,
        short_fraction: cfg.short_fraction,
        template: cfg.template.taps().to_vec(),
        models,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    write_text(&args.model, &text)?;
    println!(
        "trained {} Rest and {} Move sequences, wrote {}",
        rest.len(),
        motion.len(),
        args.model.display()
    );
    Ok(())
}

fn classify(args: &ClassifyArgs) -> Result<()> {
    let text = fs::read_to_string(&args.model).map_err(|e| Error::io(&args.model, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: args.model.clone(),
        source: e,
    })?;
    let ds = read_dataset(&args.data)?;
    let method = args.method.unwrap_or(file.method);
    let cfg = EvalConfig {
        envelope: EnvelopeParams {
            window: file.window,
            decimation: file.decimation,
        },
        template: PulseTemplate::from_taps(file.template.clone())?,
        short_fraction: file.short_fraction,
        ..EvalConfig::default()
    };
    let features = extract_all(&ds, method.into(), &cfg)?;
    for (fs, seq) in ds.frame_sets().iter().zip(&features) {
        if seq.dim() != file.models.dim() {
            return Err(Error::DimensionMismatch {
                expected: file.models.dim(),
                found: seq.dim(),
            });
        }
        let label = file.models.classify(seq)?;
        println!("{}\t{label}", fs.id());
    }
    Ok(())
}

fn run_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let cfg = eval_config(&args.features, Some(&args.training))?;
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let mut reports = Vec::with_capacity(args.data.len());
    for dir in &args.data {
        let ds = read_dataset(dir)?;
        let mut report = benchmark(&ds, &methods, &cfg)?;
        if report.participant.is_empty() {
            report.participant = dir.display().to_string();
        }
        reports.push(report);
    }
    print!("{}", render_reports(&reports));
    if let Some(path) = &args.json {
        let mut text = if let [single] = reports.as_slice() {
            single.to_json()
        } else {
            serde_json::to_string_pretty(&reports).expect("reports serialize")
        };
        text.push('\n');
        write_text(path, &text)?;
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Classify(a) => classify(a),
        Command::Benchmark(a) => run_benchmark(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
