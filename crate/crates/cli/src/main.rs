//! `ppmbench` command-line front end.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad arguments, configuration,
//! missing columns), 2 on runtime errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ppmbench_core::config::load_config_file;
use ppmbench_core::eventlog::{compute_stats, read_log, ColumnMapping, EventLog, EventLogError, LogFormat, TimestampFormat};
use ppmbench_core::experiment::{prepare, run_experiment};
use ppmbench_core::predictors::external::{ExternalPredictor, DEFAULT_TIMEOUT};
use ppmbench_core::preprocessing::{export_jsonl, PadPolicy, TimeFeatures, Vocabulary, N_TIME_FEATURES, PAD, START};
use ppmbench_core::splitting::{persist_split, split, SplitFractions, SplitLabel, SplitStrategy};

#[derive(Parser)]
#[command(name = "ppmbench", version, about = "Leakage-safe benchmarking for predictive process mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics as JSON.
    Stats {
        dataset: PathBuf,
        #[command(flatten)]
        input: LogInput,
    },
    /// Compute a train/val/test split and write it to a split file.
    Split {
        dataset: PathBuf,
        /// case_random, time_based, combined or stratified_variants.
        #[arg(long, default_value = "case_random")]
        strategy: SplitStrategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
        fractions: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        input: LogInput,
    },
    /// Write the prefix samples of one split as JSON lines.
    ExportSamples {
        config: PathBuf,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: SplitLabel,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Evaluation threads; overrides `workers` in the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Handshake with an external predictor and send one probe request.
    ProtocolCheck {
        /// Program and arguments of the predictor.
        #[arg(required = true, num_args = 1.., trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
        /// Activity labels of the probe vocabulary.
        #[arg(long, value_delimiter = ',', default_values_t = ["A".to_string(), "B".to_string(), "C".to_string()])]
        activities: Vec<String>,
        #[arg(long, default_value_t = 8)]
        pad_size: usize,
        #[arg(long, default_value_t = 4)]
        n_gram: usize,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
        timeout_secs: f64,
    },
}

#[derive(Args)]
struct LogInput {
    /// csv or xes; inferred from the file extension when absent.
    #[arg(long)]
    format: Option<LogFormat>,
    #[arg(long, default_value = "case_id")]
    case_column: String,
    #[arg(long, default_value = "activity")]
    activity_column: String,
    #[arg(long, default_value = "timestamp")]
    timestamp_column: String,
    #[arg(long)]
    resource_column: Option<String>,
    /// `auto` or a strftime pattern.
    #[arg(long, default_value = "auto")]
    timestamp_format: TimestampFormat,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_log(path: &Path, input: &LogInput) -> Result<EventLog, Failure> {
    let mapping = ColumnMapping {
        case: input.case_column.clone(),
        activity: input.activity_column.clone(),
        timestamp: input.timestamp_column.clone(),
        resource: input.resource_column.clone(),
    };
    let format = input.format.unwrap_or_else(|| LogFormat::from_path(path));
    read_log(path, format, &mapping, &input.timestamp_format).map_err(|e| match e {
        EventLogError::MissingColumn(_) => Failure::Validation(format!("{}: {e}", path.display())),
        e => Failure::Runtime(format!("{}: {e}", path.display())),
    })
}

fn stats(dataset: &Path, input: &LogInput) -> CmdResult {
    let log = load_log(dataset, input)?;
    let stats = compute_stats(&log).map_err(Failure::runtime)?;
    println!("{}", serde_json::to_string_pretty(&stats).map_err(Failure::runtime)?);
    Ok(())
}

fn split_cmd(dataset: &Path, strategy: SplitStrategy, seed: u64, fractions: &[f64], out: &Path, input: &LogInput) -> CmdResult {
    let &[train, val, test] = fractions else {
        return Err(Failure::Validation(format!("--fractions needs 3 values, got {}", fractions.len())));
    };
    let fractions = SplitFractions::new(train, val, test)
        .map_err(|e| Failure::Validation(format!("--fractions: {e}")))?;
    let log = load_log(dataset, input)?;
    let assignment = split(&log, strategy, fractions, seed).map_err(Failure::runtime)?;
    let mut bytes = Vec::new();
    persist_split(&assignment, &mut bytes).map_err(Failure::runtime)?;
    fs::write(out, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    eprintln!(
        "wrote {}: {} train, {} val, {} test, {} dropped",
        out.display(),
        assignment.train.len(),
        assignment.val.len(),
        assignment.test.len(),
        assignment.dropped.len()
    );
    Ok(())
}

fn export_samples(config: &Path, label: SplitLabel, out: Option<&Path>) -> CmdResult {
    let cfg = load_config_file(config).map_err(|e| Failure::Validation(e.to_string()))?;
    let prepared = prepare(&cfg).map_err(Failure::runtime)?;
    let samples = prepared.samples(label).map_err(Failure::runtime)?;
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            export_jsonl(&samples, io::BufWriter::new(file)).map_err(Failure::runtime)?;
        }
        None => export_jsonl(&samples, io::stdout().lock()).map_err(Failure::runtime)?,
    }
    eprintln!("exported {} {label} samples", samples.len());
    Ok(())
}

fn run(config: &Path, workers: Option<usize>) -> CmdResult {
    if workers == Some(0) {
        return Err(Failure::Validation("--workers must be >= 1".into()));
    }
    let cfg = load_config_file(config).map_err(|e| Failure::Validation(e.to_string()))?;
    let source = fs::read(config).map_err(Failure::runtime)?;
    let outcome = run_experiment(&cfg, &source, workers).map_err(Failure::runtime)?;
    let mut stdout = io::stdout().lock();
    for (task, report) in &outcome.reports {
        let values: Vec<String> = report.global.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        let _ = writeln!(stdout, "{task}: {} ({} samples)", values.join(" "), report.n_samples());
    }
    let _ = writeln!(stdout, "reports written to {}", cfg.output.dir.display());
    Ok(())
}

fn protocol_check(command: &[String], activities: &[String], pad_size: usize, n_gram: usize, timeout_secs: f64) -> CmdResult {
    let pad = PadPolicy::fixed(pad_size).map_err(|e| Failure::Validation(format!("--pad-size: {e}")))?;
    if n_gram == 0 {
        return Err(Failure::Validation("--n-gram must be >= 1".into()));
    }
    if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
        return Err(Failure::Validation("--timeout-secs must be > 0".into()));
    }
    let vocab = Vocabulary::from_activities(activities.iter().map(String::as_str));
    let mut predictor = ExternalPredictor::spawn(command, &vocab, &pad, n_gram, Duration::from_secs_f64(timeout_secs))
        .map_err(|e| Failure::Runtime(format!("handshake failed: {e}")))?;
    let caps = ppmbench_core::predictors::Predictor::capabilities(&predictor);
    let mut ids = vec![PAD; n_gram];
    ids[n_gram - 1] = START;
    let features: Vec<TimeFeatures> = vec![[0.0; N_TIME_FEATURES]; n_gram];
    let dists = predictor
        .request(&ids, &features, 1)
        .map_err(|e| Failure::Runtime(format!("probe request failed: {e}")))?;
    predictor.shutdown().map_err(|e| Failure::Runtime(format!("shutdown failed: {e}")))?;
    let next = dists[0].argmax();
    println!(
        "handshake ok: vocab_size={} multi_step={} max_m={} remaining_time={} time_delta={}; probe predicted {}",
        vocab.len(),
        caps.supports_multi_step,
        caps.max_m,
        caps.supports_remaining_time,
        caps.supports_time_delta,
        vocab.decode(next).unwrap_or("?")
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Stats { dataset, input } => stats(dataset, input),
        Command::Split { dataset, strategy, seed, fractions, out, input } => {
            split_cmd(dataset, *strategy, *seed, fractions, out, input)
        }
        Command::ExportSamples { config, split, out } => export_samples(config, *split, out.as_deref()),
        Command::Run { config, workers } => run(config, *workers),
        Command::ProtocolCheck { command, activities, pad_size, n_gram, timeout_secs } => {
            protocol_check(command, activities, *pad_size, *n_gram, *timeout_secs)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
