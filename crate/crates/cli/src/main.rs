use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hmmboost::features::{build_vocabulary, coverage_stats, parse_listing, Dataset, OpcodeListing};
use hmmboost::harness::{self, emit_reports, EvaluationReport, ExperimentConfig, ExperimentKind, FamilyModel};
use hmmboost::synth::{dial_corpus, generate_corpus, DialConfig};
use hmmboost::Error;
use serde::Deserialize;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATASET: u8 = 3;

#[derive(Parser)]
#[command(name = "hmmboost", version, about = "HMM restarts and boosted HMM ensembles for opcode-sequence detection")]
struct Cli {
    /// TOML file with defaults for every flag; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Malware family, or `all`.
    #[arg(long, global = true)]
    family: Option<String>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[arg(long, global = true)]
    states: Option<usize>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    morph_rates: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    coldstart_sizes: Option<Vec<usize>>,
    #[arg(long, global = true)]
    test_cap: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus under --dataset.
    GenSynth(GenSynth),
    /// Build a family's top-K vocabulary from all its samples.
    Vocab,
    /// Train the restart pool and boosted ensemble on a whole family.
    Train,
    /// Score listings with a trained model.
    Score {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// `.opcodes` files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run an experiment protocol and write its reports.
    Experiment {
        #[arg(value_parser = ["baseline", "morph", "coldstart"])]
        kind: String,
    },
    /// Print a saved report; with --out, rewrite its CSV files there.
    Report {
        /// `report.json` or a directory holding one.
        path: PathBuf,
    },
}

#[derive(Args)]
struct GenSynth {
    /// Separation between malware and benign sources, 0 to 1.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, value_delimiter = ',', default_value = "fam_a,fam_b")]
    families: Vec<String>,
    #[arg(long)]
    malware_samples: Option<usize>,
    #[arg(long)]
    benign_samples: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

/// Config file contents: the experiment settings plus runtime options.
#[derive(Deserialize, Default)]
struct FileConfig {
    out: Option<PathBuf>,
    threads: Option<usize>,
    #[serde(flatten)]
    experiment: toml::Table,
}

struct Settings {
    experiment: ExperimentConfig,
    out: PathBuf,
    threads: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Dataset(_) | Error::UnusableSample(_) => EXIT_DATASET,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn dataset_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATASET,
        message: message.into(),
    }
}

fn load_settings(path: Option<&Path>, flags: &Flags) -> Result<Settings, Failure> {
    let file = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let mut cfg: ExperimentConfig = toml::Value::Table(file.experiment)
        .try_into()
        .map_err(|e| config_error(format!("config file: {e}")))?;

    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = &flags.$field { cfg.$field = v.clone(); })*
        };
    }
    set!(dataset, family, restarts, states, top_k, folds, morph_rates, coldstart_sizes, test_cap, seed);
    cfg.validate()?;
    Ok(Settings {
        experiment: cfg,
        out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("results")),
        threads: flags.threads.or(file.threads),
    })
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    Ok(Dataset::load(&cfg.dataset)?)
}

fn target_families(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<String>, Failure> {
    Ok(harness::families(cfg, ds)?)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("cannot create {}: {e}", dir.display()),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn gen_synth(args: &GenSynth, s: &Settings) -> Result<(), Failure> {
    let defaults = DialConfig::default();
    let dial = DialConfig {
        delta: args.delta,
        malware_samples: args.malware_samples.unwrap_or(defaults.malware_samples),
        benign_samples: args.benign_samples.unwrap_or(defaults.benign_samples),
        min_len: args.min_len.unwrap_or(defaults.min_len),
        max_len: args.max_len.unwrap_or(defaults.max_len),
        seed: s.experiment.seed,
        ..defaults
    };
    let families: Vec<&str> = args.families.iter().map(String::as_str).collect();
    let specs = dial_corpus(&dial, &families).map_err(|e| config_error(e.to_string()))?;
    let root = &s.experiment.dataset;
    let n = generate_corpus(&specs, root)?;
    println!("wrote {n} listings under {}", root.display());
    Ok(())
}

fn vocab(s: &Settings) -> Result<(), Failure> {
    let ds = load_dataset(&s.experiment)?;
    create_dir(&s.out)?;
    for family in target_families(&s.experiment, &ds)? {
        let samples: Vec<&OpcodeListing> = ds.family(&family)?.iter().collect();
        let v = build_vocabulary(&family, &samples, s.experiment.top_k)?;
        let coverage = coverage_stats(&samples, &v)?;
        let path = s.out.join(format!("vocab_{family}.json"));
        write_file(&path, &(v.to_json()? + "\n"))?;
        let short = if v.is_short() { " (short)" } else { "" };
        println!("{family}: {} opcodes{short}, coverage {coverage:.2}% -> {}", v.top_opcodes().len(), path.display());
    }
    Ok(())
}

fn train(s: &Settings) -> Result<(), Failure> {
    let ds = load_dataset(&s.experiment)?;
    create_dir(&s.out)?;
    for family in target_families(&s.experiment, &ds)? {
        let model = harness::with_threads(s.threads, || harness::train_family(&s.experiment, &ds, &family))??;
        let path = s.out.join(format!("model_{family}.json"));
        model.save(&path)?;
        println!(
            "{family}: best restart {} of {}, ensemble of {} stages -> {}",
            model.best_index,
            model.restarts,
            model.ensemble.stages.len(),
            path.display()
        );
    }
    Ok(())
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| dataset_error(format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().and_then(|x| x.to_str()) == Some(hmmboost::features::EXTENSION))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn score(model: &Path, inputs: &[PathBuf]) -> Result<(), Failure> {
    let model = FamilyModel::load(model).map_err(|e| config_error(format!("model {}: {e}", model.display())))?;
    let mut out = io::stdout().lock();
    let mut emit = |line: String| match writeln!(out, "{line}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure {
            code: EXIT_FAILURE,
            message: format!("stdout: {e}"),
        }),
        _ => Ok(()),
    };
    emit("path,llpo,boosted_margin".into())?;
    for path in collect_inputs(inputs)? {
        let text = fs::read_to_string(&path).map_err(|e| dataset_error(format!("{}: {e}", path.display())))?;
        let mnemonics =
            parse_listing(&text).map_err(|_| dataset_error(format!("{}: no opcodes", path.display())))?;
        let s = model.score(&mnemonics)?;
        emit(format!(
            "{},{},{}",
            path.display(),
            harness::fmt_float(s.llpo),
            harness::fmt_float(s.boosted_margin)
        ))?;
    }
    Ok(())
}

fn experiment(kind: &str, s: &Settings) -> Result<(), Failure> {
    let kind: ExperimentKind = kind.parse()?;
    let ds = load_dataset(&s.experiment)?;
    let report = harness::with_threads(s.threads, || harness::run_on(kind, &s.experiment, &ds))??;
    let files = emit_reports(&report, &s.out)?;
    print!("{}", harness::summary_table(&report));
    println!("wrote {} files to {}", files.len(), s.out.display());
    Ok(())
}

fn report(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let report = EvaluationReport::load(&file).map_err(|e| config_error(format!("{}: {e}", file.display())))?;
    print!("{}", harness::summary_table(&report));
    if let Some(out) = out {
        let files = emit_reports(&report, out)?;
        println!("wrote {} files to {}", files.len(), out.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Report { path } = &cli.command {
        return report(path, cli.flags.out.as_deref());
    }
    if let Command::Score { model, inputs } = &cli.command {
        return score(model, inputs);
    }
    let settings = load_settings(cli.config.as_deref(), &cli.flags)?;
    match &cli.command {
        Command::GenSynth(args) => gen_synth(args, &settings),
        Command::Vocab => vocab(&settings),
        Command::Train => train(&settings),
        Command::Experiment { kind } => experiment(kind, &settings),
        Command::Score { .. } | Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
