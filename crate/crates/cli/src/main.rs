use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agri_fidelity::committee::TrainConfig;
use agri_fidelity::masking::ImputationPolicy;
use agri_fidelity::pipeline::{self, Committee, FidelityMode, RunConfig};
use agri_fidelity::synthgen::{self, SynthConfig, MANIFEST_FILE};
use agri_fidelity::theorem;
use clap::{Args, Parser, Subcommand};

/// Exit code when some samples were skipped but the stage otherwise finished.
const EXIT_SKIPPED: u8 = 2;
/// Exit code when a theorem check failed.
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "agri-fidelity",
    version,
    about = "Reliability evaluation of spectrogram attribution maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic spectrogram dataset.
    Gen(GenArgs),
    /// Train a classifier committee on a dataset.
    Train(TrainArgs),
    /// Write integrated-gradients attributions and top-kappa masks.
    Explain(ExplainArgs),
    /// Score consensus reliability and masking fidelity for every sample.
    Evaluate(EvaluateArgs),
    /// Run the numerical checks of the shift null.
    TheoremCheck(TheoremArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Synthetic-data config (JSON); defaults are used for absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the time-invariant artifact band.
    #[arg(long)]
    no_injection: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Training config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Members as `<kind>:<seed>,...` with kind `linear` or `mlp`.
    #[arg(long)]
    committee: Option<String>,
    /// Master seed for the default committee.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Options shared by `explain` and `evaluate`; flags override `--config`.
#[derive(Args)]
struct RunArgs {
    /// Run config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    /// `zero`, `neighbor` or `neighbor:<radius>`.
    #[arg(long)]
    imputation: Option<ImputationPolicy>,
    /// `per-model` or `consensus:<lambda>`.
    #[arg(long)]
    fidelity_mode: Option<FidelityMode>,
    /// Extra `model_<id>.json` tagged as the explainer under audit; it joins the committee.
    #[arg(long)]
    audit: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> agri_fidelity::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                RunConfig::from_json_str(&read_config(path)?).map_err(|e| file_error(path, e))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = self.permutations {
            cfg.permutations = v;
        }
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        if let Some(v) = self.imputation {
            cfg.imputation = v;
        }
        if let Some(v) = self.fidelity_mode {
            cfg.fidelity_mode = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn committee(&self, models: &Path) -> agri_fidelity::Result<Committee> {
        let committee = Committee::load_dir(models)?;
        match &self.audit {
            Some(path) => committee.with_audited(path),
            None => Ok(committee),
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// Directory holding `mask_*.csv` (and optionally `attr_*.csv`).
    #[arg(long)]
    masks: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the rows as TSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_config(path: &Path) -> agri_fidelity::Result<String> {
    fs::read_to_string(path).map_err(|e| {
        agri_fidelity::Error::Config(format!("cannot read config {}: {e}", path.display()))
    })
}

fn file_error(path: &Path, e: agri_fidelity::Error) -> agri_fidelity::Error {
    agri_fidelity::Error::Config(format!("{}: {e}", path.display()))
}

fn gen(args: GenArgs) -> agri_fidelity::Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => {
            SynthConfig::from_json_str(&read_config(path)?).map_err(|e| file_error(path, e))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_injection {
        cfg.spurious_injection = false;
    }
    let manifest = synthgen::gen_dataset(&cfg, &args.out)?;
    log::info!("wrote {} samples", manifest.samples.len());
    println!("{}", args.out.join(MANIFEST_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn train(args: TrainArgs) -> agri_fidelity::Result<ExitCode> {
    let cfg = match &args.config {
        Some(path) => {
            let cfg: TrainConfig = serde_json::from_str(&read_config(path)?)
                .map_err(|e| agri_fidelity::Error::Config(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            cfg
        }
        None => TrainConfig::default(),
    };
    let members = match &args.committee {
        Some(spec) => pipeline::parse_committee(spec)?,
        None => pipeline::default_committee(args.seed),
    };
    let metrics = pipeline::train_committee(&args.dataset, &members, &cfg, &args.out)?;
    for m in &metrics.members {
        println!(
            "{}\tloss={:.6}\taccuracy={:.4}",
            m.id, m.final_loss, m.train_accuracy
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn explain(args: ExplainArgs) -> agri_fidelity::Result<ExitCode> {
    let cfg = args.run.resolve()?;
    let committee = args.run.committee(&args.models)?;
    let summary =
        pipeline::explain_dataset(&args.dataset, &committee, cfg.kappa, &cfg.ig, &args.out)?;
    println!(
        "wrote {} masks ({} degenerate), skipped {}",
        summary.written,
        summary.degenerate,
        summary.skipped.len()
    );
    for s in &summary.skipped {
        eprintln!("skipped {}: {}", s.sample_id, s.reason);
    }
    Ok(if summary.skipped.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SKIPPED)
    })
}

fn evaluate(args: EvaluateArgs) -> agri_fidelity::Result<ExitCode> {
    let cfg = args.run.resolve()?;
    let committee = args.run.committee(&args.models)?;
    let report = pipeline::evaluate_dataset(&args.dataset, &args.masks, &committee, &cfg)?;
    let (report_path, csv_path) = pipeline::write_report(&report, &args.out)?;
    println!("{}", report_path.display());
    println!("{}", csv_path.display());
    for s in &report.skipped {
        eprintln!("skipped {}: {}", s.sample_id, s.reason);
    }
    Ok(if report.skipped.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SKIPPED)
    })
}

fn theorem_check(args: TheoremArgs) -> agri_fidelity::Result<ExitCode> {
    let rows = theorem::run_all(args.seed)?;
    let mut text = String::from(theorem::TSV_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.to_tsv());
        text.push('\n');
    }
    print!("{text}");
    if let Some(path) = &args.out {
        fs::write(path, &text).map_err(|e| {
            agri_fidelity::Error::Config(format!("cannot write {}: {e}", path.display()))
        })?;
    }
    for row in rows.iter().filter(|r| !r.pass) {
        eprintln!("check failed: {} ({})", row.check, row.params);
    }
    Ok(if rows.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Explain(a) => explain(a),
        Command::Evaluate(a) => evaluate(a),
        Command::TheoremCheck(a) => theorem_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
