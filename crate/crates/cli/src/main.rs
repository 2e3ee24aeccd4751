use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use traveldist_cli::config::PipelineConfig;
use traveldist_cli::stages;

#[derive(Parser)]
#[command(
    name = "traveldist",
    about = "Patient travel-distance prediction pipeline on synthetic claims data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration file (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Artifact directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Synth preset override: clean, dirty, or default.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus files.
    Synth,
    /// Load the corpus and apply the exclusion rules.
    Ingest,
    /// Flag no-accessibility districts and estimate each place of residence.
    Por,
    /// Compute the 25 features and assemble per-visit vectors.
    Featurize,
    /// Split, balance, fold, normalize, and fit PCA and correlations.
    Prep,
    /// Train models: cnn, mlp, ablation, logreg, forest, svm, or all.
    Train {
        #[arg(default_value = "all")]
        arch: String,
    },
    /// Evaluate every trained model on the held-out test split.
    Evaluate,
    /// Integrated Gradients attribution of the trained CNN.
    Explain,
    /// Emit plot-data CSVs and the Markdown summary.
    Report,
    /// Run every stage in order.
    All,
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Synth => "synth",
        Command::Ingest => "ingest",
        Command::Por => "por",
        Command::Featurize => "featurize",
        Command::Prep => "prep",
        Command::Train { .. } => "train",
        Command::Evaluate => "evaluate",
        Command::Explain => "explain",
        Command::Report => "report",
        Command::All => "all",
    }
}

fn run(cli: &Cli) -> traveldist_core::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(preset) = &cli.preset {
        cfg.synth.preset = preset.clone();
    }
    let out = cfg.out.clone();

    match &cli.command {
        Command::Synth => stages::run_synth(&cfg, &out),
        Command::Ingest => stages::run_ingest(&cfg, &out),
        Command::Por => stages::run_por(&cfg, &out),
        Command::Featurize => stages::run_featurize(&cfg, &out),
        Command::Prep => stages::run_prep(&cfg, &out),
        Command::Train { arch } => stages::run_train(&cfg, &out, arch),
        Command::Evaluate => stages::run_evaluate(&cfg, &out),
        Command::Explain => stages::run_explain(&cfg, &out),
        Command::Report => stages::run_report(&cfg, &out),
        Command::All => stages::run_all(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let payload = serde_json::json!({
                "stage": stage_name(&cli.command),
                "error": error.to_string(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
