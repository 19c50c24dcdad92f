mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vidcurate_core::corpus::Dimension;
use vidcurate_core::fairness::{Attribute, Family, GenderCoding};

use config::PipelineConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "vidcurate", version, about = "Health-education video curation pipeline")]
struct Cli {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all steps.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search the catalog for every term, dedupe and keep one language.
    Ingest(IngestArgs),
    /// Medical-term coverage and PEMAT scores; seed labels for rated videos.
    Measure(MeasureArgs),
    /// Metadata and content views for every video.
    Featurize(FeaturizeArgs),
    /// Co-training runs.
    #[command(subcommand)]
    Cotrain(CotrainCommand),
    /// Review service.
    #[command(subcommand)]
    Review(ReviewCommand),
    /// Classifier metrics on held-out labels.
    Evaluate(EvaluateArgs),
    /// Representativeness analyses.
    #[command(subcommand)]
    Fairness(FairnessCommand),
    /// Parity-constrained ranking of videos high on both axes.
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    terms: Option<PathBuf>,
    /// Directory of per-term result files.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Query the live catalog with the key in VIDCURATE_API_KEY.
    #[arg(long, conflicts_with = "catalog")]
    live: bool,
    #[arg(long)]
    per_term: Option<usize>,
    #[arg(long)]
    language: Option<String>,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    rubrics: Option<PathBuf>,
    #[arg(long)]
    threshold_med: Option<f64>,
    #[arg(long)]
    threshold_und: Option<f64>,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    visual: Option<PathBuf>,
    #[arg(long)]
    min_df: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum CotrainCommand {
    /// Start from the seed labels and run until the stopping rule fires.
    Run(CotrainRunArgs),
    /// Continue from a checkpoint or a review-service state directory.
    Resume(CotrainResumeArgs),
}

#[derive(Debug, Args)]
struct CotrainRunArgs {
    /// MED or UND; both when omitted.
    #[arg(long)]
    dimension: Option<Dimension>,
    /// Recorded review decisions (one JSON object per line).
    #[arg(long)]
    resolver: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CotrainResumeArgs {
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long)]
    resolver: Option<PathBuf>,
    /// Checkpoint file, or a review-service state directory.
    #[arg(long)]
    from: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ReviewCommand {
    /// Serve the review API until interrupted.
    Serve(ReviewServeArgs),
}

#[derive(Debug, Args)]
struct ReviewServeArgs {
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<Dimension>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    dimension: Option<Dimension>,
    /// Reference labels; the held-out seed labels when omitted.
    #[arg(long)]
    gold: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum FairnessCommand {
    /// Funnel, cross-tabs, correlations, GLM and LASSO fits, parity.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Comma-separated penalties.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, value_parser = parse_coding)]
    gender_coding: Option<GenderCoding>,
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Ranking scores per video; `<out>/scores.csv` when omitted.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Allowed parity-ratio gap; `inf` keeps the base ranking.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, value_parser = parse_attribute)]
    attribute: Option<Attribute>,
}

fn parse_attribute(s: &str) -> Result<Attribute, String> {
    Attribute::parse(s).ok_or_else(|| format!("unknown attribute {s:?}, expected gender, age_bracket or fv"))
}

fn parse_coding(s: &str) -> Result<GenderCoding, String> {
    match s {
        "male_is_one" => Ok(GenderCoding::MaleIsOne),
        "female_is_one" => Ok(GenderCoding::FemaleIsOne),
        _ => Err(format!("unknown coding {s:?}, expected male_is_one or female_is_one")),
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "gaussian" => Ok(Family::Gaussian),
        "poisson" => Ok(Family::Poisson),
        _ => Err(format!("unknown family {s:?}, expected gaussian or poisson")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Measure(_) => "measure",
        Command::Featurize(_) => "featurize",
        Command::Cotrain(CotrainCommand::Run(_)) => "cotrain-run",
        Command::Cotrain(CotrainCommand::Resume(_)) => "cotrain-resume",
        Command::Review(_) => "review-serve",
        Command::Evaluate(_) => "evaluate",
        Command::Fairness(_) => "fairness-audit",
        Command::Recommend(_) => "recommend",
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    set_path(&mut cfg.paths.out, cli.out);
    let p = &mut cfg.paths;
    match cli.command {
        Command::Ingest(a) => {
            set_path(&mut p.terms, a.terms);
            set_path(&mut p.catalog, a.catalog);
            set(&mut cfg.ingest.per_term, a.per_term);
            set(&mut cfg.ingest.language, a.language);
            commands::ingest::run(&cfg, a.live)
        }
        Command::Measure(a) => {
            set_path(&mut p.corpus, a.corpus);
            set_path(&mut p.lexicon, a.lexicon);
            set_path(&mut p.transcripts, a.transcripts);
            set_path(&mut p.rubrics, a.rubrics);
            set(&mut cfg.measure.threshold_med, a.threshold_med);
            set(&mut cfg.measure.threshold_und, a.threshold_und);
            commands::measure::run(&cfg)
        }
        Command::Featurize(a) => {
            set_path(&mut p.corpus, a.corpus);
            set_path(&mut p.transcripts, a.transcripts);
            set_path(&mut p.visual, a.visual);
            set(&mut cfg.features.min_df, a.min_df);
            commands::featurize::run(&cfg)
        }
        Command::Cotrain(CotrainCommand::Run(a)) => {
            set_path(&mut p.resolver, a.resolver);
            commands::cotrain::run(&cfg, a.dimension)
        }
        Command::Cotrain(CotrainCommand::Resume(a)) => {
            set_path(&mut p.resolver, a.resolver);
            commands::cotrain::resume(&cfg, a.dimension, a.from)
        }
        Command::Review(ReviewCommand::Serve(a)) => {
            set(&mut cfg.review.bind, a.bind);
            set_path(&mut cfg.review.state_dir, a.state_dir);
            commands::review::serve(&cfg, a.dimension)
        }
        Command::Evaluate(a) => {
            set_path(&mut p.gold, a.gold);
            commands::evaluate::run(&cfg, a.dimension)
        }
        Command::Fairness(FairnessCommand::Audit(a)) => {
            set_path(&mut p.corpus, a.corpus);
            set_path(&mut p.annotations, a.annotations);
            let f = &mut cfg.fairness;
            set(&mut f.lambda_grid, a.lambda_grid);
            set(&mut f.cv_folds, a.cv_folds);
            set(&mut f.train_fraction, a.train_fraction);
            set(&mut f.gender_coding, a.gender_coding);
            set(&mut f.family, a.family);
            commands::fairness::audit(&cfg, a.labels)
        }
        Command::Recommend(a) => {
            set_path(&mut p.corpus, a.corpus);
            set_path(&mut p.annotations, a.annotations);
            let f = &mut cfg.fairness;
            set(&mut f.delta, a.delta);
            set(&mut f.top_k, a.top_k);
            set(&mut f.attribute, a.attribute);
            commands::fairness::recommend(&cfg, a.labels, a.scores)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).line("-"));
            return ExitCode::from(1);
        }
    };
    let name = command_name(&cli.command);
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line(name));
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
