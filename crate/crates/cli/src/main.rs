//! `erasmo`: run the tabular-embedding clustering pipeline, or any stage of it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use erasmo::codec::Variant;
use erasmo::pipeline::{self, EmbeddingSource, PipelineConfig, PipelineError, QualityReport, REPORT_CSV_FILE};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "erasmo",
    version,
    about = "Cluster tabular data through embeddings of a fine-tuned text model"
)]
struct Cli {
    /// JSON configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (split, shuffles, initialization, training).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Encoding path: base or nv (numbers verbalized).
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// internal, file:PATH or http:URL.
    #[arg(long, global = true)]
    embeddings_from: Option<EmbeddingSource>,
    /// Input CSV.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "erasmo-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Every stage, start to finish.
    Run,
    /// Split the dataset and write the text corpora.
    Encode,
    /// Train the tokenizer and fine-tune the model.
    Train,
    /// Embed the held-out records.
    Embed,
    /// Sweep k for every algorithm on the embeddings.
    Cluster,
    /// Write the report and manifest.
    Report,
    /// Write a 2-D PCA projection of the embeddings.
    Project,
}

fn config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(variant) = cli.variant {
        cfg.variant = variant;
    }
    if let Some(source) = &cli.embeddings_from {
        cfg.embeddings_from = source.clone();
    }
    if let Some(dataset) = &cli.dataset {
        cfg.dataset = Some(dataset.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &QualityReport, cli: &Cli) {
    match std::fs::read_to_string(cli.out.join(REPORT_CSV_FILE)) {
        Ok(csv) => print!("{csv}"),
        Err(_) => {
            for r in &report.rows {
                println!("{} {} k={} ss={:.4}", r.approach, r.algorithm.name(), r.best_k, r.ss);
            }
        }
    }
    println!("best: {}", report.best_algorithm.name());
}

fn execute(cli: &Cli, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Run => {
            let report = pipeline::run_pipeline(cfg, out)?;
            print_report(&report, cli);
        }
        Command::Encode => {
            let split = pipeline::run_encode(cfg, out)?;
            println!(
                "{} training rows, {} held out",
                split.train_rows.len(),
                split.test_rows.len()
            );
        }
        Command::Train => {
            let trained = pipeline::run_train(cfg, out)?;
            match trained.final_loss {
                Some(loss) => println!("vocabulary {} tokens, final loss {loss:.4}", trained.vocab.len()),
                None => println!("vocabulary {} tokens, no training steps", trained.vocab.len()),
            }
        }
        Command::Embed => {
            let m = pipeline::run_embed(cfg, out)?;
            println!("{} x {} embeddings", m.rows(), m.dim());
        }
        Command::Cluster => {
            let report = pipeline::run_cluster(cfg, out)?;
            print_report(&report, cli);
        }
        Command::Report => {
            let (report, manifest) = pipeline::run_report(cfg, out)?;
            print_report(&report, cli);
            println!("manifest {}", manifest.hash);
        }
        Command::Project => {
            let p = pipeline::run_project(cfg, out)?;
            let share = (p.explained_variance[0] + p.explained_variance[1]) / p.total_variance;
            println!("2 components explain {:.1}% of the variance", 100.0 * share);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERASMO_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = config(&cli).and_then(|cfg| execute(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                log::debug!("caused by: {s}");
                source = s.source();
            }
            ExitCode::from(match e {
                PipelineError::Config(_) => EXIT_CONFIG,
                PipelineError::Stage { .. } => EXIT_STAGE,
            })
        }
    }
}
