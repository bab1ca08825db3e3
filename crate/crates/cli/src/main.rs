mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use taxoutlier::formats::HeaderMode;

use crate::commands::{EvaluateArgs, Status};
use crate::config::{DumpFormat, Overrides, PipelineConfig};

const THREADS_ENV: &str = "TAXOUTLIER_THREADS";

/// Build and score taxonomy-derived outlier-detection datasets.
#[derive(Debug, Parser)]
#[command(name = "taxoutlier", version)]
struct Cli {
    /// TOML pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    language: Option<String>,
    /// Taxonomy distance bound for third-tier outliers.
    #[arg(long, global = true)]
    mu: Option<u32>,
    /// Worker threads (also TAXOUTLIER_THREADS). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Simple,
    Wikidata,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HeaderArg {
    Auto,
    Present,
    Absent,
}

impl From<HeaderArg> for HeaderMode {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Present => HeaderMode::Present,
            HeaderArg::Absent => HeaderMode::Absent,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset from an entity dump.
    Generate {
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, value_enum)]
        dump_format: Option<FormatArg>,
        /// Anchor-text statistics (title, anchor, count per line).
        #[arg(long)]
        anchors: Option<PathBuf>,
    },
    /// Score embeddings against a dataset.
    Evaluate {
        dataset: PathBuf,
        embeddings: Vec<PathBuf>,
        /// Restrict to entities every embedding knows.
        #[arg(long)]
        intersect: bool,
        #[arg(long, value_enum, default_value = "auto")]
        header: HeaderArg,
        /// The embeddings contain `_`-joined phrase tokens.
        #[arg(long)]
        phrases: bool,
    },
    /// Summarize dataset files and embedding vocabularies.
    Stats {
        datasets: Vec<PathBuf>,
        #[arg(long = "embedding")]
        embeddings: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        header: HeaderArg,
    },
    /// Report graph construction and pruning counts.
    PruneReport {
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, value_enum)]
        dump_format: Option<FormatArg>,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count")),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    let base = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut cfg = base.resolve(&Overrides {
        seed: cli.seed,
        language: cli.language,
        mu: cli.mu,
        output: cli.output,
    })?;
    let mut set_dump = |dump: Option<PathBuf>, format: Option<FormatArg>| {
        if dump.is_some() {
            cfg.paths.dump = dump;
        }
        if let Some(f) = format {
            cfg.paths.dump_format = match f {
                FormatArg::Simple => DumpFormat::Simple,
                FormatArg::Wikidata => DumpFormat::Wikidata,
            };
        }
    };
    match cli.command {
        Command::Generate {
            dump,
            dump_format,
            anchors,
        } => {
            set_dump(dump, dump_format);
            if anchors.is_some() {
                cfg.paths.anchors = anchors;
            }
            cfg.generator.validate()?;
            commands::generate(&cfg)
        }
        Command::Evaluate {
            dataset,
            embeddings,
            intersect,
            header,
            phrases,
        } => {
            let embeddings = if embeddings.is_empty() {
                cfg.paths.embeddings.clone()
            } else {
                embeddings
            };
            commands::evaluate(
                &cfg,
                EvaluateArgs {
                    dataset: &dataset,
                    embeddings,
                    intersect,
                    header: header.into(),
                    phrases,
                },
            )
        }
        Command::Stats {
            datasets,
            embeddings,
            header,
        } => commands::stats(&cfg, &datasets, &embeddings, header.into()),
        Command::PruneReport { dump, dump_format } => {
            set_dump(dump, dump_format);
            commands::prune_report(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Empty) => {
            eprintln!("warning: no output produced");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
