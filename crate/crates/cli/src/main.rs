//! `drugvec`: run the embedding-refinement and matrix-completion pipeline
//! from a config file.
//!
//! On failure the first stderr line is machine readable:
//! `error kind=<kind> msg=<json string>`, followed by a plain message.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::PipelineConfig;
use pipeline::Pipeline;

#[derive(Parser)]
#[command(name = "drugvec", version, about = "Drug-disease association scoring from refined embeddings")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every input, align the catalog, write alignment_report.json.
    Validate,
    /// Build and write the drug and disease similarity matrices.
    Similarity,
    /// Write refined drug and disease vectors.
    Refine,
    /// Fit the projection model and write model.bin.
    Fit,
    /// Write scores.csv, every drug ranked for every disease.
    Score,
    /// Cross-validate; write report.json, roc.csv, topk.csv.
    Cv,
    /// Leave one disease's associations out, refit, write case_study.csv.
    CaseStudy {
        #[arg(long)]
        disease: String,
    },
    /// Write a planted-block synthetic dataset and a config for it.
    Synth,
}

fn kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<drugvec::Error>() {
            return e.kind();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config";
        }
    }
    "config"
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let is_synth = matches!(cli.command, Command::Synth);
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None if is_synth => PipelineConfig::default(),
        None => anyhow::bail!("--config is required for this command"),
    };
    cfg.finalize(cli.seed, cli.out, !is_synth)?;
    let mut p = Pipeline::new(cfg)?;

    match cli.command {
        Command::Validate => {
            let r = p.validate()?;
            println!(
                "drugs {} -> {}, diseases {} -> {}, dropped {}",
                r.drugs_before,
                r.drugs_after,
                r.diseases_before,
                r.diseases_after,
                r.dropped.len()
            );
        }
        Command::Similarity => p.similarity()?,
        Command::Refine => p.refine_cmd()?,
        Command::Fit => p.fit()?,
        Command::Score => p.score()?,
        Command::Cv => {
            let (mean, pooled) = p.cv()?;
            println!("mean AUC {mean:.4}, pooled AUC {pooled:.4}");
        }
        Command::CaseStudy { disease } => {
            if let Some(r) = p.case_study(&disease)? {
                println!("{:.0}% of removed drugs in top 10", 100.0 * r);
            }
        }
        Command::Synth => p.synth()?,
    }
    for f in p.written() {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            let quoted = serde_json::to_string(&msg).expect("string serializes");
            eprintln!("error kind={} msg={quoted}", kind(&e));
            eprintln!("drugvec: {msg}");
            ExitCode::FAILURE
        }
    }
}
