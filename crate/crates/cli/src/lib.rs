//! Command-line front end for the dataforge pipeline.
//!
//! Exit codes are fixed for scripting: 0 success, 1 domain error (a step
//! failed), 2 usage or configuration error.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use dataforge_core::gateway::{BackendKind, Gateway, MockBackend};

#[derive(Debug, Parser)]
#[command(
    name = "dataforge",
    version,
    about = "Construct instruction datasets, decontaminate eval suites, and run evaluation harnesses"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Sectioned TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the config's rng_seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Never touch the network; cached/scripted data only.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Override the backend kind.
    #[arg(long, global = true, value_parser = ["mock", "remote"])]
    pub backend: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest and segment source documents.
    #[command(subcommand)]
    Corpus(commands::corpus::CorpusCmd),
    /// Construct instruction records (grounded QA, web harvest, bootstrap).
    #[command(subcommand)]
    Forge(commands::forge::ForgeCmd),
    /// Merge, decontaminate, and export datasets.
    #[command(subcommand)]
    Dataset(commands::dataset::DatasetCmd),
    /// Objective and subjective evaluation harnesses.
    #[command(subcommand)]
    Eval(commands::eval::EvalCmd),
    /// Build and query the retrieval index.
    #[command(subcommand)]
    Rag(commands::rag::RagCmd),
    /// Literature search and hypothesis formulation.
    #[command(subcommand)]
    Lit(commands::lit::LitCmd),
}

/// Everything a command needs: resolved config, effective seed, offline
/// flag.
pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub offline: bool,
}

impl Context {
    pub fn load(common: &CommonArgs) -> Result<Context, config::ConfigError> {
        let mut cfg = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(kind) = &common.backend {
            cfg.backend.kind = kind.clone();
        }
        if let Some(seed) = common.seed {
            cfg.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(Context {
            seed: cfg.rng_seed,
            offline: common.offline,
            cfg,
        })
    }

    /// Build the gateway. A mock backend without a script file runs with an
    /// empty script (every chat reply is the fallback).
    pub fn gateway(&self) -> anyhow::Result<Gateway> {
        let backend_cfg = self.cfg.backend_config()?;
        if backend_cfg.kind == BackendKind::Mock && backend_cfg.script_path.is_none() {
            return Ok(Gateway::from_backend(
                Arc::new(MockBackend::empty()),
                backend_cfg.max_inflight,
            ));
        }
        if backend_cfg.kind == BackendKind::Remote && self.offline {
            anyhow::bail!("--offline is incompatible with the remote backend");
        }
        Gateway::new(&backend_cfg).context("cannot construct gateway")
    }

    /// Output directory, created on first use.
    pub fn out_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = if self.cfg.paths.out_dir.as_os_str().is_empty() {
            PathBuf::from("out")
        } else {
            self.cfg.paths.out_dir.clone()
        };
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(dir)
    }
}

/// Parse argv and execute. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let ctx = match Context::load(&cli.common) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    let result = match cli.command {
        Command::Corpus(cmd) => commands::corpus::run(cmd, &ctx),
        Command::Forge(cmd) => commands::forge::run(cmd, &ctx),
        Command::Dataset(cmd) => commands::dataset::run(cmd, &ctx),
        Command::Eval(cmd) => commands::eval::run(cmd, &ctx),
        Command::Rag(cmd) => commands::rag::run(cmd, &ctx),
        Command::Lit(cmd) => commands::lit::run(cmd, &ctx),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
