//! `forge selfqa`, `forge harvest`, and `forge selfinstruct` — the three
//! record-construction strategies.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;

use dataforge_core::corpus;
use dataforge_core::dataset::write_records;
use dataforge_core::selfinstruct::{self, read_seed_pool};
use dataforge_core::selfqa;
use dataforge_core::webharvest;

use crate::manifest::{build_manifest, write_manifest};
use crate::Context;

use super::{read_to_string, resolve_input, write_json_pretty, write_string};

#[derive(Debug, Subcommand)]
pub enum ForgeCmd {
    /// Grounded question-answer generation over document chunks.
    Selfqa(SelfqaArgs),
    /// Select best community answers from Q&A dump files.
    Harvest(HarvestArgs),
    /// Bootstrap new instructions from a seed task pool.
    Selfinstruct(SelfinstructArgs),
}

#[derive(Debug, Args)]
pub struct SelfqaArgs {
    /// Chunk store produced by `corpus segment`.
    #[arg(long)]
    pub chunks: Option<PathBuf>,
    /// Output record file. Default: <out_dir>/selfqa.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    /// Comma-separated dump files (line-delimited Q&A records).
    #[arg(long, value_delimiter = ',')]
    pub dumps: Vec<PathBuf>,
    /// Minimum recommendation score for an answer.
    #[arg(long)]
    pub min_score: Option<i64>,
    /// Output record file. Default: <out_dir>/harvest.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfinstructArgs {
    /// Seed task file (line-delimited {task_id, instruction, answer?}).
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Override the config's round count.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Output record file. Default: <out_dir>/selfinstruct.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to persist the final pool. Default: <out_dir>/pool.jsonl
    #[arg(long)]
    pub pool_out: Option<PathBuf>,
}

pub fn run(cmd: ForgeCmd, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        ForgeCmd::Selfqa(args) => run_selfqa(args, ctx),
        ForgeCmd::Harvest(args) => run_harvest(args, ctx),
        ForgeCmd::Selfinstruct(args) => run_selfinstruct(args, ctx),
    }
}

fn run_selfqa(args: SelfqaArgs, ctx: &Context) -> anyhow::Result<()> {
    let chunks_path = resolve_input(&args.chunks, &ctx.cfg.paths.chunks, "chunks")?;
    let chunks = corpus::read_chunks(&read_to_string(&chunks_path)?)?;
    if chunks.is_empty() {
        anyhow::bail!("{} holds no chunks", chunks_path.display());
    }
    let gateway = ctx.gateway()?;
    let cfg = ctx.cfg.selfqa_config();
    let outcome = selfqa::run_selfqa(&chunks, &cfg, &gateway);
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("selfqa.jsonl"),
    };
    write_string(&out, &write_records(&outcome.records))?;
    let manifest = build_manifest("forge selfqa", ctx.seed, &ctx.cfg, &[&chunks_path], &[&out])?;
    write_manifest(&out, &manifest)?;
    println!(
        "self-qa: {} record(s), {} rejected answer(s), {} failed chunk(s) -> {}",
        outcome.records.len(),
        outcome.rejected_answers,
        outcome.failures.len(),
        out.display()
    );
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("  failed {} at {}: {}", f.chunk_id, f.stage, f.error);
        }
    }
    Ok(())
}

fn run_harvest(args: HarvestArgs, ctx: &Context) -> anyhow::Result<()> {
    let dumps = if args.dumps.is_empty() {
        ctx.cfg.paths.dumps.clone()
    } else {
        args.dumps.clone()
    };
    if dumps.is_empty() {
        anyhow::bail!("no dump files given: pass --dumps or set [paths] dumps");
    }
    let min_score = args.min_score.unwrap_or(ctx.cfg.eval.min_score);
    let report = webharvest::harvest(&dumps, min_score);
    if report.failed_files.len() == dumps.len() {
        anyhow::bail!(
            "every dump file failed; first error: {}",
            report.failed_files[0].1
        );
    }
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("harvest.jsonl"),
    };
    write_string(&out, &write_records(&report.records))?;
    let report_path = out.with_extension("report.json");
    write_json_pretty(
        &report_path,
        &json!({
            "site_counts": report.site_counts,
            "questions_seen": report.questions_seen,
            "emitted": report.records.len(),
            "below_threshold": report.below_threshold,
            "skipped_malformed": report.skipped_malformed,
            "skipped_duplicates": report.skipped_duplicates,
            "failed_files": report.failed_files.iter().map(|(p, e)| json!({"path": p.display().to_string(), "error": e})).collect::<Vec<_>>(),
            "min_score": min_score,
        }),
    )?;
    let input_refs: Vec<&std::path::Path> = dumps
        .iter()
        .filter(|p| p.exists())
        .map(|p| p.as_path())
        .collect();
    let manifest = build_manifest(
        "forge harvest",
        ctx.seed,
        &ctx.cfg,
        &input_refs,
        &[&out, &report_path],
    )?;
    write_manifest(&out, &manifest)?;
    println!(
        "harvest: {} record(s) from {} question(s) -> {}",
        report.records.len(),
        report.questions_seen,
        out.display()
    );
    Ok(())
}

fn run_selfinstruct(args: SelfinstructArgs, ctx: &Context) -> anyhow::Result<()> {
    let seeds_path = resolve_input(&args.seeds, &ctx.cfg.paths.seeds, "seeds")?;
    let pool = read_seed_pool(&read_to_string(&seeds_path)?, ctx.seed)?;
    let mut cfg = ctx.cfg.selfinstruct_config();
    if let Some(rounds) = args.rounds {
        cfg.rounds = rounds;
    }
    let gateway = ctx.gateway()?;
    let outcome = selfinstruct::run_selfinstruct(&pool, &cfg, &gateway)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("selfinstruct.jsonl"),
    };
    let pool_out = match args.pool_out {
        Some(p) => p,
        None => ctx.out_dir()?.join("pool.jsonl"),
    };
    write_string(&out, &write_records(&outcome.records))?;
    write_string(&pool_out, &selfinstruct::write_pool(&outcome.pool))?;
    let manifest = build_manifest(
        "forge selfinstruct",
        ctx.seed,
        &ctx.cfg,
        &[&seeds_path],
        &[&out, &pool_out],
    )?;
    write_manifest(&out, &manifest)?;
    let accepted: usize = outcome.rounds.iter().map(|r| r.accepted).sum();
    println!(
        "self-instruct: {} round(s), {} accepted, pool {} -> {} (records -> {})",
        outcome.rounds.len(),
        accepted,
        outcome.pool.len(),
        pool_out.display(),
        out.display()
    );
    Ok(())
}
