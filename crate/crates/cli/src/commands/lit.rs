//! `lit search` and `lit hypothesize`.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;

use dataforge_core::litsearch::{self, SearchClient, DEFAULT_FETCH_LIMIT, DEFAULT_MAX_KEEP};

use crate::manifest::{build_manifest, write_manifest};
use crate::Context;

use super::write_json_pretty;

#[derive(Debug, Subcommand)]
pub enum LitCmd {
    /// Keyword extraction, paper search, and shortlist selection.
    Search(SearchArgs),
    /// Hypothesis stubs connecting the given concepts.
    Hypothesize(HypothesizeArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// The information need, in plain language.
    #[arg(long)]
    pub need: String,
    /// Papers fetched from the API.
    #[arg(long, default_value_t = DEFAULT_FETCH_LIMIT)]
    pub limit: usize,
    /// Shortlist cap.
    #[arg(long, default_value_t = DEFAULT_MAX_KEEP)]
    pub max_keep: usize,
    /// Shortlist output. Default: <out_dir>/shortlist.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HypothesizeArgs {
    /// Comma-separated concepts to connect (at least two).
    #[arg(long, value_delimiter = ',', required = true)]
    pub concepts: Vec<String>,
    /// Number of hypothesis stubs to request.
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Output. Default: <out_dir>/hypotheses.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: LitCmd, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        LitCmd::Search(args) => search(args, ctx),
        LitCmd::Hypothesize(args) => hypothesize(args, ctx),
    }
}

fn search(args: SearchArgs, ctx: &Context) -> anyhow::Result<()> {
    let gateway = ctx.gateway()?;
    let keywords = litsearch::extract_search_topics(&args.need, &gateway)?;
    println!("keywords: {}", keywords.join("; "));
    let client = SearchClient::new(
        &ctx.cfg.litsearch.endpoint,
        &ctx.cfg.litsearch.cache_dir,
        ctx.offline,
    );
    let papers = litsearch::search_papers(&client, &keywords, args.limit)?;
    println!("fetched {} paper(s)", papers.len());
    let shortlist = litsearch::shortlist_papers(&papers, &args.need, &gateway, args.max_keep)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("shortlist.json"),
    };
    write_json_pretty(
        &out,
        &json!({
            "need": args.need,
            "keywords": keywords,
            "fetched": papers.len(),
            "shortlist": shortlist,
        }),
    )?;
    let manifest = build_manifest("lit search", ctx.seed, &ctx.cfg, &[], &[&out])?;
    write_manifest(&out, &manifest)?;
    for entry in &shortlist.entries {
        println!(
            "- {} ({}) [{:.2}] {}",
            entry.paper.title,
            entry
                .paper
                .year
                .map(|y| y.to_string())
                .unwrap_or_else(|| "n.d.".into()),
            entry.confidence,
            entry.rationale
        );
    }
    println!(
        "shortlisted {} -> {}",
        shortlist.entries.len(),
        out.display()
    );
    Ok(())
}

fn hypothesize(args: HypothesizeArgs, ctx: &Context) -> anyhow::Result<()> {
    let gateway = ctx.gateway()?;
    let outcome = litsearch::formulate_hypotheses(&args.concepts, &gateway, args.count)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("hypotheses.json"),
    };
    write_json_pretty(
        &out,
        &json!({
            "concepts": args.concepts,
            "kept": outcome.kept,
            "dropped": outcome.dropped.iter().map(|(h, why)| json!({"hypothesis": h, "reason": why})).collect::<Vec<_>>(),
        }),
    )?;
    let manifest = build_manifest("lit hypothesize", ctx.seed, &ctx.cfg, &[], &[&out])?;
    write_manifest(&out, &manifest)?;
    for h in &outcome.kept {
        println!("- {}", h.title);
    }
    println!(
        "kept {} hypothesis stub(s), dropped {} -> {}",
        outcome.kept.len(),
        outcome.dropped.len(),
        out.display()
    );
    Ok(())
}
