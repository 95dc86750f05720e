//! `rag index` and `rag query`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde_json::json;

use dataforge_core::corpus::{self, DocumentChunk, SourceKind};
use dataforge_core::rag::{
    self, compose_rag_prompt, read_index, write_index, DEFAULT_RAG_TEMPLATE,
};

use crate::manifest::{build_manifest, write_manifest};
use crate::Context;

use super::{read_to_string, resolve_input, write_json_pretty, write_string};

#[derive(Debug, Subcommand)]
pub enum RagCmd {
    /// Embed knowledge-base chunks into a flat cosine index.
    Index(IndexArgs),
    /// Retrieve top-k chunks and compose the augmented prompt.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Knowledge base: a chunk store (jsonl from `corpus segment`) or a raw
    /// text file/directory segmented with the config policy.
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    /// Index output. Default: <out_dir>/kb.index
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Index produced by `rag index`.
    #[arg(long)]
    pub index: PathBuf,
    /// Chunk store carrying the indexed texts (written next to the index).
    #[arg(long)]
    pub chunks: Option<PathBuf>,
    /// Query text.
    #[arg(long)]
    pub query: String,
    /// Retrieval depth; defaults to the config's eval.k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also send the composed prompt through the gateway.
    #[arg(long)]
    pub complete: bool,
    /// Hits output. Default: <out_dir>/hits.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: RagCmd, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        RagCmd::Index(args) => index(args, ctx),
        RagCmd::Query(args) => query(args, ctx),
    }
}

fn load_knowledge_chunks(path: &PathBuf, ctx: &Context) -> anyhow::Result<Vec<DocumentChunk>> {
    if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        return Ok(corpus::read_chunks(&read_to_string(path)?)?);
    }
    let policy = ctx.cfg.segment_policy()?;
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut fs: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        fs.sort();
        fs
    } else {
        vec![path.clone()]
    };
    let mut chunks = Vec::new();
    for file in files {
        let doc = corpus::ingest_path(&file, SourceKind::Other)?;
        chunks.extend(corpus::segment(&doc, &policy)?);
    }
    Ok(chunks)
}

fn index(args: IndexArgs, ctx: &Context) -> anyhow::Result<()> {
    let knowledge = resolve_input(&args.knowledge, &ctx.cfg.paths.knowledge, "knowledge")?;
    let chunks = load_knowledge_chunks(&knowledge, ctx)?;
    if chunks.is_empty() {
        anyhow::bail!("{} produced no chunks", knowledge.display());
    }
    let gateway = ctx.gateway()?;
    let index = rag::build_index(&chunks, &gateway)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("kb.index"),
    };
    write_string(&out, &write_index(&index))?;
    // The chunk texts ride along so `rag query` can compose prompts.
    let chunks_path = out.with_extension("chunks.jsonl");
    write_string(&chunks_path, &corpus::write_chunks(&chunks))?;
    let manifest = build_manifest(
        "rag index",
        ctx.seed,
        &ctx.cfg,
        &[&knowledge],
        &[&out, &chunks_path],
    )?;
    write_manifest(&out, &manifest)?;
    println!(
        "indexed {} chunk(s), dim {} -> {}",
        index.len(),
        index.dim(),
        out.display()
    );
    Ok(())
}

fn query(args: QueryArgs, ctx: &Context) -> anyhow::Result<()> {
    let index = read_index(&read_to_string(&args.index)?)?;
    let chunks_path = match &args.chunks {
        Some(p) => p.clone(),
        None => args.index.with_extension("chunks.jsonl"),
    };
    let chunks = corpus::read_chunks(&read_to_string(&chunks_path)?)?;
    let store: BTreeMap<String, String> =
        chunks.into_iter().map(|c| (c.chunk_id, c.text)).collect();
    let gateway = ctx.gateway()?;
    let k = args.k.unwrap_or(ctx.cfg.eval.k);
    let hits = rag::retrieve(&index, &args.query, k, &gateway)?;
    let prompt = compose_rag_prompt(&args.query, &hits, &store, DEFAULT_RAG_TEMPLATE)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("hits.json"),
    };
    let answer = if args.complete {
        Some(gateway.complete(&prompt.request)?.text)
    } else {
        None
    };
    write_json_pretty(
        &out,
        &json!({
            "query": args.query,
            "k": k,
            "hits": hits,
            "token_estimate": prompt.token_estimate,
            "prompt": prompt.request.last_user_text(),
            "answer": answer,
        }),
    )?;
    let manifest = build_manifest(
        "rag query",
        ctx.seed,
        &ctx.cfg,
        &[&args.index, &chunks_path],
        &[&out],
    )?;
    write_manifest(&out, &manifest)?;
    for hit in &hits {
        println!("{}. {} (score {:.4})", hit.rank, hit.chunk_id, hit.score);
    }
    println!(
        "composed prompt ~{} token(s) -> {}",
        prompt.token_estimate,
        out.display()
    );
    Ok(())
}
