//! `corpus ingest` and `corpus segment`.

use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, Subcommand};

use dataforge_core::corpus::{self, SourceDocument, SourceKind};

use crate::manifest::{build_manifest, write_manifest};
use crate::Context;

use super::{read_to_string, resolve_input, write_string};

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Normalize raw text files into a document store.
    Ingest(IngestArgs),
    /// Split documents into grounding chunks.
    Segment(SegmentArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// A text file or a directory of .txt/.md files.
    #[arg(long)]
    pub input: PathBuf,
    /// Default source kind when a file has no front matter.
    #[arg(long, default_value = "other", value_parser = ["wiki", "report", "paper", "other"])]
    pub kind: String,
    /// Output document store (jsonl). Default: <out_dir>/docs.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Document store produced by `corpus ingest`.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    /// Output chunk store (jsonl). Default: <out_dir>/chunks.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the config's token budget per chunk.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Override the config's overlap.
    #[arg(long)]
    pub overlap: Option<usize>,
}

fn parse_kind(kind: &str) -> SourceKind {
    match kind {
        "wiki" => SourceKind::Wiki,
        "report" => SourceKind::Report,
        "paper" => SourceKind::Paper,
        _ => SourceKind::Other,
    }
}

fn collect_input_files(input: &PathBuf) -> anyhow::Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.clone()]);
    }
    if !input.is_dir() {
        anyhow::bail!(
            "input {} is neither a file nor a directory",
            input.display()
        );
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("cannot list {}", input.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("txt") | Some("md") | Some("text")
                )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        anyhow::bail!("no .txt/.md files under {}", input.display());
    }
    Ok(files)
}

pub fn run(cmd: CorpusCmd, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        CorpusCmd::Ingest(args) => ingest(args, ctx),
        CorpusCmd::Segment(args) => segment(args, ctx),
    }
}

fn ingest(args: IngestArgs, ctx: &Context) -> anyhow::Result<()> {
    let files = collect_input_files(&args.input)?;
    let kind = parse_kind(&args.kind);
    let mut docs: Vec<SourceDocument> = Vec::new();
    for file in &files {
        let doc = corpus::ingest_path(file, kind)
            .with_context(|| format!("ingesting {}", file.display()))?;
        docs.push(doc);
    }
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("docs.jsonl"),
    };
    let mut body = String::new();
    for doc in &docs {
        body.push_str(&serde_json::to_string(doc)?);
        body.push('\n');
    }
    write_string(&out, &body)?;
    let input_refs: Vec<&std::path::Path> = files.iter().map(|p| p.as_path()).collect();
    let manifest = build_manifest("corpus ingest", ctx.seed, &ctx.cfg, &input_refs, &[&out])?;
    write_manifest(&out, &manifest)?;
    println!("ingested {} document(s) -> {}", docs.len(), out.display());
    Ok(())
}

fn segment(args: SegmentArgs, ctx: &Context) -> anyhow::Result<()> {
    let docs_path = resolve_input(&args.docs, &ctx.cfg.paths.docs, "docs")?;
    let mut policy = ctx.cfg.segment_policy()?;
    if let Some(m) = args.max_tokens {
        policy.max_tokens = m;
    }
    if let Some(o) = args.overlap {
        policy.overlap_tokens = o;
    }
    let raw = read_to_string(&docs_path)?;
    let mut chunks = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: SourceDocument = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", docs_path.display(), lineno + 1))?;
        chunks.extend(corpus::segment(&doc, &policy)?);
    }
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("chunks.jsonl"),
    };
    write_string(&out, &corpus::write_chunks(&chunks))?;
    let manifest = build_manifest("corpus segment", ctx.seed, &ctx.cfg, &[&docs_path], &[&out])?;
    write_manifest(&out, &manifest)?;
    println!(
        "segmented into {} chunk(s) -> {}",
        chunks.len(),
        out.display()
    );
    Ok(())
}
