//! `dataset merge`, `dataset decontaminate`, and `dataset export`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, Subcommand};
use serde::Deserialize;
use serde_json::json;

use dataforge_core::dataset::{
    self, export_training_bundle, read_records_from_path, write_records, Dataset,
};

use crate::manifest::{build_manifest, write_manifest};
use crate::Context;

use super::{read_to_string, write_json_pretty, write_string};

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Concatenate record files, dedup by record_id, seeded shuffle.
    Merge(MergeArgs),
    /// Drop eval items sharing n-grams with a training corpus.
    Decontaminate(DecontArgs),
    /// Write a trainer-ready bundle (records + hyperparameters + manifest).
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Comma-separated record files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output dataset file. Default: <out_dir>/merged.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecontArgs {
    /// Eval items, line-delimited {id?, text}.
    #[arg(long)]
    pub eval: PathBuf,
    /// Training corpus record file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Shingle size.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Shared-shingle count that triggers removal.
    #[arg(long, default_value_t = 1)]
    pub min_overlap: usize,
    /// Kept-items output. Default: <out_dir>/eval.kept.jsonl
    #[arg(long)]
    pub out_kept: Option<PathBuf>,
    /// Removed-items output. Default: <out_dir>/eval.removed.jsonl
    #[arg(long)]
    pub out_removed: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Dataset file to export.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Bundle directory. Default: <out_dir>/bundle
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Hyperparameters passed through verbatim, as key=value (repeatable).
    #[arg(long = "hp", value_parser = parse_key_val)]
    pub hyperparameters: Vec<(String, String)>,
}

fn parse_key_val(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("'{s}' is not key=value"))
}

#[derive(Debug, Deserialize)]
struct EvalItemLine {
    #[serde(default)]
    id: Option<String>,
    text: String,
}

pub fn run(cmd: DatasetCmd, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        DatasetCmd::Merge(args) => merge(args, ctx),
        DatasetCmd::Decontaminate(args) => decontaminate(args, ctx),
        DatasetCmd::Export(args) => export(args, ctx),
    }
}

fn merge(args: MergeArgs, ctx: &Context) -> anyhow::Result<()> {
    let mut sets = Vec::new();
    for path in &args.inputs {
        let records = read_records_from_path(path)?;
        // Per-file duplicates collapse here; cross-file dedup happens in merge.
        let mut seen = std::collections::HashSet::new();
        let unique: Vec<_> = records
            .into_iter()
            .filter(|r| seen.insert(r.record_id.clone()))
            .collect();
        sets.push(Dataset::from_records(unique)?);
    }
    let merged = dataset::merge(&sets, ctx.seed)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("merged.jsonl"),
    };
    write_string(&out, &write_records(&merged.records))?;
    let manifest_path = out.with_extension("dataset-manifest.json");
    write_json_pretty(&manifest_path, &merged.manifest)?;
    let input_refs: Vec<&std::path::Path> = args.inputs.iter().map(|p| p.as_path()).collect();
    let manifest = build_manifest(
        "dataset merge",
        ctx.seed,
        &ctx.cfg,
        &input_refs,
        &[&out, &manifest_path],
    )?;
    write_manifest(&out, &manifest)?;
    println!(
        "merged {} file(s) into {} record(s) -> {}",
        args.inputs.len(),
        merged.len(),
        out.display()
    );
    Ok(())
}

fn decontaminate(args: DecontArgs, ctx: &Context) -> anyhow::Result<()> {
    let raw = read_to_string(&args.eval)?;
    let mut ids = Vec::new();
    let mut texts = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: EvalItemLine = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", args.eval.display(), lineno + 1))?;
        ids.push(item.id.unwrap_or_else(|| format!("item-{lineno}")));
        texts.push(item.text);
    }
    let corpus = Dataset::from_records(read_records_from_path(&args.corpus)?)?;
    if corpus.is_empty() {
        anyhow::bail!("{} holds no records", args.corpus.display());
    }
    let outcome = dataset::decontaminate(&texts, &corpus, args.n, args.min_overlap);

    let out_kept = match args.out_kept {
        Some(p) => p,
        None => ctx.out_dir()?.join("eval.kept.jsonl"),
    };
    let out_removed = match args.out_removed {
        Some(p) => p,
        None => ctx.out_dir()?.join("eval.removed.jsonl"),
    };
    let mut kept_body = String::new();
    for (idx, text) in &outcome.kept {
        kept_body.push_str(&serde_json::to_string(
            &json!({"id": ids[*idx], "text": text}),
        )?);
        kept_body.push('\n');
    }
    write_string(&out_kept, &kept_body)?;
    let mut removed_body = String::new();
    for item in &outcome.removed {
        removed_body.push_str(&serde_json::to_string(&json!({
            "id": ids[item.index],
            "text": item.text,
            "offending_shingles": item.offending_shingles,
        }))?);
        removed_body.push('\n');
    }
    write_string(&out_removed, &removed_body)?;
    let report_path = out_kept.with_extension("report.json");
    write_json_pretty(&report_path, &outcome.report)?;
    let manifest = build_manifest(
        "dataset decontaminate",
        ctx.seed,
        &ctx.cfg,
        &[&args.eval, &args.corpus],
        &[&out_kept, &out_removed, &report_path],
    )?;
    write_manifest(&out_kept, &manifest)?;
    println!(
        "decontaminate: kept {}, removed {} of {} -> {}",
        outcome.report.kept_items,
        outcome.report.removed_items,
        outcome.report.input_items,
        out_kept.display()
    );
    Ok(())
}

fn export(args: ExportArgs, ctx: &Context) -> anyhow::Result<()> {
    let records = read_records_from_path(&args.dataset)?;
    let ds = Dataset::from_records(records)?;
    let out_dir = match args.out_dir {
        Some(p) => p,
        None => ctx.out_dir()?.join("bundle"),
    };
    let hp: BTreeMap<String, String> = args.hyperparameters.into_iter().collect();
    let bundle = export_training_bundle(&ds, &hp, &out_dir)?;
    let manifest = build_manifest(
        "dataset export",
        ctx.seed,
        &ctx.cfg,
        &[&args.dataset],
        &[
            &bundle.data_path,
            &bundle.hyperparameters_path,
            &bundle.manifest_path,
        ],
    )?;
    write_manifest(&bundle.data_path, &manifest)?;
    println!("exported {} record(s) -> {}", ds.len(), out_dir.display());
    Ok(())
}
