//! `eval mcq`, `eval judge`, `eval human`, and `eval report`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, Subcommand};
use serde::Deserialize;
use serde_json::json;

use dataforge_core::evalkit::{
    self, aggregate_human, aggregate_subjective, combined_average, read_suite,
    render_objective_table, render_subjective_table, score_objective, CriterionSums, Discipline,
    HumanLabel, JudgeScore, ObjectiveReport, DEFAULT_JUDGE_TEMPLATE, DEFAULT_MCQ_TEMPLATE,
};

use crate::manifest::{build_manifest, write_manifest};
use crate::Context;

use super::{read_to_string, resolve_input, write_json_pretty, write_string};

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Run the multiple-choice harness over a suite.
    Mcq(McqArgs),
    /// Score (question, response) pairs with the judge model.
    Judge(JudgeArgs),
    /// Aggregate human inaccuracy labels.
    Human(HumanArgs),
    /// Combine an objective report and a subjective aggregate.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct McqArgs {
    /// Suite file (line-delimited items).
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Override the config's run count.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Assert this per-discipline distribution (counts in the order
    /// climate,ecology,environment,health,geography).
    #[arg(long, value_delimiter = ',')]
    pub declared: Vec<usize>,
    /// Model name used in the rendered table.
    #[arg(long, default_value = "model")]
    pub model_name: String,
    /// Re-ask once when a reply is unparseable (it still scores as
    /// incorrect if the second reply cannot be parsed either).
    #[arg(long)]
    pub retry_unparsed: bool,
    /// Report output. Default: <out_dir>/mcq-report.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Line-delimited {id?, question, response} pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Scores output. Default: <out_dir>/judge-scores.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HumanArgs {
    /// Line-delimited {item_id, level} labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Counts output. Default: <out_dir>/human-counts.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Objective report JSON (from `eval mcq`).
    #[arg(long)]
    pub objective: PathBuf,
    /// Subjective aggregate JSON (from `eval judge`).
    #[arg(long)]
    pub subjective: PathBuf,
    /// Combined output. Default: <out_dir>/combined.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct JudgePairLine {
    #[serde(default)]
    id: Option<String>,
    question: String,
    response: String,
}

pub fn run(cmd: EvalCmd, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        EvalCmd::Mcq(args) => mcq(args, ctx),
        EvalCmd::Judge(args) => judge(args, ctx),
        EvalCmd::Human(args) => human(args, ctx),
        EvalCmd::Report(args) => report(args, ctx),
    }
}

fn mcq(args: McqArgs, ctx: &Context) -> anyhow::Result<()> {
    let suite_path = resolve_input(&args.suite, &ctx.cfg.paths.mcq_suite, "suite")?;
    let suite = read_suite(&read_to_string(&suite_path)?)?;
    let declared: Option<BTreeMap<Discipline, usize>> = if args.declared.is_empty() {
        None
    } else {
        anyhow::ensure!(
            args.declared.len() == Discipline::ALL.len(),
            "--declared needs {} counts",
            Discipline::ALL.len()
        );
        Some(
            Discipline::ALL
                .iter()
                .copied()
                .zip(args.declared.iter().copied())
                .collect(),
        )
    };
    evalkit::validate_suite(&suite, declared.as_ref())?;
    let gateway = ctx.gateway()?;
    let runs = args.runs.unwrap_or(ctx.cfg.eval.runs);
    let mut results = Vec::with_capacity(runs);
    for _ in 0..runs {
        results.push(evalkit::run_mcq_suite_with_retry(
            &suite,
            &gateway,
            DEFAULT_MCQ_TEMPLATE,
            args.retry_unparsed,
        ));
    }
    let report = score_objective(&results, &suite)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("mcq-report.json"),
    };
    write_json_pretty(&out, &report)?;
    let table = render_objective_table(&args.model_name, &report);
    let table_path = out.with_extension("txt");
    write_string(&table_path, &table)?;
    let manifest = build_manifest(
        "eval mcq",
        ctx.seed,
        &ctx.cfg,
        &[&suite_path],
        &[&out, &table_path],
    )?;
    write_manifest(&out, &manifest)?;
    print!("{table}");
    println!("report -> {}", out.display());
    Ok(())
}

fn judge(args: JudgeArgs, ctx: &Context) -> anyhow::Result<()> {
    let raw = read_to_string(&args.pairs)?;
    let gateway = ctx.gateway()?;
    let mut scores: Vec<JudgeScore> = Vec::new();
    let mut lines_out = String::new();
    let mut skipped: Vec<serde_json::Value> = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: JudgePairLine = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", args.pairs.display(), lineno + 1))?;
        let id = pair.id.unwrap_or_else(|| format!("pair-{lineno}"));
        match evalkit::judge_response(
            &pair.question,
            &pair.response,
            &gateway,
            DEFAULT_JUDGE_TEMPLATE,
        ) {
            Ok(score) => {
                lines_out.push_str(&serde_json::to_string(&json!({"id": id, "score": score}))?);
                lines_out.push('\n');
                scores.push(score);
            }
            Err(e) => {
                // Skipped and reported, never clamped.
                skipped.push(json!({"id": id, "error": e.to_string()}));
            }
        }
    }
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("judge-scores.jsonl"),
    };
    write_string(&out, &lines_out)?;
    let aggregate = aggregate_subjective(&scores);
    let agg_path = out.with_extension("aggregate.json");
    write_json_pretty(
        &agg_path,
        &json!({"aggregate": aggregate, "skipped": skipped}),
    )?;
    let manifest = build_manifest(
        "eval judge",
        ctx.seed,
        &ctx.cfg,
        &[&args.pairs],
        &[&out, &agg_path],
    )?;
    write_manifest(&out, &manifest)?;
    print!("{}", render_subjective_table("model", &aggregate));
    println!(
        "scored {} pair(s), skipped {} -> {}",
        aggregate.scored_items,
        skipped.len(),
        out.display()
    );
    Ok(())
}

fn human(args: HumanArgs, ctx: &Context) -> anyhow::Result<()> {
    let raw = read_to_string(&args.labels)?;
    let mut labels: Vec<HumanLabel> = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        labels.push(
            serde_json::from_str(line)
                .with_context(|| format!("{} line {}", args.labels.display(), lineno + 1))?,
        );
    }
    let counts = aggregate_human(&labels)?;
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("human-counts.json"),
    };
    write_json_pretty(&out, &json!({"counts": counts, "total": labels.len()}))?;
    let manifest = build_manifest("eval human", ctx.seed, &ctx.cfg, &[&args.labels], &[&out])?;
    write_manifest(&out, &manifest)?;
    println!("aggregated {} label(s) -> {}", labels.len(), out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SubjectiveAggregateFile {
    aggregate: CriterionSums,
}

fn report(args: ReportArgs, ctx: &Context) -> anyhow::Result<()> {
    let objective: ObjectiveReport = serde_json::from_str(&read_to_string(&args.objective)?)
        .with_context(|| format!("parsing {}", args.objective.display()))?;
    let subjective: SubjectiveAggregateFile =
        serde_json::from_str(&read_to_string(&args.subjective)?)
            .with_context(|| format!("parsing {}", args.subjective.display()))?;
    let combined = combined_average(
        objective.weighted_average.mean,
        subjective.aggregate.average,
    );
    let out = match args.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("combined.json"),
    };
    write_json_pretty(
        &out,
        &json!({
            "objective_average": objective.weighted_average.mean,
            "subjective_average": subjective.aggregate.average,
            "combined_average": combined,
        }),
    )?;
    let manifest = build_manifest(
        "eval report",
        ctx.seed,
        &ctx.cfg,
        &[&args.objective, &args.subjective],
        &[&out],
    )?;
    write_manifest(&out, &manifest)?;
    println!(
        "objective {:.1}  subjective {:.1}  combined {:.1} -> {}",
        objective.weighted_average.mean,
        subjective.aggregate.average,
        combined,
        out.display()
    );
    Ok(())
}
