//! Evaluation harnesses: objective multiple-choice accuracy, model-judged
//! subjective scoring, human-label aggregation, and the combined averaging
//! used in the reports.
//!
//! The objective harness presents lettered options, extracts the chosen
//! letter (or falls back to exact option-text matching), and scores
//! unparseable replies as incorrect. Accuracies are aggregated per
//! discipline with mean and sample standard deviation over repeated runs,
//! and the suite-level average weights each discipline by its question
//! count.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, TEMPERATURE_GROUNDED};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("suite is empty")]
    EmptySuite,
    #[error("invalid item {item_id}: {reason}")]
    InvalidItem { item_id: String, reason: String },
    #[error("declared distribution mismatch for {discipline}: declared {declared}, found {found}")]
    DistributionMismatch {
        discipline: String,
        declared: usize,
        found: usize,
    },
    #[error("run {run} is incomplete: expected {expected} items, got {got}")]
    IncompleteRun {
        run: usize,
        expected: usize,
        got: usize,
    },
    #[error("judge reply unparseable: {0}")]
    JudgeParseError(String),
    #[error("duplicate label for item {0}")]
    DuplicateLabel(String),
    #[error("suite file line {line}: {reason}")]
    MalformedSuite { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    Climate,
    Ecology,
    Environment,
    Health,
    Geography,
}

impl Discipline {
    pub const ALL: [Discipline; 5] = [
        Discipline::Climate,
        Discipline::Ecology,
        Discipline::Environment,
        Discipline::Health,
        Discipline::Geography,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Discipline::Climate => "climate",
            Discipline::Ecology => "ecology",
            Discipline::Environment => "environment",
            Discipline::Health => "health",
            Discipline::Geography => "geography",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McqItem {
    pub item_id: String,
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub discipline: Discipline,
}

impl McqItem {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.options.len() < 2 {
            return Err(EvalError::InvalidItem {
                item_id: self.item_id.clone(),
                reason: "needs at least two options".into(),
            });
        }
        if self.correct_index >= self.options.len() {
            return Err(EvalError::InvalidItem {
                item_id: self.item_id.clone(),
                reason: format!(
                    "correct_index {} out of range for {} options",
                    self.correct_index,
                    self.options.len()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub per_discipline: BTreeMap<Discipline, usize>,
    pub total: usize,
}

/// Validate a suite and count items per discipline; when a declared
/// distribution is supplied, it must match exactly.
pub fn validate_suite(
    items: &[McqItem],
    declared: Option<&BTreeMap<Discipline, usize>>,
) -> Result<SuiteSummary, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let mut per_discipline: BTreeMap<Discipline, usize> = BTreeMap::new();
    for item in items {
        item.validate()?;
        *per_discipline.entry(item.discipline).or_default() += 1;
    }
    if let Some(declared) = declared {
        for d in Discipline::ALL {
            let found = per_discipline.get(&d).copied().unwrap_or(0);
            let want = declared.get(&d).copied().unwrap_or(0);
            if found != want {
                return Err(EvalError::DistributionMismatch {
                    discipline: d.name().to_string(),
                    declared: want,
                    found,
                });
            }
        }
    }
    Ok(SuiteSummary {
        total: items.len(),
        per_discipline,
    })
}

pub const DEFAULT_MCQ_TEMPLATE: &str = "Answer the multiple-choice question by replying with \
the letter of the single best option.\n\nQuestion: {question}\n\nOptions:\n{options}";

pub const DEFAULT_MCQ_SYSTEM_PROMPT: &str =
    "You answer multiple-choice questions with a single option letter.";

fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Prompt for one item: lettered options A, B, C, ...
pub fn build_mcq_request(item: &McqItem, template: &str) -> ChatRequest {
    let options = item
        .options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {}", option_letter(i), o))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = template
        .replace("{question}", &item.question)
        .replace("{options}", &options);
    ChatRequest::single_turn(DEFAULT_MCQ_SYSTEM_PROMPT, prompt, TEMPERATURE_GROUNDED, 64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChoiceResult {
    Parsed { index: usize },
    Unparsed { reason: String },
}

/// Extract the chosen option from a reply: a single distinct standalone
/// option letter wins; otherwise a single option whose full text occurs in
/// the reply; anything ambiguous or absent is unparsed (scored incorrect).
pub fn parse_choice(reply: &str, item: &McqItem) -> ChoiceResult {
    let letter_re = Regex::new(r"\b([A-H])\b").expect("static regex");
    let mut letters: HashSet<usize> = HashSet::new();
    for cap in letter_re.captures_iter(reply) {
        let idx = (cap[1].as_bytes()[0] - b'A') as usize;
        if idx < item.options.len() {
            letters.insert(idx);
        }
    }
    match letters.len() {
        1 => {
            return ChoiceResult::Parsed {
                index: *letters.iter().next().unwrap(),
            }
        }
        n if n > 1 => {
            return ChoiceResult::Unparsed {
                reason: format!("ambiguous: {n} option letters named"),
            }
        }
        _ => {}
    }
    let reply_lower = reply.to_lowercase();
    let mut text_matches: Vec<usize> = Vec::new();
    for (i, option) in item.options.iter().enumerate() {
        let needle = option.trim().to_lowercase();
        if !needle.is_empty() && reply_lower.contains(&needle) {
            text_matches.push(i);
        }
    }
    match text_matches.len() {
        1 => ChoiceResult::Parsed {
            index: text_matches[0],
        },
        0 => ChoiceResult::Unparsed {
            reason: "no option letter or option text found".into(),
        },
        n => ChoiceResult::Unparsed {
            reason: format!("ambiguous: {n} option texts found"),
        },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McqAnswer {
    pub item_id: String,
    pub choice: ChoiceResult,
}

/// Ask the model one item and parse the reply. A gateway error becomes an
/// unparsed result (scored incorrect), not a run failure.
pub fn ask_and_parse(item: &McqItem, gateway: &Gateway, template: &str) -> McqAnswer {
    let choice = match gateway.complete(&build_mcq_request(item, template)) {
        Ok(resp) => parse_choice(&resp.text, item),
        Err(e) => ChoiceResult::Unparsed {
            reason: format!("gateway error: {e}"),
        },
    };
    McqAnswer {
        item_id: item.item_id.clone(),
        choice,
    }
}

/// Like [`ask_and_parse`], but an unparseable reply is re-asked once when
/// `retry_unparsed` is set. Unparsed answers still score as incorrect; the
/// retry only gives the model a second chance to produce a readable reply.
pub fn ask_and_parse_with_retry(
    item: &McqItem,
    gateway: &Gateway,
    template: &str,
    retry_unparsed: bool,
) -> McqAnswer {
    let first = ask_and_parse(item, gateway, template);
    if retry_unparsed && matches!(first.choice, ChoiceResult::Unparsed { .. }) {
        return ask_and_parse(item, gateway, template);
    }
    first
}

/// One full pass over the suite, items evaluated with bounded parallelism
/// and results in suite order.
pub fn run_mcq_suite(items: &[McqItem], gateway: &Gateway, template: &str) -> Vec<McqAnswer> {
    run_mcq_suite_with_retry(items, gateway, template, false)
}

pub fn run_mcq_suite_with_retry(
    items: &[McqItem],
    gateway: &Gateway,
    template: &str,
    retry_unparsed: bool,
) -> Vec<McqAnswer> {
    items
        .par_iter()
        .map(|item| ask_and_parse_with_retry(item, gateway, template, retry_unparsed))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisciplineStats {
    pub mean_accuracy: f64,
    pub std: f64,
    pub n_questions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub per_discipline: BTreeMap<Discipline, DisciplineStats>,
    pub weighted_average: Stats,
    pub runs: usize,
    pub single_run: bool,
}

/// Count-weighted suite average: Σ(n_d · acc_d) / Σ n_d.
pub fn weighted_average(per_discipline: &[(f64, usize)]) -> f64 {
    let total: usize = per_discipline.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return 0.0;
    }
    per_discipline
        .iter()
        .map(|(acc, n)| acc * *n as f64)
        .sum::<f64>()
        / total as f64
}

fn mean_and_sample_std(values: &[f64]) -> Stats {
    let n = values.len();
    if n == 0 {
        return Stats::default();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Stats { mean, std: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Stats {
        mean,
        std: var.sqrt(),
    }
}

/// Score R runs over the suite: per-discipline accuracy per run, then mean
/// and sample standard deviation across runs. The weighted average is
/// computed per run and summarized the same way. A single run reports
/// std 0 and is flagged.
pub fn score_objective(
    runs: &[Vec<McqAnswer>],
    suite: &[McqItem],
) -> Result<ObjectiveReport, EvalError> {
    let summary = validate_suite(suite, None)?;
    if runs.is_empty() {
        return Err(EvalError::IncompleteRun {
            run: 0,
            expected: suite.len(),
            got: 0,
        });
    }
    let correct_by_id: BTreeMap<&str, (usize, Discipline)> = suite
        .iter()
        .map(|i| (i.item_id.as_str(), (i.correct_index, i.discipline)))
        .collect();

    let mut per_run_disc: Vec<BTreeMap<Discipline, f64>> = Vec::with_capacity(runs.len());
    let mut per_run_weighted: Vec<f64> = Vec::with_capacity(runs.len());

    for (run_no, run) in runs.iter().enumerate() {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut correct: BTreeMap<Discipline, usize> = BTreeMap::new();
        for answer in run {
            let Some((correct_index, discipline)) = correct_by_id.get(answer.item_id.as_str())
            else {
                return Err(EvalError::IncompleteRun {
                    run: run_no + 1,
                    expected: suite.len(),
                    got: run.len(),
                });
            };
            if !seen.insert(answer.item_id.as_str()) {
                return Err(EvalError::IncompleteRun {
                    run: run_no + 1,
                    expected: suite.len(),
                    got: run.len(),
                });
            }
            if let ChoiceResult::Parsed { index } = answer.choice {
                if index == *correct_index {
                    *correct.entry(*discipline).or_default() += 1;
                }
            }
        }
        if seen.len() != suite.len() {
            return Err(EvalError::IncompleteRun {
                run: run_no + 1,
                expected: suite.len(),
                got: seen.len(),
            });
        }
        let mut disc_acc = BTreeMap::new();
        let mut weighted_parts = Vec::new();
        for (d, n) in &summary.per_discipline {
            let c = correct.get(d).copied().unwrap_or(0);
            let acc = 100.0 * c as f64 / *n as f64;
            disc_acc.insert(*d, acc);
            weighted_parts.push((acc, *n));
        }
        per_run_weighted.push(weighted_average(&weighted_parts));
        per_run_disc.push(disc_acc);
    }

    let mut per_discipline = BTreeMap::new();
    for (d, n) in &summary.per_discipline {
        let series: Vec<f64> = per_run_disc.iter().map(|m| m[d]).collect();
        let stats = mean_and_sample_std(&series);
        per_discipline.insert(
            *d,
            DisciplineStats {
                mean_accuracy: stats.mean,
                std: stats.std,
                n_questions: *n,
            },
        );
    }
    Ok(ObjectiveReport {
        per_discipline,
        weighted_average: mean_and_sample_std(&per_run_weighted),
        runs: runs.len(),
        single_run: runs.len() == 1,
    })
}

/// Six-criterion score, each in {1, 2, 3}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub helpfulness: u8,
    pub relevance: u8,
    pub accuracy: u8,
    pub depth: u8,
    pub creativity: u8,
    pub detail: u8,
}

pub const CRITERIA: [&str; 6] = [
    "helpfulness",
    "relevance",
    "accuracy",
    "depth",
    "creativity",
    "detail",
];

impl JudgeScore {
    pub fn from_values(values: [u8; 6]) -> Result<Self, EvalError> {
        for (i, v) in values.iter().enumerate() {
            if !(1..=3).contains(v) {
                return Err(EvalError::JudgeParseError(format!(
                    "criterion {} value {v} outside 1..=3",
                    CRITERIA[i]
                )));
            }
        }
        Ok(JudgeScore {
            helpfulness: values[0],
            relevance: values[1],
            accuracy: values[2],
            depth: values[3],
            creativity: values[4],
            detail: values[5],
        })
    }

    pub fn values(&self) -> [u8; 6] {
        [
            self.helpfulness,
            self.relevance,
            self.accuracy,
            self.depth,
            self.creativity,
            self.detail,
        ]
    }
}

pub const DEFAULT_JUDGE_TEMPLATE: &str = "Rate the response to the question on six criteria — \
helpfulness, relevance, accuracy, depth, creativity, detail — each as an integer from 1 to 3. \
Reply with exactly six comma-separated integers in that order and nothing else.\n\n\
Question: {question}\n\nResponse: {response}";

pub const DEFAULT_JUDGE_SYSTEM_PROMPT: &str =
    "You are a strict grader. You reply only in the requested format.";

pub fn build_judge_request(question: &str, response: &str, template: &str) -> ChatRequest {
    let prompt = template
        .replace("{question}", question)
        .replace("{response}", response);
    ChatRequest::single_turn(
        DEFAULT_JUDGE_SYSTEM_PROMPT,
        prompt,
        TEMPERATURE_GROUNDED,
        64,
    )
}

/// Parse a judge reply: exactly six comma-separated integers (each field may
/// carry a `name:` label). Out-of-range or missing values are a parse error;
/// values are never clamped.
pub fn parse_judge_reply(reply: &str) -> Result<JudgeScore, EvalError> {
    let fields: Vec<&str> = reply.trim().split(',').collect();
    if fields.len() != 6 {
        return Err(EvalError::JudgeParseError(format!(
            "expected 6 comma-separated values, got {}",
            fields.len()
        )));
    }
    let mut values = [0u8; 6];
    for (i, field) in fields.iter().enumerate() {
        let tail = field.rsplit(':').next().unwrap_or("").trim();
        values[i] = tail.parse::<u8>().map_err(|_| {
            EvalError::JudgeParseError(format!("field {i} is not an integer: '{field}'"))
        })?;
    }
    JudgeScore::from_values(values)
}

/// Judge one response. Parse and gateway failures surface as errors so the
/// caller can skip and report the item.
pub fn judge_response(
    question: &str,
    response: &str,
    gateway: &Gateway,
    template: &str,
) -> Result<JudgeScore, EvalError> {
    if response.trim().is_empty() {
        return Err(EvalError::JudgeParseError("response is empty".into()));
    }
    let reply = gateway
        .complete(&build_judge_request(question, response, template))
        .map_err(|e| EvalError::JudgeParseError(format!("gateway error: {e}")))?;
    parse_judge_reply(&reply.text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionSums {
    /// Sum per criterion, in [`CRITERIA`] order.
    pub sums: [u32; 6],
    pub average: f64,
    pub scored_items: usize,
}

/// Per-criterion sums over all scores plus the mean of the six sums.
pub fn aggregate_subjective(scores: &[JudgeScore]) -> CriterionSums {
    let mut sums = [0u32; 6];
    for s in scores {
        for (i, v) in s.values().iter().enumerate() {
            sums[i] += *v as u32;
        }
    }
    CriterionSums {
        sums,
        average: mean_of_sums(&sums.map(|s| s as f64)),
        scored_items: scores.len(),
    }
}

/// Mean of the six criterion sums.
pub fn mean_of_sums(sums: &[f64; 6]) -> f64 {
    sums.iter().sum::<f64>() / 6.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InaccuracyLevel {
    SignificantInaccuracy,
    ModerateInaccuracy,
    SlightInaccuracy,
    Accurate,
}

impl InaccuracyLevel {
    pub const ALL: [InaccuracyLevel; 4] = [
        InaccuracyLevel::SignificantInaccuracy,
        InaccuracyLevel::ModerateInaccuracy,
        InaccuracyLevel::SlightInaccuracy,
        InaccuracyLevel::Accurate,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumanLabel {
    pub item_id: String,
    pub level: InaccuracyLevel,
}

/// Count labels per level. Two labels for one item are an error; counts
/// always sum to the number of labels.
pub fn aggregate_human(
    labels: &[HumanLabel],
) -> Result<BTreeMap<InaccuracyLevel, usize>, EvalError> {
    let mut seen = HashSet::new();
    let mut counts: BTreeMap<InaccuracyLevel, usize> =
        InaccuracyLevel::ALL.iter().map(|l| (*l, 0)).collect();
    for label in labels {
        if !seen.insert(label.item_id.as_str()) {
            return Err(EvalError::DuplicateLabel(label.item_id.clone()));
        }
        *counts.entry(label.level).or_default() += 1;
    }
    Ok(counts)
}

/// Arithmetic mean of the objective and subjective averages, reported to one
/// decimal.
pub fn combined_average(objective_avg: f64, subjective_avg: f64) -> f64 {
    let mean = (objective_avg + subjective_avg) / 2.0;
    (mean * 10.0).round() / 10.0
}

/// Round to one decimal, the precision used in rendered reports.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Aligned-column text table for an objective report: one column per
/// discipline plus the weighted average, `mean±std` cells.
pub fn render_objective_table(model: &str, report: &ObjectiveReport) -> String {
    let mut headers: Vec<String> = vec!["Model".into()];
    let mut cells: Vec<String> = vec![model.to_string()];
    for d in Discipline::ALL {
        if let Some(stats) = report.per_discipline.get(&d) {
            let mut h = d.name().to_string();
            if let Some(first) = h.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            headers.push(h);
            cells.push(format!(
                "{:.1}±{:.1}",
                round1(stats.mean_accuracy),
                round1(stats.std)
            ));
        }
    }
    headers.push("Average".into());
    cells.push(format!(
        "{:.1}±{:.1}",
        round1(report.weighted_average.mean),
        round1(report.weighted_average.std)
    ));
    render_rows(&headers, &[cells])
}

/// Aligned-column text table for subjective criterion sums.
pub fn render_subjective_table(model: &str, sums: &CriterionSums) -> String {
    let mut headers: Vec<String> = vec!["Model".into()];
    let mut cells: Vec<String> = vec![model.to_string()];
    for (i, name) in CRITERIA.iter().enumerate() {
        let mut h = name.to_string();
        if let Some(first) = h.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        headers.push(h);
        cells.push(format!("{:.1}", sums.sums[i] as f64));
    }
    headers.push("Average".into());
    cells.push(format!("{:.1}", round1(sums.average)));
    render_rows(&headers, &[cells])
}

fn render_rows(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let push_row = |cells: &[String], out: &mut String| {
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        out.push('\n');
    };
    push_row(&headers.to_vec(), &mut out);
    for row in rows {
        push_row(row, &mut out);
    }
    out
}

/// Parse a line-delimited MCQ suite file.
pub fn read_suite(raw: &str) -> Result<Vec<McqItem>, EvalError> {
    let mut items = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: McqItem = serde_json::from_str(line).map_err(|e| EvalError::MalformedSuite {
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        item.validate()?;
        items.push(item);
    }
    Ok(items)
}

/// Serialize a suite in the line-delimited format.
pub fn write_suite(items: &[McqItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    out
}
