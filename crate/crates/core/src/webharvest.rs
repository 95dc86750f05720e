//! Instruction records from community Q&A exports.
//!
//! Dumps are line-delimited records of questions with scored answers
//! (StackExchange-style API or dump exports; no live crawling). Per
//! question, the single best answer is taken — highest score, ties broken
//! by acceptance then lowest answer id — and emitted only when its score
//! clears the recommendation threshold (default 3).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{InstructionRecord, Origin};

/// Minimum recommendation score an answer needs to be kept.
pub const DEFAULT_MIN_SCORE: i64 = 3;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("cannot read {path}: {reason}")]
    FileUnreadable { path: PathBuf, reason: String },
    #[error("{path}: no line parsed as a Q&A record")]
    AllLinesMalformed { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScrapedAnswer {
    pub answer_id: String,
    pub body: String,
    pub score: i64,
    #[serde(default)]
    pub is_accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScrapedQA {
    pub question_id: String,
    pub site: String,
    pub title: String,
    pub question_body: String,
    #[serde(default)]
    pub answers: Vec<ScrapedAnswer>,
}

#[derive(Debug, Default)]
pub struct ParsedDump {
    pub records: Vec<ScrapedQA>,
    pub skipped_malformed: usize,
    pub skipped_duplicates: usize,
}

/// Parse one dump file. Malformed lines are counted and skipped; a later
/// record re-using a question_id is ignored with a warning. A file where
/// nothing parses is an error.
pub fn parse_qa_dump(path: &Path) -> Result<ParsedDump, HarvestError> {
    let raw = fs::read_to_string(path).map_err(|e| HarvestError::FileUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut out = ParsedDump::default();
    let mut seen_ids = HashSet::new();
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ScrapedQA>(line) {
            Ok(qa) => {
                if seen_ids.insert(qa.question_id.clone()) {
                    out.records.push(qa);
                } else {
                    log::warn!(
                        "{}: duplicate question_id {}, keeping first",
                        path.display(),
                        qa.question_id
                    );
                    out.skipped_duplicates += 1;
                }
            }
            Err(e) => {
                log::warn!("{}: skipping malformed line: {e}", path.display());
                out.skipped_malformed += 1;
            }
        }
    }
    if out.records.is_empty() {
        return Err(HarvestError::AllLinesMalformed {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

/// The single best answer of a question: highest score, ties broken by
/// acceptance, then by lowest answer_id.
fn best_answer(qa: &ScrapedQA) -> Option<&ScrapedAnswer> {
    qa.answers.iter().min_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(b.is_accepted.cmp(&a.is_accepted))
            .then(a.answer_id.cmp(&b.answer_id))
    })
}

/// Convert a question to a record, or nothing when its best answer scores
/// below `min_score`.
pub fn select_record(qa: &ScrapedQA, min_score: i64) -> Option<InstructionRecord> {
    let best = best_answer(qa)?;
    if best.score < min_score {
        return None;
    }
    let instruction = if qa.question_body.trim().is_empty() {
        qa.title.clone()
    } else {
        format!("{}\n\n{}", qa.title, qa.question_body)
    };
    let mut meta = BTreeMap::new();
    meta.insert("site".to_string(), qa.site.clone());
    meta.insert("question_id".to_string(), qa.question_id.clone());
    meta.insert("answer_id".to_string(), best.answer_id.clone());
    meta.insert("score".to_string(), best.score.to_string());
    InstructionRecord::new(instruction, "", best.body.clone(), Origin::WebScrape, meta)
        .map_err(|e| log::warn!("skipping degenerate Q&A {}: {e}", qa.question_id))
        .ok()
}

#[derive(Debug, Default)]
pub struct HarvestReport {
    pub records: Vec<InstructionRecord>,
    /// Emitted records per site, for balance inspection.
    pub site_counts: BTreeMap<String, usize>,
    pub questions_seen: usize,
    pub skipped_malformed: usize,
    pub skipped_duplicates: usize,
    pub below_threshold: usize,
    /// Files that failed to parse entirely; the rest of the run proceeds.
    pub failed_files: Vec<(PathBuf, String)>,
}

/// Harvest every dump file. Output ordering is deterministic — records are
/// sorted by (site, question_id) — and each question_id contributes at most
/// one record across all files.
pub fn harvest(dump_paths: &[PathBuf], min_score: i64) -> HarvestReport {
    let mut report = HarvestReport::default();
    let mut selected: Vec<(String, String, InstructionRecord)> = Vec::new();
    let mut seen_questions: HashSet<String> = HashSet::new();
    for path in dump_paths {
        match parse_qa_dump(path) {
            Ok(parsed) => {
                report.skipped_malformed += parsed.skipped_malformed;
                report.skipped_duplicates += parsed.skipped_duplicates;
                for qa in parsed.records {
                    if !seen_questions.insert(qa.question_id.clone()) {
                        report.skipped_duplicates += 1;
                        continue;
                    }
                    report.questions_seen += 1;
                    match select_record(&qa, min_score) {
                        Some(record) => {
                            selected.push((qa.site.clone(), qa.question_id.clone(), record))
                        }
                        None => report.below_threshold += 1,
                    }
                }
            }
            Err(e) => {
                log::warn!("harvest: {e}");
                report.failed_files.push((path.clone(), e.to_string()));
            }
        }
    }
    selected.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    for (site, _, record) in selected {
        *report.site_counts.entry(site).or_default() += 1;
        report.records.push(record);
    }
    report
}
