//! Grounded question-answer generation from document chunks.
//!
//! For each chunk the model is asked for a numbered list of factual
//! questions; each surviving question is then answered with the chunk
//! supplied as grounding context. Degenerate generations are filtered by
//! length gates, and every emitted record carries the chunk id it was
//! grounded on.

use std::collections::BTreeMap;
use std::collections::HashSet;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::DocumentChunk;
use crate::dataset::{InstructionRecord, Origin};
use crate::gateway::{
    ChatRequest, Gateway, GatewayError, TEMPERATURE_CREATIVE, TEMPERATURE_GROUNDED,
};
use crate::text::{count_tokens, TokenRule};

pub const DEFAULT_QUESTION_TEMPLATE: &str = "Read the passage below and write {n} factual \
questions that it can answer. Number each question on its own line and end it with a \
question mark.\n\nPassage:\n{chunk}";

pub const DEFAULT_ANSWER_TEMPLATE: &str = "Answer the question using only the passage below. \
Be precise and complete.\n\nPassage:\n{chunk}\n\nQuestion: {question}";

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You are an assistant that writes faithful question-answer pairs about climate science.";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfQaConfig {
    pub questions_per_chunk: usize,
    /// Questions with fewer tokens than this are dropped.
    pub min_question_len: usize,
    /// Answers with fewer tokens than this are rejected.
    pub min_answer_len: usize,
    pub question_template: String,
    pub answer_template: String,
    pub system_prompt: String,
}

impl Default for SelfQaConfig {
    fn default() -> Self {
        SelfQaConfig {
            questions_per_chunk: 3,
            min_question_len: 8,
            min_answer_len: 10,
            question_template: DEFAULT_QUESTION_TEMPLATE.into(),
            answer_template: DEFAULT_ANSWER_TEMPLATE.into(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
        }
    }
}

/// Request asking for questions grounded in `chunk`.
pub fn build_question_request(chunk: &DocumentChunk, cfg: &SelfQaConfig) -> ChatRequest {
    let prompt = cfg
        .question_template
        .replace("{n}", &cfg.questions_per_chunk.to_string())
        .replace("{chunk}", &chunk.text);
    ChatRequest::single_turn(&cfg.system_prompt, prompt, TEMPERATURE_CREATIVE, 512)
}

/// Request asking for an answer to `question` grounded in `chunk`.
pub fn build_answer_request(
    question: &str,
    chunk: &DocumentChunk,
    cfg: &SelfQaConfig,
) -> ChatRequest {
    let prompt = cfg
        .answer_template
        .replace("{chunk}", &chunk.text)
        .replace("{question}", question);
    ChatRequest::single_turn(&cfg.system_prompt, prompt, TEMPERATURE_GROUNDED, 512)
}

/// Parse a numbered-list reply into question lines. Lines without a list
/// marker still count if they end in a question mark.
fn parse_question_lines(reply: &str) -> Vec<String> {
    let marker = Regex::new(r"^\s*(?:\d+[.):]|[-*])\s*(.+)$").expect("static regex");
    let mut out = Vec::new();
    for line in reply.lines() {
        let candidate = match marker.captures(line) {
            Some(c) => c[1].trim().to_string(),
            None => line.trim().to_string(),
        };
        if !candidate.is_empty() {
            out.push(candidate);
        }
    }
    out
}

/// Generate up to `questions_per_chunk` questions for a chunk. Questions
/// that are too short, lack a trailing question mark, or duplicate an
/// earlier question (case-folded) are dropped; zero survivors is not an
/// error.
pub fn generate_questions(
    chunk: &DocumentChunk,
    cfg: &SelfQaConfig,
    gateway: &Gateway,
) -> Result<Vec<String>, GatewayError> {
    let reply = gateway.complete(&build_question_request(chunk, cfg))?;
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for q in parse_question_lines(&reply.text) {
        if !q.ends_with('?') {
            continue;
        }
        if count_tokens(&q, TokenRule::Whitespace) < cfg.min_question_len {
            continue;
        }
        if !seen.insert(q.to_lowercase()) {
            continue;
        }
        kept.push(q);
        if kept.len() == cfg.questions_per_chunk {
            break;
        }
    }
    Ok(kept)
}

/// Outcome of grounded answer generation.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerOutcome {
    Accepted(String),
    /// Answer fell below the length gate; the pipeline skips the pair.
    Rejected {
        answer: String,
        reason: String,
    },
}

pub fn generate_grounded_answer(
    question: &str,
    chunk: &DocumentChunk,
    cfg: &SelfQaConfig,
    gateway: &Gateway,
) -> Result<AnswerOutcome, GatewayError> {
    let reply = gateway.complete(&build_answer_request(question, chunk, cfg))?;
    let answer = reply.text.trim().to_string();
    let tokens = count_tokens(&answer, TokenRule::Whitespace);
    if tokens < cfg.min_answer_len {
        return Ok(AnswerOutcome::Rejected {
            answer,
            reason: format!("answer has {tokens} tokens, need {}", cfg.min_answer_len),
        });
    }
    Ok(AnswerOutcome::Accepted(answer))
}

/// A per-chunk failure captured without aborting the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkFailure {
    pub chunk_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct SelfQaOutcome {
    pub records: Vec<InstructionRecord>,
    pub failures: Vec<ChunkFailure>,
    pub rejected_answers: usize,
}

/// Run the full pipeline over `chunks`. Chunks are processed with bounded
/// parallelism (the gateway's in-flight limit governs actual concurrency)
/// and output is assembled in (chunk ordinal, question index) order, so the
/// result does not depend on completion order. Per-chunk failures are
/// reported, not fatal.
pub fn run_selfqa(
    chunks: &[DocumentChunk],
    cfg: &SelfQaConfig,
    gateway: &Gateway,
) -> SelfQaOutcome {
    struct ChunkResult {
        records: Vec<InstructionRecord>,
        failure: Option<ChunkFailure>,
        rejected: usize,
    }

    let per_chunk: Vec<ChunkResult> = chunks
        .par_iter()
        .map(|chunk| {
            let questions = match generate_questions(chunk, cfg, gateway) {
                Ok(qs) => qs,
                Err(e) => {
                    return ChunkResult {
                        records: Vec::new(),
                        failure: Some(ChunkFailure {
                            chunk_id: chunk.chunk_id.clone(),
                            stage: "question_generation".into(),
                            error: e.to_string(),
                        }),
                        rejected: 0,
                    }
                }
            };
            let mut records = Vec::new();
            let mut failure = None;
            let mut rejected = 0usize;
            for question in questions {
                match generate_grounded_answer(&question, chunk, cfg, gateway) {
                    Ok(AnswerOutcome::Accepted(answer)) => {
                        let mut meta = BTreeMap::new();
                        meta.insert("source".to_string(), chunk.chunk_id.clone());
                        match InstructionRecord::new(question, "", answer, Origin::SelfQa, meta) {
                            Ok(r) => records.push(r),
                            Err(e) => {
                                log::warn!("dropping degenerate pair from {}: {e}", chunk.chunk_id)
                            }
                        }
                    }
                    Ok(AnswerOutcome::Rejected { reason, .. }) => {
                        log::debug!("answer rejected for {}: {reason}", chunk.chunk_id);
                        rejected += 1;
                    }
                    Err(e) => {
                        failure = Some(ChunkFailure {
                            chunk_id: chunk.chunk_id.clone(),
                            stage: "answer_generation".into(),
                            error: e.to_string(),
                        });
                        break;
                    }
                }
            }
            ChunkResult {
                records,
                failure,
                rejected,
            }
        })
        .collect();

    let mut outcome = SelfQaOutcome::default();
    for r in per_chunk {
        outcome.records.extend(r.records);
        if let Some(f) = r.failure {
            log::warn!(
                "self-qa failure on {} at {}: {}",
                f.chunk_id,
                f.stage,
                f.error
            );
            outcome.failures.push(f);
        }
        outcome.rejected_answers += r.rejected;
    }
    outcome
}
