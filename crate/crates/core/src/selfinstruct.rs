//! Instruction bootstrapping from a seed task pool.
//!
//! Each round samples a few-shot context from the pool, asks the model for
//! new instruction/answer candidates, and admits a candidate only when it is
//! (a) lexically novel — its 4-gram overlap ratio against every pool
//! instruction stays at or below the threshold — and (b) approved by a
//! validator model. Accepted tasks are appended to the pool, which only ever
//! grows.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::Digest;
use thiserror::Error;

use crate::dataset::{shingle, InstructionRecord, Origin};
use crate::gateway::{ChatRequest, Gateway, TEMPERATURE_CREATIVE, TEMPERATURE_GROUNDED};
use crate::text::{normalize_for_ngrams, TokenRule};

pub const DEFAULT_GENERATION_TEMPLATE: &str = "Here are example tasks from our pool:\n\n\
{examples}\n\nWrite {count} new, different tasks about climate science in the same format. \
For each task output exactly two lines:\nInstruction: <the task>\nAnswer: <a complete answer>\n\
Separate tasks with a blank line.";

pub const DEFAULT_VALIDATOR_TEMPLATE: &str = "You review candidate instructions for a climate \
science assistant. Reply with the single word yes if the instruction below is well-formed and \
on-topic, otherwise reply no.\n\nInstruction: {instruction}";

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You are an assistant that curates instruction data for climate science.";

#[derive(Debug, Error)]
pub enum SelfInstructError {
    #[error("pool has {pool} task(s), need at least {needed}")]
    PoolTooSmall { pool: usize, needed: usize },
    #[error("duplicate task_id {0}")]
    DuplicateTaskId(String),
    #[error("seed file line {line}: {reason}")]
    MalformedSeed { line: usize, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedTask {
    pub task_id: String,
    pub instruction: String,
    #[serde(default)]
    pub answer: Option<String>,
    /// 0 for human seeds, otherwise the round that accepted the task.
    #[serde(default)]
    pub generation: u32,
}

/// Append-only ordered task pool. Tasks can be added, never mutated or
/// removed; ids stay unique.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskPool {
    tasks: Vec<SeedTask>,
    pub rng_seed: u64,
}

impl TaskPool {
    pub fn new(rng_seed: u64) -> Self {
        TaskPool {
            tasks: Vec::new(),
            rng_seed,
        }
    }

    pub fn from_tasks(tasks: Vec<SeedTask>, rng_seed: u64) -> Result<Self, SelfInstructError> {
        let mut pool = TaskPool::new(rng_seed);
        for t in tasks {
            pool.append(t)?;
        }
        Ok(pool)
    }

    pub fn append(&mut self, task: SeedTask) -> Result<(), SelfInstructError> {
        if self.tasks.iter().any(|t| t.task_id == task.task_id) {
            return Err(SelfInstructError::DuplicateTaskId(task.task_id));
        }
        self.tasks.push(task);
        Ok(())
    }

    pub fn tasks(&self) -> &[SeedTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfInstructConfig {
    pub fewshot_k: usize,
    pub rounds: usize,
    pub candidates_per_round: usize,
    pub similarity_ngram: usize,
    /// Candidates whose n-gram overlap ratio against any pool instruction
    /// exceeds this are rejected without consulting the validator.
    pub similarity_max_overlap: f64,
    pub generation_prompt: String,
    pub validator_prompt: String,
    pub system_prompt: String,
}

impl Default for SelfInstructConfig {
    fn default() -> Self {
        SelfInstructConfig {
            fewshot_k: 3,
            rounds: 1,
            candidates_per_round: 4,
            similarity_ngram: 4,
            similarity_max_overlap: 0.7,
            generation_prompt: DEFAULT_GENERATION_TEMPLATE.into(),
            validator_prompt: DEFAULT_VALIDATOR_TEMPLATE.into(),
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
        }
    }
}

/// Draw `k` distinct tasks uniformly without replacement. Reproducible:
/// the caller owns the rng, seeded from the pool seed.
pub fn sample_fewshot<'a, R: rand::Rng>(
    pool: &'a TaskPool,
    k: usize,
    rng: &mut R,
) -> Result<Vec<&'a SeedTask>, SelfInstructError> {
    if pool.len() < k {
        return Err(SelfInstructError::PoolTooSmall {
            pool: pool.len(),
            needed: k,
        });
    }
    let picks = rand::seq::index::sample(rng, pool.len(), k);
    Ok(picks.iter().map(|i| &pool.tasks[i]).collect())
}

/// Deterministic rng for a pool, shared by the runner and any replay driver.
pub fn pool_rng(pool: &TaskPool) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(pool.rng_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub instruction: String,
    pub answer: Option<String>,
}

/// Candidate-generation request for a sampled few-shot context.
pub fn build_generation_request(fewshot: &[&SeedTask], cfg: &SelfInstructConfig) -> ChatRequest {
    let examples = fewshot
        .iter()
        .map(|t| match &t.answer {
            Some(a) => format!("Instruction: {}\nAnswer: {}", t.instruction, a),
            None => format!("Instruction: {}", t.instruction),
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = cfg
        .generation_prompt
        .replace("{examples}", &examples)
        .replace("{count}", &cfg.candidates_per_round.to_string());
    ChatRequest::single_turn(&cfg.system_prompt, prompt, TEMPERATURE_CREATIVE, 1024)
}

/// Validator request for one candidate.
pub fn build_validator_request(candidate: &Candidate, cfg: &SelfInstructConfig) -> ChatRequest {
    let prompt = cfg
        .validator_prompt
        .replace("{instruction}", &candidate.instruction);
    ChatRequest::single_turn(&cfg.system_prompt, prompt, TEMPERATURE_GROUNDED, 16)
}

/// Parse instruction/answer blocks out of a generation reply. Blocks with a
/// blank instruction are dropped; a block without an answer line is kept
/// with `answer: None` (flagged for later regeneration). An unparseable
/// reply yields an empty list.
pub fn parse_candidates(reply: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut current: Option<Candidate> = None;
    for line in reply.lines() {
        let trimmed = line.trim();
        if let Some(rest) = strip_label(trimmed, "instruction") {
            if let Some(c) = current.take() {
                if !c.instruction.is_empty() {
                    out.push(c);
                }
            }
            current = Some(Candidate {
                instruction: rest.to_string(),
                answer: None,
            });
        } else if let Some(rest) = strip_label(trimmed, "answer") {
            if let Some(c) = current.as_mut() {
                if !rest.is_empty() {
                    c.answer = Some(rest.to_string());
                }
            }
        } else if !trimmed.is_empty() {
            // Continuation of the previous field.
            if let Some(c) = current.as_mut() {
                match c.answer.as_mut() {
                    Some(a) => {
                        a.push(' ');
                        a.push_str(trimmed);
                    }
                    None => {
                        c.instruction.push(' ');
                        c.instruction.push_str(trimmed);
                    }
                }
            }
        }
    }
    if let Some(c) = current.take() {
        if !c.instruction.is_empty() {
            out.push(c);
        }
    }
    if out.is_empty() {
        log::debug!("generation reply had no parseable instruction blocks");
    }
    out
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let lower = line.to_lowercase();
    let with_colon = format!("{label}:");
    if lower.starts_with(&with_colon) {
        Some(line[with_colon.len()..].trim())
    } else {
        None
    }
}

/// Overlap ratio of `candidate` against `reference`: shared n-grams divided
/// by the candidate's n-gram count. Identical normalized texts score 1.0
/// even when shorter than `n` tokens.
pub fn overlap_ratio(candidate: &str, reference: &str, n: usize) -> f64 {
    let cand_norm = normalize_for_ngrams(candidate);
    let ref_norm = normalize_for_ngrams(reference);
    if cand_norm == ref_norm && !cand_norm.is_empty() {
        return 1.0;
    }
    let cand = shingle(candidate, n, TokenRule::Whitespace);
    if cand.is_empty() {
        return 0.0;
    }
    let reference = shingle(reference, n, TokenRule::Whitespace);
    let shared = cand.iter().filter(|g| reference.contains(*g)).count();
    shared as f64 / cand.len() as f64
}

/// Highest overlap ratio of a candidate against the pool.
pub fn max_pool_overlap(candidate: &str, pool: &TaskPool, n: usize) -> f64 {
    pool.tasks
        .iter()
        .map(|t| overlap_ratio(candidate, &t.instruction, n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Accept,
    RejectSimilar { overlap: f64 },
    RejectJudged { reason: String },
}

/// Validate one candidate: similarity filter first, then the validator
/// model. A gateway failure during validation rejects the candidate rather
/// than letting unreviewed content into the pool.
pub fn validate_candidate(
    candidate: &Candidate,
    pool: &TaskPool,
    cfg: &SelfInstructConfig,
    gateway: &Gateway,
) -> Verdict {
    let overlap = max_pool_overlap(&candidate.instruction, pool, cfg.similarity_ngram);
    if overlap > cfg.similarity_max_overlap {
        return Verdict::RejectSimilar { overlap };
    }
    match gateway.complete(&build_validator_request(candidate, cfg)) {
        Ok(resp) => {
            let norm = resp.text.trim().to_lowercase();
            if norm == "yes" || norm.starts_with("yes") {
                Verdict::Accept
            } else {
                Verdict::RejectJudged {
                    reason: format!("validator said: {}", resp.text.trim()),
                }
            }
        }
        Err(e) => Verdict::RejectJudged {
            reason: format!("validator unavailable: {e}"),
        },
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected_similar: usize,
    pub rejected_judged: usize,
    pub missing_answer: usize,
    pub generation_failed: bool,
}

#[derive(Debug)]
pub struct SelfInstructOutcome {
    pub records: Vec<InstructionRecord>,
    pub pool: TaskPool,
    pub rounds: Vec<RoundReport>,
}

fn accepted_task_id(round: u32, instruction: &str) -> String {
    let digest = sha2::Sha256::digest(instruction.as_bytes());
    format!("gen{}-{}", round, hex::encode(&digest[..6]))
}

/// Run the bootstrap loop. Candidate generation is one model call per round
/// asking for `candidates_per_round` blocks; validation and pool appends are
/// serialized because each verdict depends on the pool state accumulated so
/// far. Round failures are reported and the loop continues.
pub fn run_selfinstruct(
    seed_pool: &TaskPool,
    cfg: &SelfInstructConfig,
    gateway: &Gateway,
) -> Result<SelfInstructOutcome, SelfInstructError> {
    if seed_pool.len() < cfg.fewshot_k {
        return Err(SelfInstructError::PoolTooSmall {
            pool: seed_pool.len(),
            needed: cfg.fewshot_k,
        });
    }
    let mut pool = seed_pool.clone();
    let mut rng = pool_rng(seed_pool);
    let mut records = Vec::new();
    let mut rounds = Vec::new();

    for round in 1..=cfg.rounds as u32 {
        let mut report = RoundReport {
            round,
            ..RoundReport::default()
        };
        let fewshot = sample_fewshot(&pool, cfg.fewshot_k, &mut rng)?;
        let request = build_generation_request(&fewshot, cfg);
        let candidates = match gateway.complete(&request) {
            Ok(resp) => {
                let mut all = parse_candidates(&resp.text);
                all.truncate(cfg.candidates_per_round);
                all
            }
            Err(e) => {
                log::warn!("round {round}: candidate generation failed: {e}");
                report.generation_failed = true;
                rounds.push(report);
                continue;
            }
        };
        report.candidates = candidates.len();
        for candidate in candidates {
            match validate_candidate(&candidate, &pool, cfg, gateway) {
                Verdict::Accept => {
                    let task = SeedTask {
                        task_id: accepted_task_id(round, &candidate.instruction),
                        instruction: candidate.instruction.clone(),
                        answer: candidate.answer.clone(),
                        generation: round,
                    };
                    if let Err(e) = pool.append(task) {
                        log::warn!("round {round}: {e}; skipping candidate");
                        continue;
                    }
                    report.accepted += 1;
                    match &candidate.answer {
                        Some(answer) => {
                            let mut meta = BTreeMap::new();
                            meta.insert("generation".to_string(), round.to_string());
                            match InstructionRecord::new(
                                candidate.instruction.clone(),
                                "",
                                answer.clone(),
                                Origin::SelfInstruct,
                                meta,
                            ) {
                                Ok(r) => records.push(r),
                                Err(e) => log::warn!("round {round}: degenerate record: {e}"),
                            }
                        }
                        None => report.missing_answer += 1,
                    }
                }
                Verdict::RejectSimilar { overlap } => {
                    log::debug!("round {round}: rejected similar (overlap {overlap:.2})");
                    report.rejected_similar += 1;
                }
                Verdict::RejectJudged { reason } => {
                    log::debug!("round {round}: rejected by validator: {reason}");
                    report.rejected_judged += 1;
                }
            }
        }
        rounds.push(report);
    }
    Ok(SelfInstructOutcome {
        records,
        pool,
        rounds,
    })
}

/// Parse a line-delimited seed file into a pool. Records carry
/// `{task_id, instruction, answer?}`; `generation` defaults to 0.
pub fn read_seed_pool(raw: &str, rng_seed: u64) -> Result<TaskPool, SelfInstructError> {
    let mut pool = TaskPool::new(rng_seed);
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: SeedTask =
            serde_json::from_str(line).map_err(|e| SelfInstructError::MalformedSeed {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        if task.instruction.trim().is_empty() {
            return Err(SelfInstructError::MalformedSeed {
                line: lineno + 1,
                reason: "instruction must be non-empty".into(),
            });
        }
        pool.append(task)?;
    }
    Ok(pool)
}

/// Serialize a pool in the seed-file format (with `generation` retained).
pub fn write_pool(pool: &TaskPool) -> String {
    let mut out = String::new();
    for t in pool.tasks() {
        out.push_str(&serde_json::to_string(t).expect("task serializes"));
        out.push('\n');
    }
    out
}
