//! Scientific-literature retrieval and hypothesis formulation.
//!
//! The flow mirrors how a researcher works: distill an information need into
//! search keywords, pull the top papers from a scholarly API, then make a
//! second pass over titles and abstracts to shortlist what is actually worth
//! reading. Every API response is cached verbatim on disk keyed by a query
//! hash, so runs replay offline and stay friendly to rate limits.

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{
    ChatRequest, Gateway, GatewayError, RetryPolicy, TEMPERATURE_CREATIVE, TEMPERATURE_GROUNDED,
};

/// Papers fetched per search by default.
pub const DEFAULT_FETCH_LIMIT: usize = 20;
/// Shortlist size cap. A safety bound, not a target.
pub const DEFAULT_MAX_KEEP: usize = 5;
/// Keyword cap for one search.
pub const MAX_KEYWORDS: usize = 6;

#[derive(Debug, Error)]
pub enum LitError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no keywords found in reply")]
    NoKeywords,
    #[error("scholarly API unreachable: {0}")]
    ApiUnreachable(String),
    #[error("scholarly API quota exceeded after {0} attempt(s)")]
    QuotaExceeded(u32),
    #[error("judge reply unparseable for paper {paper_id}: {reason}")]
    JudgeParseError { paper_id: String, reason: String },
    #[error("need at least two concepts, got {0}")]
    TooFewConcepts(usize),
    #[error("cache io at {path}: {reason}")]
    CacheIo { path: PathBuf, reason: String },
    #[error("API response malformed: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperMeta {
    pub paper_id: String,
    pub title: String,
    #[serde(default)]
    pub abstract_text: String,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub paper: PaperMeta,
    pub rationale: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Shortlist {
    pub entries: Vec<ShortlistEntry>,
    pub source_query: String,
}

pub const DEFAULT_TOPIC_TEMPLATE: &str = "A researcher describes an information need. Distill \
it into 1 to {max} short search keywords. Reply with the keywords only, separated by \
semicolons.\n\nNeed: {need}";

pub const DEFAULT_SHORTLIST_TEMPLATE: &str = "A researcher needs: {need}\n\nPaper title: \
{title}\nAbstract: {abstract}\n\nIs this paper relevant to the need? Reply in the form\n\
verdict; confidence; rationale\nwhere verdict is relevant or irrelevant, confidence is a \
number between 0 and 1, and rationale is one short sentence.";

pub const DEFAULT_HYPOTHESIS_TEMPLATE: &str = "Propose {count} research hypotheses that \
connect these concepts: {concepts}. For each, output exactly two lines:\nTitle: <article \
title>\nAbstract: <three-sentence abstract>\nEvery title and abstract must mention every \
concept. Separate hypotheses with a blank line.";

pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You assist with scientific literature search and hypothesis development.";

pub fn build_topic_request(need: &str) -> ChatRequest {
    let prompt = DEFAULT_TOPIC_TEMPLATE
        .replace("{max}", &MAX_KEYWORDS.to_string())
        .replace("{need}", need);
    ChatRequest::single_turn(DEFAULT_SYSTEM_PROMPT, prompt, TEMPERATURE_GROUNDED, 64)
}

/// Distill an information need into at most [`MAX_KEYWORDS`] lowercased,
/// deduplicated keywords.
pub fn extract_search_topics(need: &str, gateway: &Gateway) -> Result<Vec<String>, LitError> {
    let reply = gateway.complete(&build_topic_request(need))?;
    let mut seen = std::collections::HashSet::new();
    let mut keywords = Vec::new();
    for part in reply.text.split(&[';', '\n'][..]) {
        let kw = part
            .trim()
            .trim_matches(&['"', '\'', '-', '*'][..])
            .trim()
            .to_lowercase();
        if kw.is_empty() {
            continue;
        }
        if seen.insert(kw.clone()) {
            keywords.push(kw);
        }
        if keywords.len() == MAX_KEYWORDS {
            break;
        }
    }
    if keywords.is_empty() {
        return Err(LitError::NoKeywords);
    }
    Ok(keywords)
}

/// Scholarly paper-search client with a verbatim on-disk response cache.
/// In offline mode only the cache is consulted.
pub struct SearchClient {
    pub endpoint: String,
    pub cache_dir: PathBuf,
    pub offline: bool,
    pub retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ApiSearchResponse {
    #[serde(default)]
    data: Vec<ApiPaper>,
}

#[derive(Deserialize)]
struct ApiPaper {
    #[serde(rename = "paperId")]
    paper_id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(rename = "abstract", default)]
    abstract_text: Option<String>,
    #[serde(default)]
    year: Option<i32>,
    #[serde(default)]
    url: Option<String>,
}

impl SearchClient {
    pub fn new(endpoint: impl Into<String>, cache_dir: impl Into<PathBuf>, offline: bool) -> Self {
        SearchClient {
            endpoint: endpoint.into(),
            cache_dir: cache_dir.into(),
            offline,
            retry: RetryPolicy::default(),
        }
    }

    /// Cache file for a (query, limit) pair.
    pub fn cache_path(&self, query: &str, limit: usize) -> PathBuf {
        let digest = Sha256::digest(format!("{query}\u{1f}{limit}").as_bytes());
        self.cache_dir
            .join(format!("{}.json", hex::encode(&digest[..8])))
    }

    fn fetch_raw(&self, query: &str, limit: usize) -> Result<String, LitError> {
        let cache = self.cache_path(query, limit);
        if let Ok(body) = fs::read_to_string(&cache) {
            log::debug!("cache hit for query '{query}'");
            return Ok(body);
        }
        if self.offline {
            return Err(LitError::ApiUnreachable(format!(
                "offline mode and no cached response for '{query}'"
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("reqwest client builds with static config");
        let mut last_error = String::new();
        let mut quota_hits = 0u32;
        for attempt in 1..=self.retry.max_attempts {
            let sent = client
                .get(&self.endpoint)
                .query(&[("query", query), ("limit", &limit.to_string())])
                .send();
            match sent {
                Ok(resp) if resp.status().is_success() => {
                    let body = resp
                        .text()
                        .map_err(|e| LitError::ApiUnreachable(e.to_string()))?;
                    fs::create_dir_all(&self.cache_dir).map_err(|e| LitError::CacheIo {
                        path: self.cache_dir.clone(),
                        reason: e.to_string(),
                    })?;
                    fs::write(&cache, &body).map_err(|e| LitError::CacheIo {
                        path: cache.clone(),
                        reason: e.to_string(),
                    })?;
                    return Ok(body);
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.as_u16() == 429 {
                        quota_hits += 1;
                    }
                    last_error = format!("HTTP {status}");
                    if !(status.as_u16() == 429 || status.is_server_error()) {
                        return Err(LitError::ApiUnreachable(last_error));
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
            if attempt < self.retry.max_attempts {
                std::thread::sleep(Duration::from_millis(self.retry.backoff_ms(attempt)));
            }
        }
        if quota_hits == self.retry.max_attempts {
            return Err(LitError::QuotaExceeded(quota_hits));
        }
        Err(LitError::ApiUnreachable(last_error))
    }
}

/// Search for papers: keywords are joined with spaces into one query, and at
/// most `limit` results come back in API order. Responses replay from the
/// cache byte-for-byte.
pub fn search_papers(
    client: &SearchClient,
    keywords: &[String],
    limit: usize,
) -> Result<Vec<PaperMeta>, LitError> {
    let query = keywords.join(" ");
    let body = client.fetch_raw(&query, limit)?;
    let parsed: ApiSearchResponse =
        serde_json::from_str(&body).map_err(|e| LitError::MalformedResponse(e.to_string()))?;
    let mut seen = std::collections::HashSet::new();
    let mut papers = Vec::new();
    for p in parsed.data {
        if !seen.insert(p.paper_id.clone()) {
            continue;
        }
        let title = p.title.unwrap_or_default();
        if title.trim().is_empty() {
            continue;
        }
        papers.push(PaperMeta {
            paper_id: p.paper_id,
            title,
            abstract_text: p.abstract_text.unwrap_or_default(),
            year: p.year,
            url: p.url,
        });
        if papers.len() == limit {
            break;
        }
    }
    Ok(papers)
}

pub fn build_shortlist_request(paper: &PaperMeta, need: &str) -> ChatRequest {
    let prompt = DEFAULT_SHORTLIST_TEMPLATE
        .replace("{need}", need)
        .replace("{title}", &paper.title)
        .replace("{abstract}", &paper.abstract_text);
    ChatRequest::single_turn(DEFAULT_SYSTEM_PROMPT, prompt, TEMPERATURE_GROUNDED, 128)
}

fn parse_shortlist_reply(paper_id: &str, reply: &str) -> Result<(bool, f64, String), LitError> {
    let mut parts = reply.trim().splitn(3, ';');
    let verdict = parts.next().unwrap_or("").trim().to_lowercase();
    let relevant = match verdict.as_str() {
        "relevant" => true,
        "irrelevant" => false,
        other => {
            return Err(LitError::JudgeParseError {
                paper_id: paper_id.to_string(),
                reason: format!("verdict '{other}' is neither relevant nor irrelevant"),
            })
        }
    };
    let confidence: f64 =
        parts
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| LitError::JudgeParseError {
                paper_id: paper_id.to_string(),
                reason: "confidence is not a number".into(),
            })?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(LitError::JudgeParseError {
            paper_id: paper_id.to_string(),
            reason: format!("confidence {confidence} outside [0, 1]"),
        });
    }
    let rationale = parts.next().unwrap_or("").trim().to_string();
    Ok((relevant, confidence, rationale))
}

/// Second-pass selection: judge each paper's title and abstract against the
/// need, keep the relevant ones (highest confidence first), capped at
/// `max_keep`. An unparseable judgement fails the call; a judged-irrelevant
/// paper is simply dropped.
pub fn shortlist_papers(
    papers: &[PaperMeta],
    need: &str,
    gateway: &Gateway,
    max_keep: usize,
) -> Result<Shortlist, LitError> {
    let mut marked: Vec<ShortlistEntry> = Vec::new();
    for paper in papers {
        let reply = gateway.complete(&build_shortlist_request(paper, need))?;
        let (relevant, confidence, rationale) =
            parse_shortlist_reply(&paper.paper_id, &reply.text)?;
        if relevant {
            marked.push(ShortlistEntry {
                paper: paper.clone(),
                rationale,
                confidence,
            });
        }
    }
    // Highest confidence first; input order breaks ties (stable sort).
    marked.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    marked.truncate(max_keep);
    Ok(Shortlist {
        entries: marked,
        source_query: need.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub title: String,
    pub abstract_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisOutcome {
    pub kept: Vec<Hypothesis>,
    pub dropped: Vec<(Hypothesis, String)>,
}

pub fn build_hypothesis_request(concepts: &[String], count: usize) -> ChatRequest {
    let prompt = DEFAULT_HYPOTHESIS_TEMPLATE
        .replace("{count}", &count.to_string())
        .replace("{concepts}", &concepts.join(" and "));
    ChatRequest::single_turn(DEFAULT_SYSTEM_PROMPT, prompt, TEMPERATURE_CREATIVE, 1024)
}

fn parse_hypotheses(reply: &str) -> Vec<Hypothesis> {
    let mut out = Vec::new();
    let mut title: Option<String> = None;
    for line in reply.lines() {
        let trimmed = line.trim();
        let lower = trimmed.to_lowercase();
        if let Some(rest) = lower.strip_prefix("title:") {
            let _ = rest;
            title = Some(trimmed[6..].trim().to_string());
        } else if lower.starts_with("abstract:") {
            if let Some(t) = title.take() {
                out.push(Hypothesis {
                    title: t,
                    abstract_text: trimmed[9..].trim().to_string(),
                });
            }
        }
    }
    out
}

/// Generate `count` hypothesis stubs connecting the concepts. A stub that
/// fails to mention every concept (case-insensitive) is dropped with the
/// missing concept named.
pub fn formulate_hypotheses(
    concepts: &[String],
    gateway: &Gateway,
    count: usize,
) -> Result<HypothesisOutcome, LitError> {
    if concepts.len() < 2 {
        return Err(LitError::TooFewConcepts(concepts.len()));
    }
    let reply = gateway.complete(&build_hypothesis_request(concepts, count))?;
    let mut parsed = parse_hypotheses(&reply.text);
    parsed.truncate(count);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for hyp in parsed {
        let haystack = format!("{} {}", hyp.title, hyp.abstract_text).to_lowercase();
        match concepts
            .iter()
            .find(|c| !haystack.contains(&c.to_lowercase()))
        {
            Some(missing) => {
                dropped.push((hyp, format!("does not mention concept '{missing}'")));
            }
            None => kept.push(hyp),
        }
    }
    Ok(HypothesisOutcome { kept, dropped })
}
