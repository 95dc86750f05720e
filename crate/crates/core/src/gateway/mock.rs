//! Deterministic scripted backend for offline runs and tests.
//!
//! Chat replies come from a line-delimited script file; each line is
//! `{"key": "<16-hex>", "reply": "<text>"}`. The key is a stable hash of the
//! request (see [`script_key`]), so scripts pin behavior without storing full
//! prompts. A request whose key is absent gets the fixed fallback reply and a
//! log entry — never an error.
//!
//! Embeddings are pseudo-embeddings: a 64-dimensional vector derived from
//! byte-level hashing of the text, L2-normalized (see [`pseudo_embedding`]).
//! Equal texts embed identically on every platform and run.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Backend, ChatRequest, ChatResponse, EmbeddingVector, FinishReason, GatewayError, TokenUsage,
};
use crate::text::{count_tokens, TokenRule};

/// Reply returned when the script has no entry for a request's key.
pub const MOCK_FALLBACK_REPLY: &str = "MOCK-FALLBACK";

/// Dimension of mock pseudo-embeddings.
pub const MOCK_EMBED_DIM: usize = 64;

/// One scripted reply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub key: String,
    pub reply: String,
}

/// Stable 16-hex-digit script key for a (system prompt, last user message)
/// pair: the first 8 bytes of SHA-256 over the two texts joined by a unit
/// separator (0x1F).
pub fn script_key(system_prompt: &str, last_user_message: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system_prompt.as_bytes());
    hasher.update([0x1f]);
    hasher.update(last_user_message.as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Script key for a full request.
pub fn request_key(req: &ChatRequest) -> String {
    script_key(&req.system_prompt, req.last_user_text().unwrap_or(""))
}

/// Deterministic pseudo-embedding of `text`.
///
/// Construction: `h = SHA-256(text)`; component `i` (0..64) is the first 8
/// bytes of `SHA-256(h || i as u32 LE)` read as a little-endian u64, mapped
/// linearly onto [-1, 1]; the vector is then L2-normalized. Stable across
/// runs and platforms.
pub fn pseudo_embedding(text: &str) -> EmbeddingVector {
    let seed = Sha256::digest(text.as_bytes());
    let mut values = Vec::with_capacity(MOCK_EMBED_DIM);
    for i in 0..MOCK_EMBED_DIM as u32 {
        let mut hasher = Sha256::new();
        hasher.update(seed);
        hasher.update(i.to_le_bytes());
        let block = hasher.finalize();
        let raw = u64::from_le_bytes(block[..8].try_into().unwrap());
        let unit = raw as f64 / u64::MAX as f64;
        values.push(unit * 2.0 - 1.0);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    } else {
        values[0] = 1.0;
    }
    EmbeddingVector {
        dim: values.len(),
        values,
    }
}

/// Scripted mock backend.
pub struct MockBackend {
    replies: HashMap<String, String>,
}

impl MockBackend {
    /// Load a script file. Blank lines are ignored; a malformed line makes
    /// the whole script unusable (scripts are fixtures, not wild data).
    pub fn from_script_file(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path).map_err(|e| GatewayError::ScriptUnusable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut replies = HashMap::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|e| GatewayError::ScriptUnusable {
                    path: path.to_path_buf(),
                    reason: format!("line {}: {e}", lineno + 1),
                })?;
            replies.insert(entry.key, entry.reply);
        }
        Ok(MockBackend { replies })
    }

    /// Script-less mock: every chat request gets the fallback reply.
    pub fn empty() -> Self {
        MockBackend {
            replies: HashMap::new(),
        }
    }

    /// Build from in-memory entries.
    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        MockBackend {
            replies: entries.into_iter().map(|e| (e.key, e.reply)).collect(),
        }
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = request_key(req);
        let text = match self.replies.get(&key) {
            Some(reply) => reply.clone(),
            None => {
                log::debug!("mock script has no entry for key {key}; using fallback reply");
                MOCK_FALLBACK_REPLY.to_string()
            }
        };
        let prompt_tokens = req
            .messages
            .iter()
            .map(|m| count_tokens(&m.text, TokenRule::Whitespace))
            .sum::<usize>()
            + count_tokens(&req.system_prompt, TokenRule::Whitespace);
        // Empty text is only legal with an error finish.
        let finish_reason = if text.is_empty() { FinishReason::Error } else { FinishReason::Stop };
        Ok(ChatResponse {
            usage: TokenUsage {
                prompt_tokens: prompt_tokens as u32,
                completion_tokens: count_tokens(&text, TokenRule::Whitespace) as u32,
            },
            text,
            finish_reason,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        Ok(texts.iter().map(|t| pseudo_embedding(t)).collect())
    }
}

/// Serialize script entries to the line-delimited script format.
pub fn render_script(entries: &[ScriptEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("script entry serializes"));
        out.push('\n');
    }
    out
}
