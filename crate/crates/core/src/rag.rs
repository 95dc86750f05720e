//! Retrieval-augmented prompting over a flat cosine index.
//!
//! Knowledge-base chunks are embedded once into an immutable index;
//! retrieval is an exhaustive cosine scan (knowledge bases here are desk
//! scale, and exact search keeps the ranking oracle-checkable). Retrieved
//! chunks are concatenated ahead of the query in rank order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentChunk;
use crate::gateway::{ChatRequest, EmbeddingVector, Gateway, GatewayError, TEMPERATURE_GROUNDED};
use crate::text::{count_tokens, TokenRule};

/// Number of chunks retrieved per query by default.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum RagError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("duplicate chunk_id {0}")]
    DuplicateChunkId(String),
    #[error("embedding dim {got} does not match index dim {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("hit references unknown chunk {0}")]
    MissingChunk(String),
    #[error("index file is malformed: {0}")]
    MalformedIndex(String),
}

/// Immutable flat index of (chunk_id, embedding) pairs under the cosine
/// metric.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<(String, EmbeddingVector)>,
    dim: usize,
}

impl VectorIndex {
    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Cosine similarity by the full formula: dot / (|a| · |b|).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Embed every chunk and build the index. Duplicate chunk ids fail before
/// any embedding call.
pub fn build_index(chunks: &[DocumentChunk], gateway: &Gateway) -> Result<VectorIndex, RagError> {
    if chunks.is_empty() {
        return Err(RagError::EmptyIndex);
    }
    let mut seen = std::collections::HashSet::new();
    for c in chunks {
        if !seen.insert(c.chunk_id.as_str()) {
            return Err(RagError::DuplicateChunkId(c.chunk_id.clone()));
        }
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let embeddings = gateway.embed(&texts)?;
    let dim = embeddings[0].dim;
    for e in &embeddings {
        if e.dim != dim {
            return Err(RagError::DimensionMismatch {
                expected: dim,
                got: e.dim,
            });
        }
    }
    let entries = chunks
        .iter()
        .map(|c| c.chunk_id.clone())
        .zip(embeddings)
        .collect();
    Ok(VectorIndex { entries, dim })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based; consecutive, scores non-increasing with rank.
    pub rank: usize,
}

/// Rank all entries against a precomputed query embedding: descending
/// score, ties broken by ascending chunk_id, truncated to `k`.
pub fn rank_entries(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<RetrievalHit>, RagError> {
    if index.is_empty() {
        return Err(RagError::EmptyIndex);
    }
    if query.dim != index.dim {
        return Err(RagError::DimensionMismatch {
            expected: index.dim,
            got: query.dim,
        });
    }
    let mut scored: Vec<(&str, f64)> = index
        .entries
        .iter()
        .map(|(id, e)| (id.as_str(), cosine_similarity(&query.values, &e.values)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (id, score))| RetrievalHit {
            chunk_id: id.to_string(),
            score,
            rank: i + 1,
        })
        .collect())
}

/// Embed the query and return the top-k hits. `k` larger than the index
/// returns every entry ranked.
pub fn retrieve(
    index: &VectorIndex,
    query_text: &str,
    k: usize,
    gateway: &Gateway,
) -> Result<Vec<RetrievalHit>, RagError> {
    let query = gateway.embed(&[query_text.to_string()])?.remove(0);
    rank_entries(index, &query, k)
}

pub const DEFAULT_RAG_TEMPLATE: &str = "Use the context passages to answer the question.\n\n\
{context}\nQuestion: {query}";

pub const DEFAULT_RAG_SYSTEM_PROMPT: &str =
    "You answer questions using the provided context passages.";

/// A composed retrieval-augmented prompt with its token estimate.
#[derive(Debug, Clone)]
pub struct RagPrompt {
    pub request: ChatRequest,
    pub token_estimate: usize,
}

/// Concatenate hit chunks (rank order, delimited) ahead of the query. With
/// no hits the prompt degenerates to the plain query.
pub fn compose_rag_prompt(
    query: &str,
    hits: &[RetrievalHit],
    chunk_store: &BTreeMap<String, String>,
    template: &str,
) -> Result<RagPrompt, RagError> {
    let prompt = if hits.is_empty() {
        query.to_string()
    } else {
        let mut context = String::new();
        for hit in hits {
            let text = chunk_store
                .get(&hit.chunk_id)
                .ok_or_else(|| RagError::MissingChunk(hit.chunk_id.clone()))?;
            context.push_str(&format!(
                "[context {} | {}]\n{}\n\n",
                hit.rank, hit.chunk_id, text
            ));
        }
        template
            .replace("{context}", &context)
            .replace("{query}", query)
    };
    let token_estimate = count_tokens(&prompt, TokenRule::Whitespace);
    let request = ChatRequest::single_turn(
        DEFAULT_RAG_SYSTEM_PROMPT,
        prompt,
        TEMPERATURE_GROUNDED,
        1024,
    );
    Ok(RagPrompt {
        request,
        token_estimate,
    })
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    dim: usize,
    count: usize,
    metric: String,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    chunk_id: String,
    values: Vec<f64>,
}

/// Serialize an index: a header line (dim, count, metric) followed by one
/// entry per line with vector values as decimal text. Decimal text keeps the
/// file portable; values round-trip exactly.
pub fn write_index(index: &VectorIndex) -> String {
    let mut out = serde_json::to_string(&IndexHeader {
        dim: index.dim,
        count: index.entries.len(),
        metric: "cosine".into(),
    })
    .expect("header serializes");
    out.push('\n');
    for (chunk_id, e) in &index.entries {
        out.push_str(
            &serde_json::to_string(&IndexEntry {
                chunk_id: chunk_id.clone(),
                values: e.values.clone(),
            })
            .expect("entry serializes"),
        );
        out.push('\n');
    }
    out
}

/// Parse a serialized index, validating the header against the entries.
pub fn read_index(raw: &str) -> Result<VectorIndex, RagError> {
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
    let header: IndexHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| RagError::MalformedIndex("missing header".into()))?,
    )
    .map_err(|e| RagError::MalformedIndex(format!("header: {e}")))?;
    if header.metric != "cosine" {
        return Err(RagError::MalformedIndex(format!(
            "unsupported metric {}",
            header.metric
        )));
    }
    let mut entries = Vec::with_capacity(header.count);
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in lines.enumerate() {
        let entry: IndexEntry = serde_json::from_str(line)
            .map_err(|e| RagError::MalformedIndex(format!("entry {}: {e}", lineno + 1)))?;
        if entry.values.len() != header.dim {
            return Err(RagError::DimensionMismatch {
                expected: header.dim,
                got: entry.values.len(),
            });
        }
        if !seen.insert(entry.chunk_id.clone()) {
            return Err(RagError::DuplicateChunkId(entry.chunk_id));
        }
        let vector = EmbeddingVector::new(entry.values)
            .map_err(|e| RagError::MalformedIndex(e.to_string()))?;
        entries.push((entry.chunk_id, vector));
    }
    if entries.len() != header.count {
        return Err(RagError::MalformedIndex(format!(
            "header count {} but {} entries",
            header.count,
            entries.len()
        )));
    }
    Ok(VectorIndex {
        entries,
        dim: header.dim,
    })
}
