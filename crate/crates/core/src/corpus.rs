//! Source-material ingestion and paragraph segmentation.
//!
//! Documents arrive as plain text or with a `---` front-matter header
//! (title / source_kind / doc_id / citation), get whitespace-normalized, and
//! are split into grounding chunks: paragraph-first packing up to the token
//! budget, with oversized paragraphs hard-split at token boundaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{count_tokens, tokenize, TokenRule};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is not valid UTF-8 text: {0}")]
    DecodeError(String),
    #[error("document is empty after normalization")]
    EmptyDocument,
    #[error("invalid segment policy: {0}")]
    InvalidPolicy(String),
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Wiki,
    Report,
    Paper,
    #[default]
    Other,
}

impl SourceKind {
    fn parse(s: &str) -> Option<SourceKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wiki" => Some(SourceKind::Wiki),
            "report" => Some(SourceKind::Report),
            "paper" => Some(SourceKind::Paper),
            "other" => Some(SourceKind::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub source_kind: SourceKind,
    pub citation: Option<String>,
}

/// A segmented grounding paragraph with a stable id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub token_count: usize,
}

/// Segmentation policy. `overlap_tokens` applies only to the continuation
/// windows of a hard-split oversized paragraph (each window re-starts with
/// the previous window's last `overlap_tokens` tokens); chunks separated at
/// paragraph boundaries do not overlap.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmentPolicy {
    pub max_tokens: usize,
    pub overlap_tokens: usize,
    pub token_rule: TokenRule,
}

impl Default for SegmentPolicy {
    fn default() -> Self {
        SegmentPolicy {
            max_tokens: 512,
            overlap_tokens: 0,
            token_rule: TokenRule::Whitespace,
        }
    }
}

impl SegmentPolicy {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_tokens == 0 {
            return Err(CorpusError::InvalidPolicy(
                "max_tokens must be positive".into(),
            ));
        }
        if self.overlap_tokens >= self.max_tokens {
            return Err(CorpusError::InvalidPolicy(format!(
                "overlap_tokens ({}) must be < max_tokens ({})",
                self.overlap_tokens, self.max_tokens
            )));
        }
        Ok(())
    }
}

/// Normalize body text: tabs become spaces, other control characters are
/// stripped, runs of spaces collapse to one, line ends are trimmed, and runs
/// of three or more newlines collapse to a paragraph break.
fn normalize_body(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let cleaned: String = unified
        .chars()
        .map(|c| if c == '\t' { ' ' } else { c })
        .filter(|c| !c.is_control() || *c == '\n')
        .collect();
    let mut lines: Vec<String> = Vec::new();
    for line in cleaned.split('\n') {
        lines.push(
            line.split(' ')
                .filter(|p| !p.is_empty())
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    let mut out = String::new();
    let mut blank_run = 0usize;
    for line in &lines {
        if line.is_empty() {
            blank_run += 1;
            continue;
        }
        if !out.is_empty() {
            out.push_str(if blank_run > 0 { "\n\n" } else { "\n" });
        }
        blank_run = 0;
        out.push_str(line);
    }
    out
}

fn content_doc_id(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    format!("doc-{}", hex::encode(&digest[..8]))
}

fn parse_front_matter(text: &str) -> (BTreeMap<String, String>, &str) {
    let mut fields = BTreeMap::new();
    let Some(rest) = text.strip_prefix("---\n") else {
        return (fields, text);
    };
    let Some(end) = rest.find("\n---") else {
        return (fields, text);
    };
    let header = &rest[..end];
    let mut body = &rest[end + 4..];
    if let Some(stripped) = body.strip_prefix('\n') {
        body = stripped;
    }
    for line in header.lines() {
        if let Some((k, v)) = line.split_once(':') {
            fields.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    (fields, body)
}

/// Ingest raw bytes into a normalized document. Front-matter fields override
/// `default_kind`; a missing doc_id is derived from a hash of the normalized
/// body, so identical content always gets the same id.
pub fn ingest_bytes(bytes: &[u8], default_kind: SourceKind) -> Result<SourceDocument, CorpusError> {
    let raw = std::str::from_utf8(bytes).map_err(|e| CorpusError::DecodeError(e.to_string()))?;
    let (fields, body_raw) = parse_front_matter(raw);
    let body = normalize_body(body_raw);
    if body.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    let source_kind = match fields.get("source_kind") {
        Some(v) => SourceKind::parse(v)
            .ok_or_else(|| CorpusError::DecodeError(format!("unknown source_kind '{v}'")))?,
        None => default_kind,
    };
    let title = fields.get("title").cloned().unwrap_or_else(|| {
        let first_line = body.lines().next().unwrap_or_default();
        first_line.chars().take(80).collect()
    });
    let doc_id = fields
        .get("doc_id")
        .cloned()
        .unwrap_or_else(|| content_doc_id(&body));
    Ok(SourceDocument {
        doc_id,
        title,
        body,
        source_kind,
        citation: fields.get("citation").cloned(),
    })
}

/// Ingest a file by path.
pub fn ingest_path(path: &Path, default_kind: SourceKind) -> Result<SourceDocument, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::Unreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    ingest_bytes(&bytes, default_kind)
}

/// Split a document into chunks: paragraphs are packed greedily up to
/// `max_tokens`, never crossing a paragraph boundary when that would exceed
/// the budget; a single paragraph longer than the budget is hard-split at
/// token boundaries. Pure: same (doc, policy) always yields the same chunks.
pub fn segment(
    doc: &SourceDocument,
    policy: &SegmentPolicy,
) -> Result<Vec<DocumentChunk>, CorpusError> {
    policy.validate()?;
    let paragraphs: Vec<&str> = doc
        .body
        .split("\n\n")
        .filter(|p| !p.trim().is_empty())
        .collect();

    // Chunk texts with their token counts, built before ids are assigned.
    let mut pieces: Vec<(String, usize)> = Vec::new();
    let mut current_text = String::new();
    let mut current_tokens = 0usize;

    let flush = |text: &mut String, tokens: &mut usize, pieces: &mut Vec<(String, usize)>| {
        if *tokens > 0 {
            pieces.push((std::mem::take(text), *tokens));
            *tokens = 0;
        }
    };

    for para in paragraphs {
        let n = count_tokens(para, policy.token_rule);
        if n == 0 {
            continue;
        }
        if n > policy.max_tokens {
            // Oversized paragraph: close the open chunk, then hard-split.
            flush(&mut current_text, &mut current_tokens, &mut pieces);
            let tokens = tokenize(para, policy.token_rule);
            let step = policy.max_tokens - policy.overlap_tokens;
            let mut start = 0usize;
            loop {
                let end = (start + policy.max_tokens).min(tokens.len());
                let window = tokens[start..end].join(" ");
                pieces.push((window, end - start));
                if end == tokens.len() {
                    break;
                }
                start += step;
            }
        } else if current_tokens + n <= policy.max_tokens && current_tokens > 0 {
            current_text.push_str("\n\n");
            current_text.push_str(para);
            current_tokens += n;
        } else {
            flush(&mut current_text, &mut current_tokens, &mut pieces);
            current_text = para.to_string();
            current_tokens = n;
        }
    }
    flush(&mut current_text, &mut current_tokens, &mut pieces);

    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(ordinal, (text, token_count))| DocumentChunk {
            chunk_id: format!("{}-{:04}", doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text,
            token_count,
        })
        .collect())
}

/// Serialize chunks as line-delimited records.
pub fn write_chunks(chunks: &[DocumentChunk]) -> String {
    let mut out = String::new();
    for c in chunks {
        out.push_str(&serde_json::to_string(c).expect("chunk serializes"));
        out.push('\n');
    }
    out
}

/// Parse line-delimited chunk records.
pub fn read_chunks(raw: &str) -> Result<Vec<DocumentChunk>, CorpusError> {
    let mut chunks = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let chunk: DocumentChunk = serde_json::from_str(line)
            .map_err(|e| CorpusError::DecodeError(format!("line {}: {e}", lineno + 1)))?;
        chunks.push(chunk);
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(body: &str) -> SourceDocument {
        ingest_bytes(body.as_bytes(), SourceKind::Other).unwrap()
    }

    #[test]
    fn normalization_collapses_spaces_and_keeps_paragraph_breaks() {
        let d = doc("A  B\n\nC");
        assert_eq!(d.body, "A B\n\nC");
    }

    #[test]
    fn normalization_strips_control_chars_and_collapses_blank_runs() {
        let d = doc("x\u{0007}y\tz\n\n\n\nnext");
        assert_eq!(d.body, "xy z\n\nnext");
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            ingest_bytes(b"", SourceKind::Wiki),
            Err(CorpusError::EmptyDocument)
        ));
        assert!(matches!(
            ingest_bytes(b"  \n\n \n", SourceKind::Wiki),
            Err(CorpusError::EmptyDocument)
        ));
    }

    #[test]
    fn same_bytes_yield_same_doc_id() {
        let a = ingest_bytes(b"the same content", SourceKind::Wiki).unwrap();
        let b = ingest_bytes(b"the same content", SourceKind::Wiki).unwrap();
        assert_eq!(a.doc_id, b.doc_id);
        let c = ingest_bytes(b"different content", SourceKind::Wiki).unwrap();
        assert_ne!(a.doc_id, c.doc_id);
    }

    #[test]
    fn front_matter_overrides_defaults() {
        let raw =
            "---\ntitle: Sea level\nsource_kind: report\ncitation: IPCC AR6\n---\nbody text here";
        let d = ingest_bytes(raw.as_bytes(), SourceKind::Other).unwrap();
        assert_eq!(d.title, "Sea level");
        assert_eq!(d.source_kind, SourceKind::Report);
        assert_eq!(d.citation.as_deref(), Some("IPCC AR6"));
        assert_eq!(d.body, "body text here");
    }

    #[test]
    fn unknown_source_kind_in_front_matter_is_an_error() {
        let raw = "---\nsource_kind: blog\n---\nbody";
        assert!(matches!(
            ingest_bytes(raw.as_bytes(), SourceKind::Other),
            Err(CorpusError::DecodeError(_))
        ));
    }

    #[test]
    fn invalid_utf8_is_a_decode_error() {
        assert!(matches!(
            ingest_bytes(&[0xff, 0xfe, 0x41], SourceKind::Other),
            Err(CorpusError::DecodeError(_))
        ));
    }

    fn words(n: usize, tag: &str) -> String {
        (0..n)
            .map(|i| format!("{tag}{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn short_document_is_one_chunk() {
        let d = doc(&words(10, "w"));
        let chunks = segment(&d, &SegmentPolicy::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 10);
        assert_eq!(chunks[0].ordinal, 0);
    }

    #[test]
    fn oversized_paragraph_hard_splits_512_512_6() {
        let d = doc(&words(1030, "t"));
        let chunks = segment(&d, &SegmentPolicy::default()).unwrap();
        let counts: Vec<usize> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(counts, vec![512, 512, 6]);
        // Independent splitter: chunk the token stream directly and compare.
        let tokens: Vec<&str> = d.body.split_whitespace().collect();
        let expected: Vec<String> = tokens.chunks(512).map(|w| w.join(" ")).collect();
        let actual: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(actual, expected);
    }

    #[test]
    fn packing_never_crosses_a_paragraph_over_the_limit() {
        let body = format!("{}\n\n{}", words(300, "a"), words(300, "b"));
        let d = doc(&body);
        let chunks = segment(&d, &SegmentPolicy::default()).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].token_count, 300);
        assert_eq!(chunks[1].token_count, 300);
    }

    #[test]
    fn small_paragraphs_pack_into_one_chunk() {
        let body = format!(
            "{}\n\n{}\n\n{}",
            words(100, "a"),
            words(100, "b"),
            words(100, "c")
        );
        let d = doc(&body);
        let chunks = segment(&d, &SegmentPolicy::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 300);
    }

    #[test]
    fn hard_split_overlap_repeats_window_tail() {
        let d = doc(&words(20, "t"));
        let policy = SegmentPolicy {
            max_tokens: 8,
            overlap_tokens: 2,
            token_rule: TokenRule::Whitespace,
        };
        let chunks = segment(&d, &policy).unwrap();
        // Windows: [0..8), [6..14), [12..20) — each continuation repeats 2 tokens.
        assert_eq!(chunks.len(), 3);
        let toks: Vec<Vec<&str>> = chunks
            .iter()
            .map(|c| c.text.split_whitespace().collect())
            .collect();
        assert_eq!(toks[0].len(), 8);
        assert_eq!(&toks[0][6..], &toks[1][..2]);
        assert_eq!(&toks[1][6..], &toks[2][..2]);
        // Dropping each continuation's overlap prefix reconstructs the stream.
        let mut rebuilt: Vec<&str> = toks[0].clone();
        for t in &toks[1..] {
            rebuilt.extend_from_slice(&t[policy.overlap_tokens..]);
        }
        let original: Vec<&str> = d.body.split_whitespace().collect();
        assert_eq!(rebuilt, original);
    }

    #[test]
    fn overlap_must_be_smaller_than_max() {
        let d = doc("a b c");
        let policy = SegmentPolicy {
            max_tokens: 4,
            overlap_tokens: 4,
            token_rule: TokenRule::Whitespace,
        };
        assert!(matches!(
            segment(&d, &policy),
            Err(CorpusError::InvalidPolicy(_))
        ));
    }

    #[test]
    fn chunk_ids_embed_doc_id_and_ordinal() {
        let d = doc(&words(10, "w"));
        let chunks = segment(&d, &SegmentPolicy::default()).unwrap();
        assert_eq!(chunks[0].chunk_id, format!("{}-0000", d.doc_id));
    }

    #[test]
    fn chunk_lines_round_trip() {
        let d = doc(&format!("{}\n\n{}", words(5, "x"), words(700, "y")));
        let chunks = segment(&d, &SegmentPolicy::default()).unwrap();
        let serialized = write_chunks(&chunks);
        let back = read_chunks(&serialized).unwrap();
        assert_eq!(back, chunks);
    }

    proptest! {
        #[test]
        fn no_chunk_exceeds_max_tokens(
            para_sizes in proptest::collection::vec(1usize..40, 1..8),
            max_tokens in 4usize..24,
        ) {
            let body = para_sizes
                .iter()
                .enumerate()
                .map(|(i, n)| words(*n, &format!("p{i}x")))
                .collect::<Vec<_>>()
                .join("\n\n");
            let d = doc(&body);
            let policy = SegmentPolicy { max_tokens, overlap_tokens: 0, token_rule: TokenRule::Whitespace };
            let chunks = segment(&d, &policy).unwrap();
            for c in &chunks {
                prop_assert!(c.token_count <= max_tokens);
                prop_assert_eq!(c.token_count, c.text.split_whitespace().count());
            }
        }

        #[test]
        fn token_stream_is_preserved_without_overlap(
            para_sizes in proptest::collection::vec(1usize..40, 1..8),
            max_tokens in 4usize..24,
        ) {
            let body = para_sizes
                .iter()
                .enumerate()
                .map(|(i, n)| words(*n, &format!("p{i}x")))
                .collect::<Vec<_>>()
                .join("\n\n");
            let d = doc(&body);
            let policy = SegmentPolicy { max_tokens, overlap_tokens: 0, token_rule: TokenRule::Whitespace };
            let chunks = segment(&d, &policy).unwrap();
            let rebuilt: Vec<&str> = chunks
                .iter()
                .flat_map(|c| c.text.split_whitespace())
                .collect();
            let original: Vec<&str> = d.body.split_whitespace().collect();
            prop_assert_eq!(rebuilt, original);
            // Ordinals are consecutive from zero.
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.ordinal, i);
            }
        }

        #[test]
        fn segmentation_is_pure(
            para_sizes in proptest::collection::vec(1usize..30, 1..6),
            max_tokens in 4usize..20,
        ) {
            let body = para_sizes
                .iter()
                .enumerate()
                .map(|(i, n)| words(*n, &format!("q{i}y")))
                .collect::<Vec<_>>()
                .join("\n\n");
            let d = doc(&body);
            let policy = SegmentPolicy { max_tokens, overlap_tokens: 0, token_rule: TokenRule::Whitespace };
            prop_assert_eq!(segment(&d, &policy).unwrap(), segment(&d, &policy).unwrap());
        }
    }
}
