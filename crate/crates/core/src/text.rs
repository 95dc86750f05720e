//! Tokenization rules shared by segmentation, shingling, and similarity checks.

use serde::{Deserialize, Serialize};

/// How text is split into tokens for counting and n-gram purposes.
///
/// Model tokenizers are deliberately out of scope; both rules are
/// provider-agnostic and stable across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenRule {
    /// Split on Unicode whitespace; punctuation stays attached to words.
    #[default]
    Whitespace,
    /// Maximal runs of alphanumeric characters; everything else is a separator.
    UnicodeWord,
}

/// Tokenize `text` under `rule`. Returns borrowed slices into `text`.
pub fn tokenize(text: &str, rule: TokenRule) -> Vec<&str> {
    match rule {
        TokenRule::Whitespace => text.split_whitespace().collect(),
        TokenRule::UnicodeWord => text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect(),
    }
}

/// Token count under `rule`.
pub fn count_tokens(text: &str, rule: TokenRule) -> usize {
    tokenize(text, rule).len()
}

/// Case-fold and strip punctuation, leaving a single-space-separated token
/// stream. This is the normalization applied before shingling and n-gram
/// similarity comparisons: `"A, b C d e"` and `"a b c d e"` normalize to the
/// same string.
pub fn normalize_for_ngrams(text: &str) -> String {
    let lowered = text.to_lowercase();
    let kept: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}
