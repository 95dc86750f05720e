//! Run configuration: a sectioned TOML file with per-module settings, plus
//! flag overrides (flags win). Input paths named in the config are checked
//! up front so a bad path fails before any work starts.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dataforge_core::corpus::SegmentPolicy;
use dataforge_core::gateway::{BackendConfig, BackendKind, RetryPolicy};
use dataforge_core::selfinstruct::SelfInstructConfig;
use dataforge_core::selfqa::SelfQaConfig;
use dataforge_core::text::TokenRule;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rng_seed: u64,
    pub backend: BackendSection,
    pub segment: SegmentSection,
    pub selfqa: SelfQaSection,
    pub selfinstruct: SelfInstructSection,
    pub eval: EvalSection,
    pub litsearch: LitSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rng_seed: 42,
            backend: BackendSection::default(),
            segment: SegmentSection::default(),
            selfqa: SelfQaSection::default(),
            selfinstruct: SelfInstructSection::default(),
            eval: EvalSection::default(),
            litsearch: LitSection::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: String,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub max_inflight: usize,
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub script_path: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: "mock".into(),
            endpoint: None,
            model_name: "mock".into(),
            max_inflight: 4,
            max_attempts: 3,
            base_backoff_ms: 200,
            script_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSection {
    pub max_tokens: usize,
    pub overlap_tokens: usize,
    pub token_rule: String,
}

impl Default for SegmentSection {
    fn default() -> Self {
        SegmentSection {
            max_tokens: 512,
            overlap_tokens: 0,
            token_rule: "whitespace".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfQaSection {
    pub questions_per_chunk: usize,
    pub min_question_len: usize,
    pub min_answer_len: usize,
    pub question_template: Option<String>,
    pub answer_template: Option<String>,
    pub system_prompt: Option<String>,
}

impl Default for SelfQaSection {
    fn default() -> Self {
        SelfQaSection {
            questions_per_chunk: 3,
            min_question_len: 8,
            min_answer_len: 10,
            question_template: None,
            answer_template: None,
            system_prompt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfInstructSection {
    pub fewshot_k: usize,
    pub rounds: usize,
    pub candidates_per_round: usize,
    pub similarity_ngram: usize,
    pub similarity_max_overlap: f64,
}

impl Default for SelfInstructSection {
    fn default() -> Self {
        SelfInstructSection {
            fewshot_k: 3,
            rounds: 1,
            candidates_per_round: 4,
            similarity_ngram: 4,
            similarity_max_overlap: 0.7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Repeated evaluation passes for the mean±std report.
    pub runs: usize,
    /// Web-harvest recommendation threshold.
    pub min_score: i64,
    /// Retrieval depth for RAG queries.
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            runs: 3,
            min_score: 3,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LitSection {
    pub endpoint: String,
    pub cache_dir: PathBuf,
}

impl Default for LitSection {
    fn default() -> Self {
        LitSection {
            endpoint: "https://api.semanticscholar.org/graph/v1/paper/search".into(),
            cache_dir: PathBuf::from(".dataforge-cache"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub out_dir: PathBuf,
    pub docs: Option<PathBuf>,
    pub chunks: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub mcq_suite: Option<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub dumps: Vec<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&raw).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check everything that can be checked without running: enum fields
    /// parse, numeric bounds hold, and every referenced input path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.backend_kind()?;
        self.token_rule()?;
        if self.segment.max_tokens == 0 {
            return Err(ConfigError("segment.max_tokens must be positive".into()));
        }
        if self.segment.overlap_tokens >= self.segment.max_tokens {
            return Err(ConfigError(
                "segment.overlap_tokens must be < max_tokens".into(),
            ));
        }
        if self.backend.max_inflight == 0 {
            return Err(ConfigError("backend.max_inflight must be >= 1".into()));
        }
        if self.backend.max_attempts == 0 {
            return Err(ConfigError("backend.max_attempts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.selfinstruct.similarity_max_overlap) {
            return Err(ConfigError(
                "selfinstruct.similarity_max_overlap must be in [0, 1]".into(),
            ));
        }
        if self.eval.runs == 0 {
            return Err(ConfigError("eval.runs must be >= 1".into()));
        }
        let mut required: Vec<(&str, &PathBuf)> = Vec::new();
        if let Some(p) = &self.backend.script_path {
            required.push(("backend.script_path", p));
        }
        if let Some(p) = &self.paths.docs {
            required.push(("paths.docs", p));
        }
        if let Some(p) = &self.paths.chunks {
            required.push(("paths.chunks", p));
        }
        if let Some(p) = &self.paths.seeds {
            required.push(("paths.seeds", p));
        }
        if let Some(p) = &self.paths.mcq_suite {
            required.push(("paths.mcq_suite", p));
        }
        if let Some(p) = &self.paths.knowledge {
            required.push(("paths.knowledge", p));
        }
        for p in &self.paths.dumps {
            required.push(("paths.dumps", p));
        }
        for (field, path) in required {
            if !path.exists() {
                return Err(ConfigError(format!(
                    "{field} references missing path {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn backend_kind(&self) -> Result<BackendKind, ConfigError> {
        match self.backend.kind.as_str() {
            "mock" => Ok(BackendKind::Mock),
            "remote" => Ok(BackendKind::Remote),
            other => Err(ConfigError(format!(
                "backend.kind '{other}' is not mock or remote"
            ))),
        }
    }

    pub fn token_rule(&self) -> Result<TokenRule, ConfigError> {
        match self.segment.token_rule.as_str() {
            "whitespace" => Ok(TokenRule::Whitespace),
            "unicode_word" => Ok(TokenRule::UnicodeWord),
            other => Err(ConfigError(format!(
                "segment.token_rule '{other}' is not whitespace or unicode_word"
            ))),
        }
    }

    pub fn backend_config(&self) -> Result<BackendConfig, ConfigError> {
        Ok(BackendConfig {
            kind: self.backend_kind()?,
            endpoint: self.backend.endpoint.clone(),
            model_name: self.backend.model_name.clone(),
            max_inflight: self.backend.max_inflight,
            retry: RetryPolicy {
                max_attempts: self.backend.max_attempts,
                base_backoff_ms: self.backend.base_backoff_ms,
            },
            script_path: self.backend.script_path.clone(),
        })
    }

    pub fn segment_policy(&self) -> Result<SegmentPolicy, ConfigError> {
        Ok(SegmentPolicy {
            max_tokens: self.segment.max_tokens,
            overlap_tokens: self.segment.overlap_tokens,
            token_rule: self.token_rule()?,
        })
    }

    pub fn selfqa_config(&self) -> SelfQaConfig {
        let defaults = SelfQaConfig::default();
        SelfQaConfig {
            questions_per_chunk: self.selfqa.questions_per_chunk,
            min_question_len: self.selfqa.min_question_len,
            min_answer_len: self.selfqa.min_answer_len,
            question_template: self
                .selfqa
                .question_template
                .clone()
                .unwrap_or(defaults.question_template),
            answer_template: self
                .selfqa
                .answer_template
                .clone()
                .unwrap_or(defaults.answer_template),
            system_prompt: self
                .selfqa
                .system_prompt
                .clone()
                .unwrap_or(defaults.system_prompt),
        }
    }

    pub fn selfinstruct_config(&self) -> SelfInstructConfig {
        SelfInstructConfig {
            fewshot_k: self.selfinstruct.fewshot_k,
            rounds: self.selfinstruct.rounds,
            candidates_per_round: self.selfinstruct.candidates_per_round,
            similarity_ngram: self.selfinstruct.similarity_ngram,
            similarity_max_overlap: self.selfinstruct.similarity_max_overlap,
            ..SelfInstructConfig::default()
        }
    }
}
