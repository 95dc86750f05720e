//! Canonical instruction-record store: merge, dedup, 5-gram decontamination,
//! and trainer-ready export.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{normalize_for_ngrams, TokenRule};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("instruction and output must be non-empty")]
    BlankField,
    #[error("duplicate record_id {0}")]
    DuplicateRecordId(String),
    #[error("dataset is empty")]
    Empty,
    #[error("cannot parse record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("cannot write {path}: {reason}")]
    WriteError { path: PathBuf, reason: String },
    #[error("cannot read {path}: {reason}")]
    ReadError { path: PathBuf, reason: String },
}

/// Which construction strategy produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    SelfQa,
    WebScrape,
    SelfInstruct,
    General,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Origin::SelfQa => "self_qa",
            Origin::WebScrape => "web_scrape",
            Origin::SelfInstruct => "self_instruct",
            Origin::General => "general",
        };
        f.write_str(s)
    }
}

/// One instruction/input/output triple: the dataset atom. `record_id` is a
/// content hash of the three text fields, so identical content always
/// carries the same id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub record_id: String,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub origin: Origin,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// Content hash of (instruction, input, output): first 8 bytes of SHA-256
/// over the fields joined by unit separators, hex-encoded.
pub fn record_id(instruction: &str, input: &str, output: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(instruction.as_bytes());
    hasher.update([0x1f]);
    hasher.update(input.as_bytes());
    hasher.update([0x1f]);
    hasher.update(output.as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

impl InstructionRecord {
    pub fn new(
        instruction: impl Into<String>,
        input: impl Into<String>,
        output: impl Into<String>,
        origin: Origin,
        meta: BTreeMap<String, String>,
    ) -> Result<Self, DatasetError> {
        let instruction = instruction.into();
        let input = input.into();
        let output = output.into();
        if instruction.trim().is_empty() || output.trim().is_empty() {
            return Err(DatasetError::BlankField);
        }
        Ok(InstructionRecord {
            record_id: record_id(&instruction, &input, &output),
            instruction,
            input,
            output,
            origin,
            meta,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub per_origin: BTreeMap<String, usize>,
    pub total: usize,
    pub parameters: BTreeMap<String, String>,
}

/// An ordered collection of records with unique ids and a manifest whose
/// counts always match the actual contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<InstructionRecord>,
    pub manifest: DatasetManifest,
}

fn build_manifest(
    records: &[InstructionRecord],
    parameters: BTreeMap<String, String>,
) -> DatasetManifest {
    let mut per_origin: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *per_origin.entry(r.origin.to_string()).or_default() += 1;
    }
    DatasetManifest {
        per_origin,
        total: records.len(),
        parameters,
    }
}

impl Dataset {
    pub fn from_records(records: Vec<InstructionRecord>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.record_id.clone()) {
                return Err(DatasetError::DuplicateRecordId(r.record_id.clone()));
            }
        }
        let manifest = build_manifest(&records, BTreeMap::new());
        Ok(Dataset { records, manifest })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Split `text` into its set of `n`-token shingles after case-folding and
/// punctuation stripping. Texts shorter than `n` tokens produce the empty
/// set.
pub fn shingle(text: &str, n: usize, rule: TokenRule) -> HashSet<String> {
    if n == 0 {
        return HashSet::new();
    }
    let normalized = normalize_for_ngrams(text);
    let tokens: Vec<&str> = match rule {
        // Normalization already reduced the text to space-separated
        // alphanumeric tokens, so both rules agree here; split on spaces.
        TokenRule::Whitespace | TokenRule::UnicodeWord => normalized.split(' ').collect(),
    };
    if normalized.is_empty() || tokens.len() < n {
        return HashSet::new();
    }
    tokens.windows(n).map(|w| w.join(" ")).collect()
}

/// Set of shingles contributed by a record: the union over its three text
/// fields, each shingled separately so no n-gram spans a field boundary.
pub fn record_shingles(record: &InstructionRecord, n: usize, rule: TokenRule) -> HashSet<String> {
    let mut set = shingle(&record.instruction, n, rule);
    set.extend(shingle(&record.input, n, rule));
    set.extend(shingle(&record.output, n, rule));
    set
}

/// Shingle index over a whole dataset.
#[derive(Debug, Clone)]
pub struct NgramIndex {
    pub n: usize,
    pub token_rule: TokenRule,
    pub shingles: HashSet<String>,
}

impl NgramIndex {
    pub fn build(corpus: &Dataset, n: usize, rule: TokenRule) -> Self {
        let shingles = corpus
            .records
            .par_iter()
            .map(|r| record_shingles(r, n, rule))
            .reduce(HashSet::new, |mut a, b| {
                a.extend(b);
                a
            });
        NgramIndex {
            n,
            token_rule: rule,
            shingles,
        }
    }

    /// Shingles of `text` that also occur in the index, sorted for stable
    /// reporting.
    pub fn overlapping(&self, text: &str) -> Vec<String> {
        let mut hits: Vec<String> = shingle(text, self.n, self.token_rule)
            .into_iter()
            .filter(|s| self.shingles.contains(s))
            .collect();
        hits.sort();
        hits
    }
}

/// An evaluation item removed by decontamination, with the shingles that
/// triggered the removal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovedItem {
    pub index: usize,
    pub text: String,
    pub offending_shingles: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecontaminationReport {
    pub n: usize,
    pub input_items: usize,
    pub kept_items: usize,
    pub removed_items: usize,
}

#[derive(Debug, Clone)]
pub struct DecontaminationOutcome {
    pub kept: Vec<(usize, String)>,
    pub removed: Vec<RemovedItem>,
    pub report: DecontaminationReport,
}

/// Remove every evaluation text that shares at least `min_overlap` `n`-gram
/// with the corpus. Kept and removed partition the input; original order is
/// preserved within each side.
pub fn decontaminate(
    eval_texts: &[String],
    corpus: &Dataset,
    n: usize,
    min_overlap: usize,
) -> DecontaminationOutcome {
    let index = NgramIndex::build(corpus, n, TokenRule::Whitespace);
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (i, text) in eval_texts.iter().enumerate() {
        let hits = index.overlapping(text);
        if hits.len() >= min_overlap.max(1) {
            removed.push(RemovedItem {
                index: i,
                text: text.clone(),
                offending_shingles: hits,
            });
        } else {
            kept.push((i, text.clone()));
        }
    }
    let report = DecontaminationReport {
        n,
        input_items: eval_texts.len(),
        kept_items: kept.len(),
        removed_items: removed.len(),
    };
    DecontaminationOutcome {
        kept,
        removed,
        report,
    }
}

/// Concatenate datasets, drop duplicate record_ids (first occurrence wins),
/// and shuffle with the given seed. The manifest records per-origin counts
/// and the seed.
pub fn merge(sets: &[Dataset], shuffle_seed: u64) -> Result<Dataset, DatasetError> {
    if sets.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut seen = HashSet::new();
    let mut records: Vec<InstructionRecord> = Vec::new();
    for set in sets {
        for r in &set.records {
            if seen.insert(r.record_id.clone()) {
                records.push(r.clone());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    records.shuffle(&mut rng);
    let mut parameters = BTreeMap::new();
    parameters.insert("shuffle_seed".to_string(), shuffle_seed.to_string());
    parameters.insert("source_sets".to_string(), sets.len().to_string());
    let manifest = build_manifest(&records, parameters);
    Ok(Dataset { records, manifest })
}

/// Serialize records as line-delimited JSON.
pub fn write_records(records: &[InstructionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parse line-delimited records, validating non-empty fields and id
/// integrity.
pub fn read_records(raw: &str) -> Result<Vec<InstructionRecord>, DatasetError> {
    let mut records = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: InstructionRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        if r.instruction.trim().is_empty() || r.output.trim().is_empty() {
            return Err(DatasetError::Malformed {
                line: lineno + 1,
                reason: "instruction and output must be non-empty".into(),
            });
        }
        records.push(r);
    }
    Ok(records)
}

pub fn read_records_from_path(path: &Path) -> Result<Vec<InstructionRecord>, DatasetError> {
    let raw = fs::read_to_string(path).map_err(|e| DatasetError::ReadError {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_records(&raw)
}

/// Files produced by [`export_training_bundle`].
#[derive(Debug, Clone, Serialize)]
pub struct ExportedBundle {
    pub data_path: PathBuf,
    pub hyperparameters_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Write a trainer-ready bundle: the records in the instruction/input/output
/// line-delimited schema, a hyperparameter manifest (values passed through
/// verbatim), and the dataset manifest.
pub fn export_training_bundle(
    ds: &Dataset,
    hyperparameters: &BTreeMap<String, String>,
    out_dir: &Path,
) -> Result<ExportedBundle, DatasetError> {
    if ds.is_empty() {
        return Err(DatasetError::Empty);
    }
    let write = |path: PathBuf, contents: String| -> Result<PathBuf, DatasetError> {
        fs::write(&path, contents).map_err(|e| DatasetError::WriteError {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(path)
    };
    fs::create_dir_all(out_dir).map_err(|e| DatasetError::WriteError {
        path: out_dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let data_path = write(out_dir.join("train.jsonl"), write_records(&ds.records))?;
    let hp_json = serde_json::to_string_pretty(hyperparameters).expect("string map serializes");
    let hyperparameters_path = write(out_dir.join("hyperparameters.json"), hp_json + "\n")?;
    let manifest_json = serde_json::to_string_pretty(&ds.manifest).expect("manifest serializes");
    let manifest_path = write(out_dir.join("dataset-manifest.json"), manifest_json + "\n")?;
    Ok(ExportedBundle {
        data_path,
        hyperparameters_path,
        manifest_path,
    })
}
