//! Acceptance suite. Each test covers one release criterion and prints a
//! `[acceptance] criterion N PASS` line; run with
//! `cargo test -p dataforge-cli --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dataforge_core::corpus::{ingest_bytes, segment, write_chunks, SegmentPolicy, SourceKind};
use dataforge_core::dataset::{self, Dataset, InstructionRecord, Origin};
use dataforge_core::evalkit::{
    aggregate_human, combined_average, mean_of_sums, round1, weighted_average, Discipline,
    HumanLabel, InaccuracyLevel, McqItem, ObjectiveReport, DEFAULT_MCQ_TEMPLATE,
};
use dataforge_core::gateway::{
    self, pseudo_embedding, render_script, request_key, Backend, ChatRequest, ChatResponse,
    EmbeddingVector, FinishReason, Gateway, GatewayError, MockBackend, ScriptEntry, TokenUsage,
};
use dataforge_core::rag;
use dataforge_core::selfinstruct::{
    build_generation_request, build_validator_request, pool_rng, read_seed_pool, run_selfinstruct,
    sample_fewshot, write_pool, SeedTask, SelfInstructConfig, TaskPool,
};
use dataforge_core::selfqa::{build_answer_request, build_question_request, SelfQaConfig};

fn dataforge(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dataforge"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "dataforge {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn criterion_01_objective_weighted_average_arithmetic() {
    let started = Instant::now();
    let counts = [26usize, 22, 18, 20, 19];
    let rows: [([f64; 5], f64); 3] = [
        ([76.9, 77.3, 77.8, 70.0, 75.3], 75.5),
        ([81.9, 89.5, 90.6, 81.5, 87.9], 86.0),
        ([93.5, 96.8, 90.6, 90.0, 93.2], 93.0),
    ];
    for (accuracies, reported) in rows {
        let parts: Vec<(f64, usize)> = accuracies
            .iter()
            .copied()
            .zip(counts.iter().copied())
            .collect();
        let avg = weighted_average(&parts);
        assert!(
            (avg - reported).abs() <= 0.05,
            "weighted average {avg} not within 0.05 of reported {reported}"
        );
    }
    assert!(
        started.elapsed().as_secs_f64() < 1.0,
        "criterion must run in under a second"
    );
    eprintln!("[acceptance] criterion 1 PASS — weighted-average rule reproduces all three reported suite averages within ±0.05");
}

#[test]
fn criterion_02_subjective_mean_of_sums_arithmetic() {
    let started = Instant::now();
    // Sums in (helpfulness, relevance, accuracy, depth, creativity, detail)
    // order.
    let strongest = mean_of_sums(&[131.0, 134.0, 134.0, 129.0, 97.0, 132.0]);
    assert_eq!(round1(strongest), 126.2);
    let mistral_base = mean_of_sums(&[124.5, 134.0, 134.0, 111.0, 76.0, 119.0]);
    assert_eq!(round1(mistral_base), 116.4);
    // Known inconsistency in the published row: these sums average to
    // 113.3, while the printed average reads 113.5. The mean rule (which
    // reproduces the other two rows exactly) is the implemented behavior.
    let general_tuned = mean_of_sums(&[123.0, 133.0, 130.0, 102.0, 75.0, 117.0]);
    assert_eq!(round1(general_tuned), 113.3);
    assert_ne!(round1(general_tuned), 113.5);
    assert!(started.elapsed().as_secs_f64() < 1.0);
    eprintln!("[acceptance] criterion 2 PASS — mean-of-sums reproduces 126.2 and 116.4 exactly; 113.3-vs-113.5 row inconsistency asserted and documented");
}

#[test]
fn criterion_03_combined_average_arithmetic() {
    let pairs: [(f64, f64, f64); 4] = [
        (86.0, 113.5, 99.8),
        (93.0, 126.2, 109.6),
        (93.2, 120.3, 106.8),
        (93.8, 129.6, 111.7),
    ];
    for (objective, subjective, reported) in pairs {
        let combined = combined_average(objective, subjective);
        assert!(
            (combined - reported).abs() <= 0.05,
            "combined_average({objective}, {subjective}) = {combined}, want {reported}"
        );
    }
    eprintln!("[acceptance] criterion 3 PASS — combined averages reproduce all four reported cells within ±0.05");
}

#[test]
fn criterion_04_human_label_aggregation() {
    let fixtures: [(&str, [usize; 4]); 3] = [
        ("mistral-tuned", [11, 18, 10, 6]),
        ("general-tuned", [3, 3, 10, 29]),
        ("domain-tuned", [1, 4, 6, 34]),
    ];
    for (model, expected) in fixtures {
        let mut labels = Vec::new();
        let mut n = 0usize;
        for (level, count) in InaccuracyLevel::ALL.iter().zip(expected.iter()) {
            for _ in 0..*count {
                labels.push(HumanLabel {
                    item_id: format!("{model}-{n}"),
                    level: *level,
                });
                n += 1;
            }
        }
        let counts = aggregate_human(&labels).unwrap();
        for (level, want) in InaccuracyLevel::ALL.iter().zip(expected.iter()) {
            assert_eq!(counts[level], *want, "{model}: {level:?}");
        }
        assert_eq!(
            counts.values().sum::<usize>(),
            45,
            "{model}: counts must sum to 45"
        );
    }
    eprintln!(
        "[acceptance] criterion 4 PASS — label counts match all three fixture rows and sum to 45"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: decontamination vs an independent brute-force pairwise oracle.
// ---------------------------------------------------------------------------

/// Independent shingling: deliberately re-implemented here rather than
/// calling the library path under test.
fn oracle_shingles(text: &str, n: usize) -> HashSet<Vec<String>> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if tokens.len() < n {
        return HashSet::new();
    }
    tokens.windows(n).map(|w| w.to_vec()).collect()
}

fn random_words(rng: &mut ChaCha8Rng, vocab: &[String], lo: usize, hi: usize) -> String {
    let len = rng.gen_range(lo..=hi);
    (0..len)
        .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_05_decontamination_matches_bruteforce_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let vocab: Vec<String> = (0..40).map(|i| format!("word{i:02}")).collect();

    for trial in 0..5 {
        let records: Vec<InstructionRecord> = (0..220)
            .map(|i| {
                let instruction = random_words(&mut rng, &vocab, 6, 14);
                // Unique tail keeps record ids distinct without changing
                // overlap structure meaningfully.
                let output = format!("{} uniq{trial}x{i}", random_words(&mut rng, &vocab, 8, 25));
                let input = if i % 7 == 0 {
                    random_words(&mut rng, &vocab, 5, 9)
                } else {
                    String::new()
                };
                InstructionRecord::new(instruction, input, output, Origin::General, BTreeMap::new())
                    .unwrap()
            })
            .collect();
        let corpus = Dataset::from_records(records.clone()).unwrap();

        let eval_texts: Vec<String> = (0..210)
            .map(|i| match i % 10 {
                // Planted 5-token window from a random record field.
                0 | 1 => {
                    let r = &records[rng.gen_range(0..records.len())];
                    let field = if rng.gen_bool(0.5) {
                        &r.instruction
                    } else {
                        &r.output
                    };
                    let toks: Vec<&str> = field.split_whitespace().collect();
                    if toks.len() >= 5 {
                        let start = rng.gen_range(0..=toks.len() - 5);
                        format!(
                            "{} {} {}",
                            random_words(&mut rng, &vocab, 0, 3),
                            toks[start..start + 5].join(" "),
                            random_words(&mut rng, &vocab, 0, 3)
                        )
                    } else {
                        random_words(&mut rng, &vocab, 5, 15)
                    }
                }
                // Planted 4-token window only (stays under the 5-gram bar
                // unless the random context happens to extend it).
                2 => {
                    let r = &records[rng.gen_range(0..records.len())];
                    let toks: Vec<&str> = r.instruction.split_whitespace().collect();
                    if toks.len() >= 4 {
                        let start = rng.gen_range(0..=toks.len() - 4);
                        format!("edge{i} {} tail{i}", toks[start..start + 4].join(" "))
                    } else {
                        random_words(&mut rng, &vocab, 5, 15)
                    }
                }
                _ => random_words(&mut rng, &vocab, 5, 18),
            })
            .collect();

        let outcome = dataset::decontaminate(&eval_texts, &corpus, 5, 1);
        let removed_by_lib: HashSet<usize> = outcome.removed.iter().map(|r| r.index).collect();
        let kept_by_lib: HashSet<usize> = outcome.kept.iter().map(|(i, _)| *i).collect();
        // Partition sanity: disjoint cover of the input.
        assert_eq!(removed_by_lib.len() + kept_by_lib.len(), eval_texts.len());
        assert!(removed_by_lib.is_disjoint(&kept_by_lib));

        // Brute force: pairwise field-level 5-gram intersection.
        let record_shingle_sets: Vec<HashSet<Vec<String>>> = records
            .iter()
            .map(|r| {
                let mut s = oracle_shingles(&r.instruction, 5);
                s.extend(oracle_shingles(&r.input, 5));
                s.extend(oracle_shingles(&r.output, 5));
                s
            })
            .collect();
        let removed_by_oracle: HashSet<usize> = eval_texts
            .iter()
            .enumerate()
            .filter(|(_, text)| {
                let ev = oracle_shingles(text, 5);
                record_shingle_sets
                    .iter()
                    .any(|rs| ev.iter().any(|g| rs.contains(g)))
            })
            .map(|(i, _)| i)
            .collect();

        assert_eq!(
            removed_by_lib, removed_by_oracle,
            "trial {trial}: kept/removed partition diverges from the brute-force oracle"
        );
        // The synthetic suites must actually exercise both sides.
        assert!(
            !removed_by_lib.is_empty() && !kept_by_lib.is_empty(),
            "trial {trial} degenerate"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < 30.0,
        "oracle comparison took {elapsed:.1}s, budget 30s"
    );
    eprintln!("[acceptance] criterion 5 PASS — 5 randomized corpora × suites agree 100% with the brute-force pairwise oracle ({elapsed:.1}s)");
}

// ---------------------------------------------------------------------------
// Criterion 6: retrieval vs exhaustive cosine sort.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_retrieval_matches_exhaustive_cosine_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vocab: Vec<String> = (0..60).map(|i| format!("term{i:02}")).collect();
    let gw = Gateway::from_backend(Arc::new(MockBackend::empty()), 4);

    for trial in 0..20 {
        let n = rng.gen_range(100..=1000);
        let chunks: Vec<dataforge_core::corpus::DocumentChunk> = (0..n)
            .map(|i| {
                let text = random_words(&mut rng, &vocab, 3, 8);
                dataforge_core::corpus::DocumentChunk {
                    chunk_id: format!("t{trial:02}c{i:04}"),
                    doc_id: format!("t{trial:02}"),
                    ordinal: i,
                    token_count: text.split_whitespace().count(),
                    text,
                }
            })
            .collect();
        let index = rag::build_index(&chunks, &gw).unwrap();
        let query = random_words(&mut rng, &vocab, 2, 6);
        let hits = rag::retrieve(&index, &query, 5, &gw).unwrap();
        assert_eq!(hits.len(), 5.min(n));

        // Exhaustive oracle with its own cosine and the documented
        // tie-break (descending score, ascending chunk_id).
        let mut embed_cache: HashMap<&str, EmbeddingVector> = HashMap::new();
        let qe = pseudo_embedding(&query);
        let mut scored: Vec<(String, f64)> = chunks
            .iter()
            .map(|c| {
                let e = embed_cache
                    .entry(c.text.as_str())
                    .or_insert_with(|| pseudo_embedding(&c.text));
                let dot: f64 = qe.values.iter().zip(&e.values).map(|(a, b)| a * b).sum();
                let nq: f64 = qe.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ne: f64 = e.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                (c.chunk_id.clone(), dot / (nq * ne))
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        for (rank0, (hit, (expected_id, expected_score))) in hits.iter().zip(&scored).enumerate() {
            assert_eq!(
                &hit.chunk_id,
                expected_id,
                "trial {trial} rank {}",
                rank0 + 1
            );
            assert!((hit.score - expected_score).abs() < 1e-12);
            assert_eq!(hit.rank, rank0 + 1);
        }

        // Self-query returns unit similarity.
        let probe = &chunks[rng.gen_range(0..chunks.len())];
        let self_hits = rag::retrieve(&index, &probe.text, 1, &gw).unwrap();
        assert!(
            (self_hits[0].score - 1.0).abs() <= 1e-9,
            "trial {trial}: self-similarity {} not within 1e-9 of 1.0",
            self_hits[0].score
        );
    }
    eprintln!("[acceptance] criterion 6 PASS — 20 random indexes agree 100% with the exhaustive cosine oracle; self-query score = 1.0 ± 1e-9");
}

// ---------------------------------------------------------------------------
// Criterion 7: byte-identical end-to-end reruns through the CLI.
// ---------------------------------------------------------------------------

struct E2eFixture {
    dir: tempfile::TempDir,
}

impl E2eFixture {
    fn build() -> E2eFixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let seed = 7777u64;

        // Source chunks.
        let body =
            "Mountain glaciers feed rivers that irrigate lowland farms through dry summers.\n\n\
Ocean heat uptake delays surface warming while raising sea level through expansion.\n\n\
Peatlands store carbon accumulated over millennia and release it when drained.";
        let doc = ingest_bytes(body.as_bytes(), SourceKind::Report).unwrap();
        let policy = SegmentPolicy {
            max_tokens: 14,
            ..SegmentPolicy::default()
        };
        let chunks = segment(&doc, &policy).unwrap();
        assert!(chunks.len() >= 3);
        std::fs::write(root.join("chunks.jsonl"), write_chunks(&chunks)).unwrap();

        let mut entries: Vec<ScriptEntry> = Vec::new();

        // Self-QA script.
        let qa_cfg = SelfQaConfig {
            min_question_len: 3,
            min_answer_len: 4,
            ..SelfQaConfig::default()
        };
        for (i, chunk) in chunks.iter().enumerate() {
            let question = format!("What long term role does passage {i} describe?");
            entries.push(ScriptEntry {
                key: request_key(&build_question_request(chunk, &qa_cfg)),
                reply: format!("1. {question}"),
            });
            entries.push(ScriptEntry {
                key: request_key(&build_answer_request(&question, chunk, &qa_cfg)),
                reply: format!("Passage {i} describes a slow store and release process."),
            });
        }

        // Seed tasks + two-round bootstrap script, built by replaying the
        // deterministic sampling sequence.
        let seeds = [
            ("s1", "Explain how ocean currents move heat poleward"),
            ("s2", "Summarize the role of soil moisture in heat waves"),
            ("s3", "Describe how tree rings record past droughts"),
        ];
        let seed_raw: String = seeds
            .iter()
            .map(|(id, inst)| {
                serde_json::json!({"task_id": id, "instruction": inst, "answer": format!("{inst} answer.")})
                    .to_string()
                    + "\n"
            })
            .collect();
        std::fs::write(root.join("seeds.jsonl"), &seed_raw).unwrap();

        let si_cfg = SelfInstructConfig {
            fewshot_k: 3,
            rounds: 2,
            candidates_per_round: 2,
            ..SelfInstructConfig::default()
        };
        let pool = read_seed_pool(&seed_raw, seed).unwrap();
        let mut sim = pool.clone();
        let mut rng = pool_rng(&pool);
        let round_candidates = [
            [
                (
                    "Relate wetland loss to coastal flood exposure",
                    "Wetland loss removes a buffer.",
                ),
                (
                    "Assess aerosol cooling against greenhouse warming",
                    "Aerosols offset part of it.",
                ),
            ],
            [
                (
                    "Trace meltwater pulses through river discharge records",
                    "Pulses appear as spring peaks.",
                ),
                (
                    "Compare drought indices for semi arid rangelands",
                    "Indices weigh rain and demand.",
                ),
            ],
        ];
        for (round_idx, cands) in round_candidates.iter().enumerate() {
            let fewshot = sample_fewshot(&sim, si_cfg.fewshot_k, &mut rng).unwrap();
            let reply = cands
                .iter()
                .map(|(i, a)| format!("Instruction: {i}\nAnswer: {a}"))
                .collect::<Vec<_>>()
                .join("\n\n");
            entries.push(ScriptEntry {
                key: request_key(&build_generation_request(&fewshot, &si_cfg)),
                reply,
            });
            for (j, (instruction, answer)) in cands.iter().enumerate() {
                let cand = dataforge_core::selfinstruct::Candidate {
                    instruction: instruction.to_string(),
                    answer: Some(answer.to_string()),
                };
                entries.push(ScriptEntry {
                    key: request_key(&build_validator_request(&cand, &si_cfg)),
                    reply: "yes".into(),
                });
                sim.append(SeedTask {
                    task_id: format!("sim-{round_idx}-{j}"),
                    instruction: instruction.to_string(),
                    answer: Some(answer.to_string()),
                    generation: round_idx as u32 + 1,
                })
                .unwrap();
            }
        }

        // General records + eval items (two quote general outputs).
        let general: Vec<InstructionRecord> = (0..4)
            .map(|i| {
                InstructionRecord::new(
                    format!("General question number {i} about energy balance"),
                    "",
                    format!(
                        "General answer {i} covers radiative forcing feedback loops and inertia"
                    ),
                    Origin::General,
                    BTreeMap::new(),
                )
                .unwrap()
            })
            .collect();
        std::fs::write(root.join("general.jsonl"), dataset::write_records(&general)).unwrap();
        let eval_items = [
            "General answer 0 covers radiative forcing feedback loops in short".to_string(),
            "completely unrelated probe about glacier mass balance seasons".to_string(),
            "covers radiative forcing feedback loops and inertia too".to_string(),
            "another unrelated probe mentioning only single shared words".to_string(),
        ];
        let eval_raw: String = eval_items
            .iter()
            .enumerate()
            .map(|(i, t)| serde_json::json!({"id": format!("e{i}"), "text": t}).to_string() + "\n")
            .collect();
        std::fs::write(root.join("eval.jsonl"), eval_raw).unwrap();

        // Small MCQ suite + scripted replies.
        let disciplines = [
            Discipline::Climate,
            Discipline::Climate,
            Discipline::Ecology,
            Discipline::Ecology,
            Discipline::Environment,
            Discipline::Health,
            Discipline::Geography,
            Discipline::Geography,
        ];
        let suite: Vec<McqItem> = disciplines
            .iter()
            .enumerate()
            .map(|(i, d)| McqItem {
                item_id: format!("m{i:02}"),
                question: format!("Suite question {i}?"),
                options: (0..4).map(|o| format!("suite option {o} of {i}")).collect(),
                correct_index: i % 4,
                discipline: *d,
            })
            .collect();
        std::fs::write(
            root.join("suite.jsonl"),
            dataforge_core::evalkit::write_suite(&suite),
        )
        .unwrap();
        for (i, item) in suite.iter().enumerate() {
            let reply = match i % 3 {
                0 => format!("{}", (b'A' + item.correct_index as u8) as char),
                1 => format!("{}", (b'A' + ((item.correct_index + 1) % 4) as u8) as char),
                _ => "cannot say".to_string(),
            };
            entries.push(ScriptEntry {
                key: request_key(&dataforge_core::evalkit::build_mcq_request(
                    item,
                    DEFAULT_MCQ_TEMPLATE,
                )),
                reply,
            });
        }

        std::fs::write(root.join("script.jsonl"), render_script(&entries)).unwrap();
        std::fs::write(
            root.join("run.toml"),
            format!(
                "rng_seed = {seed}\n\
                 [backend]\nscript_path = \"script.jsonl\"\n\
                 [selfqa]\nmin_question_len = 3\nmin_answer_len = 4\n\
                 [selfinstruct]\nfewshot_k = 3\ncandidates_per_round = 2\n\
                 [eval]\nruns = 2\n\
                 [paths]\nchunks = \"chunks.jsonl\"\nseeds = \"seeds.jsonl\"\nmcq_suite = \"suite.jsonl\"\n"
            ),
        )
        .unwrap();
        E2eFixture { dir }
    }

    fn run_pipeline(&self, out: &str) -> Vec<PathBuf> {
        let root = self.dir.path();
        let o = |name: &str| format!("{out}/{name}");
        dataforge(
            root,
            &[
                "--config",
                "run.toml",
                "forge",
                "selfqa",
                "--out",
                &o("selfqa.jsonl"),
            ],
        );
        dataforge(
            root,
            &[
                "--config",
                "run.toml",
                "forge",
                "selfinstruct",
                "--rounds",
                "2",
                "--out",
                &o("selfinstruct.jsonl"),
                "--pool-out",
                &o("pool.jsonl"),
            ],
        );
        let merge_inputs = format!(
            "{},{},general.jsonl",
            o("selfqa.jsonl"),
            o("selfinstruct.jsonl")
        );
        dataforge(
            root,
            &[
                "--config",
                "run.toml",
                "dataset",
                "merge",
                "--inputs",
                &merge_inputs,
                "--out",
                &o("merged.jsonl"),
            ],
        );
        dataforge(
            root,
            &[
                "--config",
                "run.toml",
                "dataset",
                "decontaminate",
                "--eval",
                "eval.jsonl",
                "--corpus",
                &o("merged.jsonl"),
                "--out-kept",
                &o("kept.jsonl"),
                "--out-removed",
                &o("removed.jsonl"),
            ],
        );
        dataforge(
            root,
            &[
                "--config",
                "run.toml",
                "eval",
                "mcq",
                "--out",
                &o("mcq-report.json"),
            ],
        );
        [
            "selfqa.jsonl",
            "selfinstruct.jsonl",
            "pool.jsonl",
            "merged.jsonl",
            "merged.dataset-manifest.json",
            "kept.jsonl",
            "removed.jsonl",
            "kept.report.json",
            "mcq-report.json",
            "mcq-report.txt",
        ]
        .iter()
        .map(|name| root.join(out).join(name))
        .collect()
    }
}

#[test]
fn criterion_07_end_to_end_reruns_are_byte_identical() {
    let fixture = E2eFixture::build();
    let first = fixture.run_pipeline("outA");
    let second = fixture.run_pipeline("outB");
    assert_eq!(first.len(), second.len());
    for (a, b) in first.iter().zip(&second) {
        let bytes_a = std::fs::read(a).unwrap_or_else(|e| panic!("read {}: {e}", a.display()));
        let bytes_b = std::fs::read(b).unwrap_or_else(|e| panic!("read {}: {e}", b.display()));
        assert_eq!(
            bytes_a,
            bytes_b,
            "{} and {} differ between reruns",
            a.display(),
            b.display()
        );
    }
    // Non-vacuous: the pipeline produced real content.
    let selfqa = read(&first[0]);
    assert_eq!(selfqa.lines().count(), 3);
    let selfinstruct = read(&first[1]);
    assert_eq!(selfinstruct.lines().count(), 4);
    let merged = read(&first[3]);
    assert_eq!(merged.lines().count(), 3 + 4 + 4);
    let removed = read(&first[6]);
    assert!(removed.lines().count() >= 1);
    eprintln!("[acceptance] criterion 7 PASS — selfqa, selfinstruct (2 rounds), merge, decontaminate, and mcq reruns are byte-identical");
}

// ---------------------------------------------------------------------------
// Criterion 8: MCQ harness exactness on a 105-item fixture suite.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_mcq_harness_exactness() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let distribution: [(Discipline, usize, usize); 5] = [
        (Discipline::Climate, 26, 13),
        (Discipline::Ecology, 22, 11),
        (Discipline::Environment, 18, 6),
        (Discipline::Health, 20, 15),
        (Discipline::Geography, 19, 19),
    ];
    let mut suite = Vec::new();
    let mut entries = Vec::new();
    for (discipline, total, correct) in distribution {
        for i in 0..total {
            let item = McqItem {
                item_id: format!("{}-{i:03}", discipline.name()),
                question: format!("Fixture question {i} for {}?", discipline.name()),
                options: (0..4)
                    .map(|o| format!("choice {o} for {} {i}", discipline.name()))
                    .collect(),
                correct_index: i % 4,
                discipline,
            };
            let reply = if i < correct {
                // Correct letter.
                format!(
                    "The answer is {}.",
                    (b'A' + item.correct_index as u8) as char
                )
            } else if i % 2 == 0 {
                // Confidently wrong letter.
                format!("{}", (b'A' + ((item.correct_index + 1) % 4) as u8) as char)
            } else {
                // Unparseable: must be scored incorrect.
                "both A and B look plausible".to_string()
            };
            entries.push(ScriptEntry {
                key: request_key(&dataforge_core::evalkit::build_mcq_request(
                    &item,
                    DEFAULT_MCQ_TEMPLATE,
                )),
                reply,
            });
            suite.push(item);
        }
    }
    std::fs::write(
        root.join("suite.jsonl"),
        dataforge_core::evalkit::write_suite(&suite),
    )
    .unwrap();
    std::fs::write(root.join("script.jsonl"), render_script(&entries)).unwrap();
    std::fs::write(
        root.join("run.toml"),
        "[backend]\nscript_path = \"script.jsonl\"\n[paths]\nmcq_suite = \"suite.jsonl\"\n",
    )
    .unwrap();

    dataforge(
        root,
        &[
            "--config",
            "run.toml",
            "eval",
            "mcq",
            "--runs",
            "1",
            "--declared",
            "26,22,18,20,19",
            "--out",
            "report.json",
        ],
    );
    let report: ObjectiveReport = serde_json::from_str(&read(&root.join("report.json"))).unwrap();
    assert!(report.single_run);
    // Hand-counted accuracies: 13/26, 11/22, 6/18, 15/20, 19/19.
    for (discipline, total, correct) in distribution {
        let stats = &report.per_discipline[&discipline];
        let expected = 100.0 * correct as f64 / total as f64;
        assert!(
            (stats.mean_accuracy - expected).abs() < 1e-9,
            "{}: {} vs hand-counted {expected}",
            discipline.name(),
            stats.mean_accuracy
        );
        assert_eq!(stats.std, 0.0);
        assert_eq!(stats.n_questions, total);
    }
    let expected_weighted = 100.0 * 64.0 / 105.0;
    assert!((report.weighted_average.mean - expected_weighted).abs() < 1e-9);
    eprintln!("[acceptance] criterion 8 PASS — per-discipline accuracies equal hand-counted values on the 105-item suite; unparsed replies scored incorrect");
}

// ---------------------------------------------------------------------------
// Criterion 9: pool law over seeded 5-round bootstrap runs.
// ---------------------------------------------------------------------------

/// Pure-function backend: generation requests yield two novel candidates
/// (derived from the request key) plus one verbatim copy of a pool example;
/// validator requests say yes.
struct BootstrapBackend;

impl Backend for BootstrapBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let user = req.last_user_text().unwrap_or("");
        let text = if user.contains("new, different tasks") {
            let key = request_key(req);
            let (k0, k1, k2, k3) = (&key[0..4], &key[4..8], &key[8..12], &key[12..16]);
            let copied = user
                .lines()
                .find_map(|l| l.strip_prefix("Instruction: "))
                .unwrap_or("fallback example")
                .to_string();
            format!(
                "Instruction: Describe mechanism {k0} linking {k1} to regional climate\n\
                 Answer: Mechanism {k0} operates through {k1} at regional scale.\n\n\
                 Instruction: Quantify process {k2} impacts on {k3} systems over decades\n\
                 Answer: Process {k2} shifts {k3} measurably per decade.\n\n\
                 Instruction: {copied}\n\
                 Answer: A verbatim repeat that the similarity filter must catch."
            )
        } else if user.contains("Reply with the single word yes") {
            "yes".to_string()
        } else {
            "MOCK-FALLBACK".to_string()
        };
        Ok(ChatResponse {
            usage: TokenUsage::default(),
            text,
            finish_reason: FinishReason::Stop,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        Ok(texts.iter().map(|t| gateway::pseudo_embedding(t)).collect())
    }
}

/// Independent 4-gram overlap ratio, re-implemented for the brute-force
/// recomputation.
fn oracle_overlap(candidate: &str, earlier: &str) -> f64 {
    let norm = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || c.is_whitespace() {
                    c
                } else {
                    ' '
                }
            })
            .collect::<String>()
            .split_whitespace()
            .map(str::to_string)
            .collect()
    };
    let a = norm(candidate);
    let b = norm(earlier);
    if a == b && !a.is_empty() {
        return 1.0;
    }
    if a.len() < 4 {
        return 0.0;
    }
    let grams_a: HashSet<&[String]> = a.windows(4).collect();
    let grams_b: HashSet<&[String]> = b.windows(4).collect();
    grams_a.iter().filter(|g| grams_b.contains(*g)).count() as f64 / grams_a.len() as f64
}

#[test]
fn criterion_09_selfinstruct_pool_law() {
    let seeds = vec![
        SeedTask {
            task_id: "s1".into(),
            instruction: "Explain the greenhouse effect to a policymaker".into(),
            answer: Some("Gases trap outgoing heat.".into()),
            generation: 0,
        },
        SeedTask {
            task_id: "s2".into(),
            instruction: "List drivers of ocean acidification".into(),
            answer: Some("Dissolved carbon dioxide lowers pH.".into()),
            generation: 0,
        },
        SeedTask {
            task_id: "s3".into(),
            instruction: "Describe ice albedo feedback".into(),
            answer: Some("Less ice absorbs more heat.".into()),
            generation: 0,
        },
    ];
    let pool = TaskPool::from_tasks(seeds, 20260810).unwrap();
    let cfg = SelfInstructConfig {
        fewshot_k: 3,
        rounds: 5,
        candidates_per_round: 3,
        ..SelfInstructConfig::default()
    };
    let gw = Gateway::from_backend(Arc::new(BootstrapBackend), 2);
    let outcome = run_selfinstruct(&pool, &cfg, &gw).unwrap();

    // Pool growth per round equals that round's accepted count.
    assert_eq!(outcome.rounds.len(), 5);
    let mut expected_len = pool.len();
    for round in &outcome.rounds {
        assert_eq!(
            round.accepted, 2,
            "round {}: two novel candidates accepted",
            round.round
        );
        assert_eq!(
            round.rejected_similar, 1,
            "round {}: the copied candidate rejected",
            round.round
        );
        expected_len += round.accepted;
    }
    assert_eq!(outcome.pool.len(), expected_len);
    assert_eq!(outcome.pool.len(), 3 + 10);

    // Brute-force recomputation: no accepted instruction exceeds the 0.7
    // overlap threshold against anything accepted before it.
    let tasks = outcome.pool.tasks();
    for (i, task) in tasks.iter().enumerate() {
        if task.generation == 0 {
            continue;
        }
        for earlier in &tasks[..i] {
            let ratio = oracle_overlap(&task.instruction, &earlier.instruction);
            assert!(
                ratio <= 0.7 + 1e-12,
                "accepted '{}' overlaps {:.2} with earlier '{}'",
                task.instruction,
                ratio,
                earlier.instruction
            );
        }
    }

    // Reproducible from the seed: identical rerun, and the sampler itself
    // replays identically.
    let rerun = run_selfinstruct(&pool, &cfg, &gw).unwrap();
    assert_eq!(write_pool(&outcome.pool), write_pool(&rerun.pool));
    let mut rng_a = pool_rng(&pool);
    let mut rng_b = pool_rng(&pool);
    let draw_a: Vec<String> = sample_fewshot(&pool, 3, &mut rng_a)
        .unwrap()
        .iter()
        .map(|t| t.task_id.clone())
        .collect();
    let draw_b: Vec<String> = sample_fewshot(&pool, 3, &mut rng_b)
        .unwrap()
        .iter()
        .map(|t| t.task_id.clone())
        .collect();
    assert_eq!(draw_a, draw_b);
    eprintln!("[acceptance] criterion 9 PASS — 5-round pool growth equals accepted counts, overlap law holds under brute-force recomputation, runs replay from the seed");
}

// ---------------------------------------------------------------------------
// Criterion 10: web-harvest selection rules against a hand enumeration.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_webharvest_selection_rules() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let dump = [
        r#"{"question_id":"q01","site":"climate","title":"T1","question_body":"B1","answers":[{"answer_id":"a1","body":"negative one","score":-1,"is_accepted":false}]}"#,
        r#"{"question_id":"q02","site":"climate","title":"T2","question_body":"B2","answers":[{"answer_id":"a1","body":"zero","score":0,"is_accepted":false}]}"#,
        r#"{"question_id":"q03","site":"climate","title":"T3","question_body":"B3","answers":[{"answer_id":"a1","body":"two accepted","score":2,"is_accepted":true}]}"#,
        r#"{"question_id":"q04","site":"climate","title":"T4","question_body":"B4","answers":[{"answer_id":"a1","body":"exactly three","score":3,"is_accepted":false}]}"#,
        r#"{"question_id":"q05","site":"climate","title":"T5","question_body":"B5","answers":[{"answer_id":"a1","body":"five","score":5,"is_accepted":false},{"answer_id":"a2","body":"two","score":2,"is_accepted":true}]}"#,
        r#"{"question_id":"q06","site":"climate","title":"T6","question_body":"B6","answers":[{"answer_id":"a1","body":"four plain","score":4,"is_accepted":false},{"answer_id":"a2","body":"four accepted","score":4,"is_accepted":true}]}"#,
        r#"{"question_id":"q07","site":"climate","title":"T7","question_body":"B7","answers":[{"answer_id":"a9","body":"four high id","score":4,"is_accepted":false},{"answer_id":"a3","body":"four low id","score":4,"is_accepted":false}]}"#,
        r#"{"question_id":"q08","site":"climate","title":"T8","question_body":"B8","answers":[]}"#,
        r#"{"question_id":"q09","site":"climate","title":"T9","question_body":"B9","answers":[{"answer_id":"a1","body":"three","score":3,"is_accepted":false},{"answer_id":"a2","body":"five low id","score":5,"is_accepted":false},{"answer_id":"a3","body":"five high id","score":5,"is_accepted":false}]}"#,
    ]
    .join("\n");
    std::fs::write(root.join("dump.jsonl"), dump + "\n").unwrap();

    dataforge(
        root,
        &[
            "forge",
            "harvest",
            "--dumps",
            "dump.jsonl",
            "--min-score",
            "3",
            "--out",
            "records.jsonl",
        ],
    );

    let records =
        dataforge_core::dataset::read_records(&read(&root.join("records.jsonl"))).unwrap();
    let selected: BTreeMap<String, String> = records
        .iter()
        .map(|r| (r.meta["question_id"].clone(), r.meta["answer_id"].clone()))
        .collect();
    // Hand enumeration: q01 (-1), q02 (0), q03 (2) are below the
    // threshold; q08 has no answers; the rest keep the best answer under
    // score -> accepted -> lowest-id tie-breaks.
    let expected: BTreeMap<String, String> = [
        ("q04", "a1"),
        ("q05", "a1"),
        ("q06", "a2"),
        ("q07", "a3"),
        ("q09", "a2"),
    ]
    .iter()
    .map(|(q, a)| (q.to_string(), a.to_string()))
    .collect();
    assert_eq!(selected, expected);
    for r in &records {
        assert!(r.meta["score"].parse::<i64>().unwrap() >= 3);
        assert_eq!(r.origin, Origin::WebScrape);
    }
    let report: serde_json::Value =
        serde_json::from_str(&read(&root.join("records.report.json"))).unwrap();
    assert_eq!(report["questions_seen"], 9);
    assert_eq!(report["emitted"], 5);
    assert_eq!(report["below_threshold"], 4);
    eprintln!("[acceptance] criterion 10 PASS — threshold-3 / best-answer / tie-break rules match the hand-enumerated oracle");
}
