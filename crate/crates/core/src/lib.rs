//! Core library for the dataforge toolkit.
//!
//! dataforge builds instruction-tuning datasets for climate question answering
//! from three sources (document-grounded QA generation, community Q&A dumps,
//! and few-shot instruction bootstrapping), keeps evaluation suites honest via
//! n-gram decontamination, and ships the evaluation harnesses (multiple-choice
//! accuracy and rubric-based judging) plus retrieval utilities (flat cosine
//! index, scholarly search) used around them.
//!
//! Every model call goes through [`gateway::Gateway`], which fronts either a
//! remote chat-completion endpoint or a deterministic scripted mock, so the
//! entire pipeline is testable offline and reproducible run-to-run.

pub mod corpus;
pub mod dataset;
pub mod evalkit;
pub mod gateway;
pub mod litsearch;
pub mod rag;
pub mod selfinstruct;
pub mod selfqa;
pub mod text;
pub mod webharvest;

pub use dataset::{Dataset, InstructionRecord, Origin};
pub use gateway::{BackendConfig, ChatRequest, ChatResponse, EmbeddingVector, Gateway};
pub use text::TokenRule;
