//! Benchmark harness for LLM-based Solidity vulnerability detection.
//!
//! The crate covers the full evaluation loop: ingesting and normalizing a
//! Solidity corpus, aggregating static-analyzer findings into consensus
//! ground-truth labels, rendering zero-shot / few-shot / chain-of-thought
//! prompts, driving chat-completion endpoints with caching and retries,
//! scoring verdicts (classification, MCC, BLEU/ROUGE), and stress-testing
//! models with injected bug mutants.

pub mod adversarial;
pub mod annotate;
pub mod corpus;
pub mod error;
pub mod llmclient;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod taxonomy;

pub use error::{Error, Result};
