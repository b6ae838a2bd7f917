//! Zero-shot text classification driven by category descriptors that an
//! instruction-following LLM writes, contrasts, and refines against a small
//! labeled validation set.
//!
//! The [`Engine`] bundles a backend, the prompt templates and a run log; the
//! pipeline stages are methods on it:
//!
//! * bootstrap and contrast: [`Engine::bootstrap_taxonomy`], [`Engine::contrast_taxonomy`]
//! * validation and refinement: [`Engine::refine_loop`]
//! * classification: [`Engine::classify`], [`Engine::classify_batch`]
//! * user-defined topics: [`Engine::add_topic`], [`Engine::revise_topic`]
//! * experiments: [`eval::run_experiment`]

pub mod classify;
pub mod describe;
mod engine;
mod error;
pub mod eval;
mod exec;
pub mod hitl;
pub mod llm;
pub mod model;
pub mod prompt;
pub mod refine;
mod runlog;

pub use engine::{Engine, EngineOptions, REPAIR_INSTRUCTION};
pub use error::{Error, Result};
pub use exec::Execution;
pub use runlog::{LogEvent, RunLog};
