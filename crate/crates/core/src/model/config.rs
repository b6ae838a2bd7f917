use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    #[default]
    SeededRandom,
    FirstN,
}

/// Prompt used for confusion-pair adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdaptTemplate {
    #[default]
    InterClass,
    IntraClass,
}

/// Knobs for bootstrap sampling and the validate/refine loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    /// Samples per category used to bootstrap a descriptor.
    pub n_bootstrap: usize,
    /// Validation samples per category.
    pub m_validate: usize,
    /// Minimum per-category accuracy that ends the loop.
    pub accuracy_threshold: f64,
    /// Upper bound on refinement rounds.
    pub max_iterations: u32,
    pub seed: u64,
    pub sampling_strategy: SamplingStrategy,
    /// Off-diagonal count a confusion cell needs before it is adapted.
    pub min_confusion_count: u64,
    pub top_k_pairs: usize,
    pub adapt_template: AdaptTemplate,
    /// Run pair adaptation once after the loop instead of inside every round.
    pub adapt_after_loop: bool,
    /// Draw a fresh `m_validate` subset from the validation pool each round.
    pub fresh_validation_samples: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            n_bootstrap: 20,
            m_validate: 25,
            accuracy_threshold: 0.80,
            max_iterations: 4,
            seed: 0,
            sampling_strategy: SamplingStrategy::SeededRandom,
            min_confusion_count: 2,
            top_k_pairs: 3,
            adapt_template: AdaptTemplate::InterClass,
            adapt_after_loop: false,
            fresh_validation_samples: false,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_bootstrap == 0 {
            return bad("n_bootstrap must be positive");
        }
        if self.m_validate == 0 {
            return bad("m_validate must be positive");
        }
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold <= 1.0) {
            return bad("accuracy_threshold must lie in (0, 1]");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if self.min_confusion_count == 0 {
            return bad("min_confusion_count must be at least 1");
        }
        if self.top_k_pairs == 0 {
            return bad("top_k_pairs must be at least 1");
        }
        Ok(())
    }
}
