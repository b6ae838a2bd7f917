//! Settings from the config file merged with command-line flags. Flags win;
//! the environment only supplies credentials.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;
use tagforge::llm::{HttpBackend, HttpConfig, LlmBackend, MockBackend};
use tagforge::model::{AdaptTemplate, RefinementConfig, SamplingStrategy};
use tagforge::prompt::TemplateSet;
use tagforge::{Engine, EngineOptions, Execution, RunLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// LLM backend
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Key-value config file (TOML) mirroring these flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write a JSON-lines event log here
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
    /// Directory with template overrides
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    /// Print errors as JSON on stderr
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Chat-completions server root (http backend)
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    /// Model name (http backend)
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Request timeout in seconds (http backend)
    #[arg(long, global = true)]
    pub timeout_secs: Option<u64>,
    /// Worker threads for batch classification
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Run batch work on one thread
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Score labels from completions instead of log-probabilities
    #[arg(long, global = true)]
    pub no_logprobs: bool,
}

/// Refinement knobs, accepted by `refine`, `eval` and `run`.
#[derive(Debug, Clone, Default, Args)]
pub struct RefineArgs {
    /// Per-category accuracy that ends refinement
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<u32>,
    /// Validation samples per category (refine only)
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub min_confusion_count: Option<u64>,
    #[arg(long)]
    pub top_k_pairs: Option<usize>,
    #[arg(long, value_enum)]
    pub adapt_template: Option<AdaptTemplateArg>,
    /// Adapt confused pairs once after the loop instead of every round
    #[arg(long)]
    pub adapt_after_loop: bool,
    /// Resample validation documents every round
    #[arg(long)]
    pub fresh_samples: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdaptTemplateArg {
    InterClass,
    IntraClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    SeededRandom,
    FirstN,
}

impl From<StrategyArg> for SamplingStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::SeededRandom => SamplingStrategy::SeededRandom,
            StrategyArg::FirstN => SamplingStrategy::FirstN,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub seed: Option<u64>,
    pub log: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub json_errors: Option<bool>,
    pub verbose: Option<bool>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub concurrency: Option<usize>,
    pub sequential: Option<bool>,
    pub no_logprobs: Option<bool>,
    pub threshold: Option<f64>,
    pub max_iters: Option<u32>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub strategy: Option<SamplingStrategy>,
    pub min_confusion_count: Option<u64>,
    pub top_k_pairs: Option<usize>,
    pub adapt_template: Option<AdaptTemplate>,
    pub adapt_after_loop: Option<bool>,
    pub fresh_samples: Option<bool>,
}

impl FileConfig {
    /// Parses `path`; relative paths inside are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.log, &mut config.templates].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(config)
    }
}

#[derive(Debug)]
pub struct Settings {
    pub globals: GlobalArgs,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(globals: GlobalArgs) -> Result<Self> {
        let file = match &globals.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Settings { globals, file })
    }

    pub fn verbose(&self) -> bool {
        self.globals.verbose || self.file.verbose.unwrap_or(false)
    }

    pub fn seed(&self) -> Option<u64> {
        self.globals.seed.or(self.file.seed)
    }

    pub fn default_strategy(&self) -> SamplingStrategy {
        self.file.strategy.unwrap_or_default()
    }

    pub fn default_n(&self) -> Option<usize> {
        self.file.n
    }

    fn backend(&self) -> Result<Arc<dyn LlmBackend>> {
        let kind = self.globals.backend.or(self.file.backend).unwrap_or(BackendKind::Http);
        Ok(match kind {
            BackendKind::Mock => Arc::new(MockBackend::new().with_seed(self.seed().unwrap_or(0))),
            BackendKind::Http => {
                let env = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
                let base = self
                    .globals
                    .base_url
                    .clone()
                    .or_else(|| self.file.base_url.clone())
                    .or_else(|| env("LLM_BASE_URL"));
                let model = self
                    .globals
                    .model
                    .clone()
                    .or_else(|| self.file.model.clone())
                    .or_else(|| env("LLM_MODEL"));
                let (Some(base), Some(model)) = (base, model) else {
                    bail!("the http backend needs --base-url and --model (or LLM_BASE_URL and LLM_MODEL)");
                };
                let mut config = HttpConfig::new(base, model);
                config.api_key = env("LLM_API_KEY");
                if let Some(s) = self.globals.timeout_secs.or(self.file.timeout_secs) {
                    config.timeout = Duration::from_secs(s);
                }
                if let Some(c) = self.concurrency() {
                    config.max_concurrent = c;
                }
                config.use_logprobs = !(self.globals.no_logprobs || self.file.no_logprobs.unwrap_or(false));
                Arc::new(HttpBackend::new(config))
            }
        })
    }

    fn concurrency(&self) -> Option<usize> {
        self.globals.concurrency.or(self.file.concurrency)
    }

    pub fn engine(&self) -> Result<Engine> {
        let mut options = EngineOptions::default();
        if self.globals.sequential || self.file.sequential.unwrap_or(false) {
            options.execution = Execution::Sequential;
        }
        if let Some(c) = self.concurrency() {
            options.concurrency_cap = c.max(1);
        }
        let mut engine = Engine::new(self.backend()?).with_options(options);
        if let Some(dir) = self.globals.templates.as_ref().or(self.file.templates.as_ref()) {
            engine = engine.with_templates(TemplateSet::from_dir(dir)?);
        }
        if let Some(path) = self.globals.log.as_ref().or(self.file.log.as_ref()) {
            engine = engine.with_log(RunLog::to_file(path)?);
        }
        Ok(engine)
    }

    /// Defaults, then the config file, then `args`.
    pub fn refinement(&self, args: &RefineArgs) -> Result<RefinementConfig> {
        let f = &self.file;
        let mut c = RefinementConfig::default();
        if let Some(v) = args.threshold.or(f.threshold) {
            c.accuracy_threshold = v;
        }
        if let Some(v) = args.max_iters.or(f.max_iters) {
            c.max_iterations = v;
        }
        if let Some(v) = f.n {
            c.n_bootstrap = v;
        }
        if let Some(v) = args.m.or(f.m) {
            c.m_validate = v;
        }
        if let Some(v) = f.strategy {
            c.sampling_strategy = v;
        }
        if let Some(v) = args.min_confusion_count.or(f.min_confusion_count) {
            c.min_confusion_count = v;
        }
        if let Some(v) = args.top_k_pairs.or(f.top_k_pairs) {
            c.top_k_pairs = v;
        }
        c.adapt_template = match args.adapt_template {
            Some(AdaptTemplateArg::InterClass) => AdaptTemplate::InterClass,
            Some(AdaptTemplateArg::IntraClass) => AdaptTemplate::IntraClass,
            None => f.adapt_template.unwrap_or_default(),
        };
        c.adapt_after_loop = args.adapt_after_loop || f.adapt_after_loop.unwrap_or(false);
        c.fresh_validation_samples = args.fresh_samples || f.fresh_samples.unwrap_or(false);
        if let Some(s) = self.seed() {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}
