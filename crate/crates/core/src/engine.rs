use std::sync::Arc;

use crate::error::Result;
use crate::exec::Execution;
use crate::llm::{LlmBackend, PromptRequest};
use crate::prompt::{TemplateSet, DEFAULT_SAMPLE_CHARS};
use crate::runlog::{LogEvent, RunLog};

/// Appended to a prompt whose reply held no usable JSON.
pub const REPAIR_INSTRUCTION: &str = "Return only the JSON object";

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub execution: Execution,
    /// Worker threads for batch classification and bootstrap.
    pub concurrency_cap: usize,
    /// Character budget per sample line in prompts.
    pub sample_chars: usize,
    /// Extra attempts after a reply that fails to parse.
    pub max_reprompts: u32,
    /// Classification prompts longer than this fail instead of truncating.
    pub max_prompt_chars: usize,
    /// Categories per contrast prompt.
    pub contrast_batch_size: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            execution: Execution::default(),
            concurrency_cap: 4,
            sample_chars: DEFAULT_SAMPLE_CHARS,
            max_reprompts: 2,
            max_prompt_chars: 400_000,
            contrast_batch_size: 12,
        }
    }
}

/// Shared context for every pipeline stage: backend, templates, run log and
/// execution settings. Stage operations live in their own modules as
/// methods on this type.
#[derive(Clone)]
pub struct Engine {
    backend: Arc<dyn LlmBackend>,
    templates: TemplateSet,
    log: RunLog,
    options: EngineOptions,
}

impl Engine {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Engine {
            backend,
            templates: TemplateSet::builtin(),
            log: RunLog::disabled(),
            options: EngineOptions::default(),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_log(mut self, log: RunLog) -> Self {
        self.log = log;
        self
    }

    pub fn with_options(mut self, options: EngineOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.options.execution = execution;
        self
    }

    pub fn backend(&self) -> &dyn LlmBackend {
        self.backend.as_ref()
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub(crate) fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.options.execution.map(self.options.concurrency_cap, items, f)
    }

    /// Completes `request` and parses the reply, re-prompting with
    /// [`REPAIR_INSTRUCTION`] up to `max_reprompts` times on parse failure.
    /// Backend errors are returned immediately.
    pub(crate) fn complete_parsed<T>(
        &self,
        event: LogEvent,
        request: &PromptRequest,
        parse: impl Fn(&str) -> Result<T>,
    ) -> Result<T> {
        let mut attempt = request.clone();
        let mut tries = 0;
        loop {
            let event = event.clone().prompt(&attempt);
            let reply = match self.backend.complete(&attempt) {
                Ok(r) => r,
                Err(e) => {
                    self.log.record(event.ok(false).note(e.to_string()));
                    return Err(e.into());
                }
            };
            match parse(&reply) {
                Ok(v) => {
                    self.log.record(event);
                    return Ok(v);
                }
                Err(e) if tries < self.options.max_reprompts => {
                    self.log.record(event.ok(false).note(format!("re-prompting: {e}")));
                    tries += 1;
                    attempt = request.clone();
                    attempt.user_text = format!("{}\n\n{REPAIR_INSTRUCTION}", request.user_text);
                }
                Err(e) => {
                    self.log.record(event.ok(false).note(e.to_string()));
                    return Err(e);
                }
            }
        }
    }
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("model", &self.backend.capabilities().model_id)
            .field("options", &self.options)
            .finish()
    }
}
