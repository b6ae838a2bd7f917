//! JSON-lines event log for pipeline runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::llm::PromptRequest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEvent {
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub stage: String,
    pub iteration: u32,
    pub category: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<[String; 2]>,
    pub prompt_sha256: Option<String>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl LogEvent {
    pub fn new(stage: impl ToString, iteration: u32) -> Self {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        LogEvent {
            ts,
            stage: stage.to_string(),
            iteration,
            category: None,
            accuracy: None,
            pair: None,
            prompt_sha256: None,
            ok: true,
            note: None,
        }
    }

    pub fn category(mut self, name: &str) -> Self {
        self.category = Some(name.to_string());
        self
    }

    pub fn accuracy(mut self, accuracy: f64) -> Self {
        self.accuracy = Some(accuracy);
        self
    }

    pub fn pair(mut self, correct: &str, wrong: &str) -> Self {
        self.pair = Some([correct.to_string(), wrong.to_string()]);
        self
    }

    pub fn prompt(mut self, request: &PromptRequest) -> Self {
        self.prompt_sha256 = Some(request.sha256());
        self
    }

    pub fn ok(mut self, ok: bool) -> Self {
        self.ok = ok;
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

enum Sink {
    Writer(Box<dyn Write + Send>),
    Memory(Vec<String>),
}

/// Cheap to clone; clones share one sink.
#[derive(Clone, Default)]
pub struct RunLog {
    sink: Option<Arc<Mutex<Sink>>>,
}

impl std::fmt::Debug for RunLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunLog").field("enabled", &self.sink.is_some()).finish()
    }
}

impl RunLog {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn to_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::to_writer(BufWriter::new(file)))
    }

    pub fn to_writer(writer: impl Write + Send + 'static) -> Self {
        RunLog {
            sink: Some(Arc::new(Mutex::new(Sink::Writer(Box::new(writer))))),
        }
    }

    pub fn in_memory() -> Self {
        RunLog {
            sink: Some(Arc::new(Mutex::new(Sink::Memory(Vec::new())))),
        }
    }

    pub fn record(&self, event: LogEvent) {
        let Some(sink) = &self.sink else { return };
        let line = serde_json::to_string(&event).expect("log event serializes");
        let mut sink = sink.lock().unwrap_or_else(|e| e.into_inner());
        match &mut *sink {
            Sink::Writer(w) => {
                if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                    tracing::warn!(error = %e, "run log write failed");
                }
            }
            Sink::Memory(lines) => lines.push(line),
        }
    }

    /// Recorded lines of an in-memory log; empty for other sinks.
    pub fn lines(&self) -> Vec<String> {
        let Some(sink) = &self.sink else { return Vec::new() };
        match &*sink.lock().unwrap_or_else(|e| e.into_inner()) {
            Sink::Memory(lines) => lines.clone(),
            Sink::Writer(_) => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_serialize_as_json_lines() {
        let log = RunLog::in_memory();
        log.record(
            LogEvent::new("refine", 2)
                .category("A")
                .accuracy(0.5)
                .prompt(&PromptRequest::new("x")),
        );
        log.record(LogEvent::new("adapt", 2).pair("A", "B").ok(false));
        let lines = log.lines();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(v["stage"], "refine");
        assert_eq!(v["accuracy"], 0.5);
        assert_eq!(v["prompt_sha256"].as_str().unwrap().len(), 64);
        let v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        assert_eq!(v["pair"], serde_json::json!(["A", "B"]));
        assert_eq!(v["ok"], false);
    }

    #[test]
    fn file_sink_writes_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let log = RunLog::to_file(&path).unwrap();
        log.record(LogEvent::new("contrast", 0));
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
