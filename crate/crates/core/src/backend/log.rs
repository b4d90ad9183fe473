use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// One line per `complete` call; retries are folded into `statuses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLogEntry {
    pub prompt_hash: String,
    pub backend: String,
    pub model: String,
    pub temperature: f64,
    pub attempts: u32,
    /// HTTP status per attempt, 0 for a transport failure.
    pub statuses: Vec<u16>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_chars: Option<usize>,
    pub latency_ms: u64,
}

/// Append-only request/response log shared by concurrent callers.
#[derive(Debug, Default)]
pub struct CallLog {
    entries: Mutex<Vec<CallLogEntry>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl CallLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Appends JSON lines to `path` in addition to keeping them in memory.
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { entries: Mutex::default(), sink: Some(Mutex::new(BufWriter::new(file))) })
    }

    pub fn record(&self, entry: CallLogEntry) {
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().expect("call log poisoned");
            let line = serde_json::to_string(&entry).expect("entry serializes");
            if writeln!(w, "{line}").and_then(|_| w.flush()).is_err() {
                ::log::error!("failed to append call log entry for {}", entry.prompt_hash);
            }
        }
        ::log::info!(
            "call prompt={} backend={} temp={} attempts={} ok={}",
            entry.prompt_hash,
            entry.backend,
            entry.temperature,
            entry.attempts,
            entry.ok
        );
        self.entries.lock().expect("call log poisoned").push(entry);
    }

    pub fn entries(&self) -> Vec<CallLogEntry> {
        self.entries.lock().expect("call log poisoned").clone()
    }
}
