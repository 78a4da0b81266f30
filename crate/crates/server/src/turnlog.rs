//! One JSON line per finished turn.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sparqlgen_core::pipeline::ConversationTurn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLogEntry {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub route: String,
    pub dataset: String,
    pub generation: u64,
    pub turn: ConversationTurn,
}

pub struct TurnLog {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl TurnLog {
    pub fn new(sink: impl Write + Send + 'static) -> Self {
        TurnLog { sink: Mutex::new(Box::new(sink)) }
    }

    /// Appends to `target`, or writes to stdout when it is `-`.
    pub fn open(target: &str) -> io::Result<Self> {
        if target == "-" {
            return Ok(TurnLog::new(io::stdout()));
        }
        let file = OpenOptions::new().create(true).append(true).open(Path::new(target))?;
        Ok(TurnLog::new(file))
    }

    pub fn record(&self, entry: &TurnLogEntry) {
        let mut line = match serde_json::to_string(entry) {
            Ok(line) => line,
            Err(e) => {
                tracing::error!(error = %e, "turn does not serialize");
                return;
            }
        };
        line.push('\n');
        let mut sink = self.sink.lock();
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|_| sink.flush()) {
            tracing::error!(error = %e, "cannot write turn log");
        }
    }
}

pub fn read_entries(text: &str) -> Result<Vec<TurnLogEntry>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
