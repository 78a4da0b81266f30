use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Accounting, Attempt, ConversationTurn, Decomposition, PromptContext, StageError};
use crate::results::ResultSet;
use crate::validation::ValidationReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub id: String,
    pub score: f64,
    pub endpoint_url: String,
}

/// A progress event of a turn, in stage order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
pub enum TurnEvent {
    Decomposition(Decomposition),
    Context {
        examples: Vec<ContextItem>,
        shapes: Vec<ContextItem>,
        endpoint_info: Option<String>,
    },
    Attempt {
        n: usize,
        sparql: Option<String>,
        response: String,
    },
    ValidationReport {
        n: usize,
        passed: bool,
        syntax_error: Option<String>,
        report: ValidationReport,
    },
    FinalQuery {
        query: String,
        endpoint: Option<String>,
        passed_validation: bool,
    },
    /// At most the configured number of rows; `truncated` is set when rows
    /// were left out.
    Results(ResultSet),
    Interpretation {
        text: String,
    },
    Accounting(Accounting),
    Error(StageError),
    Done,
}

impl TurnEvent {
    /// The event type, used as the SSE event name.
    pub fn name(&self) -> &'static str {
        match self {
            TurnEvent::Decomposition(_) => "decomposition",
            TurnEvent::Context { .. } => "context",
            TurnEvent::Attempt { .. } => "attempt",
            TurnEvent::ValidationReport { .. } => "validation_report",
            TurnEvent::FinalQuery { .. } => "final_query",
            TurnEvent::Results(_) => "results",
            TurnEvent::Interpretation { .. } => "interpretation",
            TurnEvent::Accounting(_) => "accounting",
            TurnEvent::Error(_) => "error",
            TurnEvent::Done => "done",
        }
    }

    /// The event body without its type tag.
    pub fn payload(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("events serialize");
        v.get_mut("data").map(Value::take).unwrap_or_else(|| Value::Object(Default::default()))
    }

    pub(super) fn context(ctx: &PromptContext) -> Self {
        TurnEvent::Context {
            examples: ctx
                .examples
                .iter()
                .map(|e| ContextItem { id: e.example.id.clone(), score: e.score, endpoint_url: e.example.endpoint_url.clone() })
                .collect(),
            shapes: ctx
                .shapes
                .iter()
                .map(|s| ContextItem { id: s.shape.class_iri.clone(), score: s.score, endpoint_url: s.endpoint_url.clone() })
                .collect(),
            endpoint_info: ctx.endpoint_info.clone(),
        }
    }

    pub(super) fn attempt(a: &Attempt) -> [Self; 2] {
        [
            TurnEvent::Attempt { n: a.n, sparql: a.sparql.clone(), response: a.response.clone() },
            TurnEvent::ValidationReport {
                n: a.n,
                passed: a.passed(),
                syntax_error: a.syntax_error.clone(),
                report: a.report.clone(),
            },
        ]
    }

    pub(super) fn final_query(turn: &ConversationTurn) -> Self {
        TurnEvent::FinalQuery {
            query: turn.final_query.clone().unwrap_or_default(),
            endpoint: turn.endpoint.clone(),
            passed_validation: turn.final_passed,
        }
    }

    pub(super) fn results(rs: &ResultSet, rows: usize) -> Self {
        let mut capped = rs.clone();
        capped.truncate(rows);
        TurnEvent::Results(capped)
    }
}

/// The events a live run of `turn` emitted, rebuilt from the turn record.
pub fn events_from_turn(turn: &ConversationTurn, stream_rows: usize) -> Vec<TurnEvent> {
    let mut events = Vec::new();
    if let Some(d) = &turn.decomposition {
        events.push(TurnEvent::Decomposition(d.clone()));
    }
    if let Some(ctx) = &turn.context {
        events.push(TurnEvent::context(ctx));
    }
    for a in &turn.attempts {
        events.extend(TurnEvent::attempt(a));
    }
    if turn.final_query.is_some() {
        events.push(TurnEvent::final_query(turn));
    }
    if let Some(rs) = &turn.results {
        events.push(TurnEvent::results(rs, stream_rows));
    }
    if let Some(text) = &turn.interpretation {
        events.push(TurnEvent::Interpretation { text: text.clone() });
    }
    match &turn.error {
        Some(e) => events.push(TurnEvent::Error(e.clone())),
        None => events.push(TurnEvent::Accounting(turn.accounting)),
    }
    events.push(TurnEvent::Done);
    events
}
