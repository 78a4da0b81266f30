//! Evaluation: result-based F1, k-fold cross-validation, runtime and cost
//! accounting, and triple-pattern profiles of example corpora.

mod accounting;
mod folds;
mod profile;
mod run;
mod score;
mod stats;

use std::path::Path;

pub use accounting::{accounting_report, AccountingReport, Distribution, Prices};
pub use folds::{make_folds, Fold, FoldError, FoldPlan};
pub use profile::{near_duplicates, profile_corpus, CorpusProfile, NearDuplicate, UnparseableExample};
pub use run::{
    echo_reference_llm, run_evaluation, score_outcomes, summarize, ConfidenceInterval, EvalConfig, EvalError,
    EvalSystem, EvaluationRecord, EvaluationReport, EvaluationSummary, FoldReport, Outcome,
};
pub use score::{canonical_rows, canonical_term, harmonic_mean, score_f1, CanonicalTerm, Projection, RowSemantics, Score, ScoreOptions};

use crate::harvest::QueryExample;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads a corpus in JSON lines, one serialized [`QueryExample`] per line.
/// Queries that do not parse are kept with `parsed` unset so that
/// [`profile_corpus`] can report them.
pub fn load_corpus(path: &Path) -> Result<Vec<QueryExample>, CorpusError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<QueryExample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut ex: QueryExample =
            serde_json::from_str(line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        let _ = ex.reparse();
        out.push(ex);
    }
    Ok(out)
}
