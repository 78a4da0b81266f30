use super::session::LlmSession;
use crate::llm::{Prompt, PromptKind};
use crate::results::ResultSet;

/// Opening words of every answer to a query that matched nothing.
pub const NO_RESULTS: &str = "No results were found";

pub fn no_results_text(question: &str) -> String {
    format!("{NO_RESULTS} for \"{}\": the query ran but matched nothing in the data.", question.trim())
}

fn rows_block(rs: &ResultSet, row_budget: usize) -> String {
    if let Some(b) = rs.boolean {
        return format!("ASK result: {b}");
    }
    let shown = rs.len().min(row_budget);
    let mut note = format!("{} row(s)", rs.len());
    if rs.truncated {
        note.push_str(" (more rows exist but were cut off)");
    }
    if shown < rs.len() {
        note.push_str(&format!(", first {shown} shown"));
    }
    format!("{note}:\n```tsv\n{}\n```", rs.to_table(row_budget))
}

/// The interpretation prompt. At most `row_budget` rows are included.
pub fn render_interpretation_prompt(question: &str, query: &str, rs: &ResultSet, row_budget: usize) -> String {
    format!(
        "A SPARQL query was run to answer the question below. Explain the results to the user concisely, \
in the language of the question. Do not make up facts that are not in the results.\n\n\
Question: {}\n\nQuery:\n```sparql\n{}\n```\n\nResults, {}\n",
        question.trim(),
        query.trim(),
        rows_block(rs, row_budget)
    )
}

/// Plain summary used when the model cannot be reached.
pub fn table_summary(rs: &ResultSet, row_budget: usize) -> String {
    format!("Results, {}", rows_block(rs, row_budget))
}

/// Explains `rs` in the context of `question`. Empty results get a fixed
/// text without a model call; provider failures fall back to
/// [`table_summary`].
pub async fn interpret(
    question: &str,
    query: &str,
    rs: &ResultSet,
    session: &mut LlmSession<'_>,
    row_budget: usize,
) -> String {
    if rs.is_empty() {
        return no_results_text(question);
    }
    let prompt = Prompt {
        kind: PromptKind::Interpret,
        question: question.to_string(),
        text: render_interpretation_prompt(question, query, rs, row_budget),
    };
    match session.complete(&prompt).await {
        Ok(c) if !c.text.trim().is_empty() => c.text,
        Ok(_) => {
            session.warn("interpretation was empty; showing the results table");
            table_summary(rs, row_budget)
        }
        Err(e) => {
            session.warn(format!("interpretation failed ({e}); showing the results table"));
            table_summary(rs, row_budget)
        }
    }
}
