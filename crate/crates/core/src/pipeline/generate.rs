use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::context::PromptContext;
use super::session::LlmSession;
use crate::llm::{LlmError, Prompt, PromptKind};
use crate::schema::ClassPropertyMatrix;
use crate::sparql::parse_query;
use crate::validation::{render_repair_prompt, validate, ValidationReport, DEFAULT_REPAIR_BUDGET};

const INSTRUCTIONS: &str = "You write SPARQL queries that answer questions over the SPARQL endpoints described below. \
Base the query on the example queries and on the classes and predicates listed in the schema shapes; \
do not invent IRIs. When part of the data lives in another endpoint, reach it with a SERVICE clause. \
Declare every prefix you use. Return exactly one query in a ```sparql code block.";

/// The generation prompt: instructions, endpoint descriptions, examples
/// (best first, each fenced and labeled with its endpoint), shapes, and
/// finally the question.
pub fn render_generation_prompt(ctx: &PromptContext) -> String {
    let mut out = String::from(INSTRUCTIONS);
    out.push_str("\n\n");
    if let Some(info) = &ctx.endpoint_info {
        let _ = write!(out, "Endpoints:\n{}\n\n", info.trim_end());
    }
    if !ctx.examples.is_empty() {
        out.push_str("Example queries:\n\n");
        for e in &ctx.examples {
            let _ = write!(
                out,
                "Question: {}\nEndpoint: {}\n```sparql\n{}\n```\n\n",
                e.example.question.trim(),
                e.example.endpoint_url,
                e.example.sparql.trim()
            );
        }
    }
    if !ctx.shapes.is_empty() {
        out.push_str("Schema shapes (ShEx):\n\n");
        for s in &ctx.shapes {
            let _ = write!(out, "Endpoint: {}\n```shex\n{}\n```\n\n", s.endpoint_url, s.shape.rendered_shex.trim());
        }
    }
    let _ = writeln!(out, "Question: {}", ctx.question.trim());
    out
}

/// Fenced code blocks in order of appearance. An unterminated fence runs
/// to the end of the text.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// Candidate query text from a model answer, or the reason none was found.
fn extract(text: &str) -> Result<String, String> {
    let blocks = fenced_blocks(text);
    if blocks.is_empty() {
        let whole = text.trim();
        return parse_query(whole).map(|_| whole.to_string()).map_err(|e| e.to_string());
    }
    let mut first_error = None;
    for b in blocks {
        match parse_query(b.trim()) {
            Ok(_) => return Ok(b.trim().to_string()),
            Err(e) => {
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    Err(first_error.unwrap_or_default())
}

/// The first fenced block that parses as SPARQL. Without fences, the whole
/// text if it parses.
pub fn extract_sparql_block(llm_text: &str) -> Option<String> {
    extract(llm_text).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub n: usize,
    /// The raw model answer.
    pub response: String,
    /// The extracted query, absent when nothing parsed.
    pub sparql: Option<String>,
    pub syntax_error: Option<String>,
    pub report: ValidationReport,
}

impl Attempt {
    pub fn passed(&self) -> bool {
        self.sparql.is_some() && self.report.passed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub attempts: Vec<Attempt>,
    pub final_query: Option<String>,
    /// False when `final_query` is the fallback: the last parsing attempt
    /// after revisions ran out.
    pub final_passed: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("no SPARQL query could be extracted from {attempts} model answer(s)")]
    NoQueryProduced { attempts: usize },
    #[error(transparent)]
    Provider(#[from] LlmError),
}

/// Generation stopped early. The attempts made so far are kept.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct GenerationFailure {
    pub attempts: Vec<Attempt>,
    pub error: GenerationError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairOptions {
    pub max_revisions: usize,
    pub repair_budget: usize,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions { max_revisions: 3, repair_budget: DEFAULT_REPAIR_BUDGET }
    }
}

fn syntax_feedback(error: &str) -> String {
    format!(
        "Your previous answer did not contain a valid SPARQL query ({error}).\n\
Return the query in a single ```sparql code block.\n"
    )
}

/// Generates a query, then revises it while validation fails and
/// revisions remain. `observe` sees each attempt as soon as it is checked.
pub async fn generate_and_repair(
    ctx: &PromptContext,
    session: &mut LlmSession<'_>,
    schemas: &BTreeMap<String, ClassPropertyMatrix>,
    home_endpoint: &str,
    options: &RepairOptions,
    observe: &mut (dyn FnMut(&Attempt) + Send),
) -> Result<Generation, GenerationFailure> {
    let base = render_generation_prompt(ctx);
    let mut prompt = Prompt { kind: PromptKind::Generate, question: ctx.question.clone(), text: base.clone() };
    let mut attempts: Vec<Attempt> = Vec::new();
    loop {
        let completion = match session.complete(&prompt).await {
            Ok(c) => c,
            Err(e) => return Err(GenerationFailure { attempts, error: e.into() }),
        };
        let n = attempts.len();
        let attempt = match extract(&completion.text) {
            Ok(sparql) => {
                let parsed = parse_query(&sparql).expect("extract only returns parsing text");
                let report = validate(&parsed, schemas, home_endpoint);
                Attempt { n, response: completion.text, sparql: Some(sparql), syntax_error: None, report }
            }
            Err(error) => Attempt {
                n,
                response: completion.text,
                sparql: None,
                syntax_error: Some(error),
                report: ValidationReport { passed: false, issues: Vec::new(), notes: Vec::new() },
            },
        };
        observe(&attempt);
        let feedback = match (&attempt.sparql, &attempt.syntax_error) {
            (Some(q), _) if !attempt.report.passed => render_repair_prompt(&attempt.report, q, options.repair_budget).ok(),
            (None, Some(e)) => Some(syntax_feedback(e)),
            _ => None,
        };
        let passed = attempt.passed();
        attempts.push(attempt);
        if passed {
            break;
        }
        if attempts.len() > options.max_revisions {
            break;
        }
        let Some(feedback) = feedback else { break };
        prompt = Prompt { kind: PromptKind::Repair, question: ctx.question.clone(), text: format!("{base}\n{feedback}") };
    }

    if let Some(a) = attempts.iter().find(|a| a.passed()) {
        let final_query = a.sparql.clone();
        return Ok(Generation { attempts, final_query, final_passed: true });
    }
    match attempts.iter().rev().find_map(|a| a.sparql.clone()) {
        Some(q) => {
            session.warn("revisions ran out; using the last query that parsed despite validation errors");
            Ok(Generation { attempts, final_query: Some(q), final_passed: false })
        }
        None => {
            let error = GenerationError::NoQueryProduced { attempts: attempts.len() };
            Err(GenerationFailure { attempts, error })
        }
    }
}
