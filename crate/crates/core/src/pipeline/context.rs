use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::session::LlmSession;
use crate::harvest::QueryExample;
use crate::knowledge::{endpoint_text, KnowledgeBase};
use crate::llm::{Prompt, PromptKind};
use crate::retrieval::{EmbeddingProvider, IndexError, ItemKind};
use crate::schema::SchemaShape;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub sub_questions: Vec<String>,
    #[serde(default)]
    pub concepts: Vec<String>,
}

impl Decomposition {
    /// The question as its own single sub-question, with no concepts.
    pub fn trivial(question: &str) -> Self {
        Decomposition { sub_questions: vec![question.to_string()], concepts: Vec::new() }
    }

    fn is_valid(&self) -> bool {
        !self.sub_questions.is_empty() && self.sub_questions.iter().all(|q| !q.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("the question is empty")]
pub struct EmptyQuestion;

pub fn decomposition_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "sub_questions": { "type": "array", "items": { "type": "string" } },
            "concepts": { "type": "array", "items": { "type": "string" } }
        },
        "required": ["sub_questions", "concepts"],
        "additionalProperties": false
    })
}

pub fn render_decomposition_prompt(question: &str) -> String {
    format!(
        "Split the question below into standalone sub-questions that can each be answered on their own, \
and list the high-level concepts it mentions that may correspond to classes in a knowledge graph \
(for example Protein, Gene, Disease). A simple question is its own single sub-question. \
Keep the language of the question.\n\n\
Answer with a JSON object of the form {{\"sub_questions\": [\"...\"], \"concepts\": [\"...\"]}}.\n\n\
Question: {question}\n"
    )
}

/// Asks the model to decompose `question`. Malformed output or a provider
/// failure falls back to [`Decomposition::trivial`] with a warning on the
/// session.
pub async fn decompose(question: &str, session: &mut LlmSession<'_>) -> Result<Decomposition, EmptyQuestion> {
    if question.trim().is_empty() {
        return Err(EmptyQuestion);
    }
    let prompt = Prompt {
        kind: PromptKind::Decompose,
        question: question.to_string(),
        text: render_decomposition_prompt(question),
    };
    match session.structured(&prompt, &decomposition_schema()).await {
        Ok(out) => match serde_json::from_value::<Decomposition>(out.value) {
            Ok(d) if d.is_valid() => Ok(d),
            Ok(_) => {
                session.warn("decomposition had no usable sub-questions; using the question as is");
                Ok(Decomposition::trivial(question))
            }
            Err(e) => {
                session.warn(format!("decomposition was malformed ({e}); using the question as is"));
                Ok(Decomposition::trivial(question))
            }
        },
        Err(e) => {
            session.warn(format!("decomposition failed ({e}); using the question as is"));
            Ok(Decomposition::trivial(question))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub item_id: String,
    pub score: f64,
    pub example: QueryExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredShape {
    pub item_id: String,
    pub score: f64,
    pub endpoint_url: String,
    pub shape: SchemaShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub question: String,
    /// Descending score.
    pub examples: Vec<ScoredExample>,
    /// Descending score.
    pub shapes: Vec<ScoredShape>,
    pub endpoint_info: Option<String>,
    /// Endpoint of the best example, if any example was retrieved.
    pub suggested_endpoint: Option<String>,
}

impl PromptContext {
    pub fn empty(question: &str) -> Self {
        PromptContext {
            question: question.to_string(),
            examples: Vec::new(),
            shapes: Vec::new(),
            endpoint_info: None,
            suggested_endpoint: None,
        }
    }
}

/// Keeps the best score per item over several hit lists, then orders by
/// descending score (ties by item id) and keeps `k`.
pub fn merge_hits(lists: impl IntoIterator<Item = Vec<(String, f64)>>, k: usize) -> Vec<(String, f64)> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for list in lists {
        for (id, score) in list {
            best.entry(id).and_modify(|s| *s = s.max(score)).or_insert(score);
        }
    }
    let mut merged: Vec<(String, f64)> = best.into_iter().collect();
    merged.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    merged.truncate(k);
    merged
}

/// Retrieves examples for every sub-question and class shapes for every
/// concept (or for the sub-questions when there are no concepts).
pub async fn build_context(
    d: &Decomposition,
    question: &str,
    kb: &KnowledgeBase,
    k_examples: usize,
    k_classes: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<PromptContext, IndexError> {
    let mut example_lists = Vec::new();
    if k_examples > 0 {
        for q in &d.sub_questions {
            let hits = kb.index.search(provider, q, Some(ItemKind::Example), k_examples).await?;
            example_lists.push(hits.into_iter().map(|h| (h.item.item_id.clone(), h.score)).collect());
        }
    }
    let mut shape_lists = Vec::new();
    if k_classes > 0 {
        let probes = if d.concepts.is_empty() { &d.sub_questions } else { &d.concepts };
        for c in probes {
            let hits = kb.index.search(provider, c, Some(ItemKind::SchemaClass), k_classes).await?;
            shape_lists.push(hits.into_iter().map(|h| (h.item.item_id.clone(), h.score)).collect());
        }
    }
    let examples: Vec<ScoredExample> = merge_hits(example_lists, k_examples)
        .into_iter()
        .filter_map(|(item_id, score)| {
            let example = kb.examples.get(&item_id)?.clone();
            Some(ScoredExample { item_id, score, example })
        })
        .collect();
    let shapes: Vec<ScoredShape> = merge_hits(shape_lists, k_classes)
        .into_iter()
        .filter_map(|(item_id, score)| {
            let s = kb.shapes.get(&item_id)?;
            Some(ScoredShape { item_id, score, endpoint_url: s.endpoint_url.clone(), shape: s.shape.clone() })
        })
        .collect();

    let suggested_endpoint = examples.first().map(|e| e.example.endpoint_url.clone());
    let mut endpoint_urls: Vec<&str> = Vec::new();
    for url in suggested_endpoint
        .iter()
        .map(String::as_str)
        .chain(examples.iter().map(|e| e.example.endpoint_url.as_str()))
        .chain(shapes.iter().map(|s| s.endpoint_url.as_str()))
    {
        if !endpoint_urls.contains(&url) {
            endpoint_urls.push(url);
        }
    }
    let info: Vec<String> = endpoint_urls
        .iter()
        .filter_map(|u| kb.endpoints.get(*u))
        .map(endpoint_text)
        .filter(|t| !t.is_empty())
        .collect();
    Ok(PromptContext {
        question: question.to_string(),
        examples,
        shapes,
        endpoint_info: (!info.is_empty()).then(|| info.join("\n")),
        suggested_endpoint,
    })
}
