use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::harvest::QueryExample;
use crate::knowledge::{KnowledgeBase, KnowledgeError, KnowledgeSources};
use crate::llm::{FnLlm, LlmError, PromptKind};
use crate::llm::LlmProvider;
use crate::pipeline::{execute, Accounting, AnswerMode, ExecutionLimits, Pipeline, PipelineConfig, SparqlExecutor, TurnRequest};
use crate::results::ResultSet;
use crate::retrieval::EmbeddingProvider;

use super::folds::{make_folds, FoldError, FoldPlan};
use super::score::{score_f1, Score, ScoreOptions};
use super::stats::{mean, t_half_width_95};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error("building the index for fold {fold}: {source}")]
    Knowledge {
        fold: usize,
        #[source]
        source: KnowledgeError,
    },
    #[error("fold {fold} indexes test examples {ids:?}")]
    Leakage { fold: usize, ids: Vec<String> },
    #[error("repeats must be at least 1")]
    NoRepeats,
}

/// What running one query produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Results(ResultSet),
    Error(String),
    /// There was no query to run.
    NotRun,
}

impl Outcome {
    pub fn results(&self) -> Option<&ResultSet> {
        match self {
            Outcome::Results(rs) => Some(rs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub repeat: usize,
    pub fold: usize,
    pub example_id: String,
    pub question: String,
    pub endpoint_url: String,
    pub reference_sparql: String,
    pub generated_sparql: Option<String>,
    pub generated_passed_validation: bool,
    pub reference: Outcome,
    pub generated: Outcome,
    /// False when the reference itself failed; such records are left out
    /// of every mean.
    pub scored: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accounting: Accounting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Scores a record's outcomes. A failed or missing generated result scores
/// 0, even against an empty reference.
pub fn score_outcomes(reference: &Outcome, generated: &Outcome, options: &ScoreOptions) -> Option<Score> {
    let reference = reference.results()?;
    Some(match generated.results() {
        Some(g) => score_f1(reference, g, options),
        None => Score::ZERO,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Examples present in the fold's index.
    pub indexed_examples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub records: usize,
    pub scored: usize,
    pub reference_failures: usize,
    pub no_query: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Mean over repeats of each repeat's mean F1.
    pub mean_f1: f64,
    pub per_repeat_f1: Vec<f64>,
    /// 95% Student-t interval over the repeat means; absent for one repeat.
    pub ci95: Option<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub plan: FoldPlan,
    pub repeats: usize,
    pub folds: Vec<FoldReport>,
    pub records: Vec<EvaluationRecord>,
    pub summary: EvaluationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    pub repeats: usize,
    /// Test questions answered concurrently within a fold.
    pub parallelism: usize,
    pub schema_fraction: f64,
    pub index_batch: usize,
    pub score: ScoreOptions,
    pub pipeline: PipelineConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 3,
            seed: 0,
            repeats: 3,
            parallelism: 4,
            schema_fraction: 1.0,
            index_batch: 64,
            score: ScoreOptions::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// The system being evaluated. Every fold gets a fresh index built with
/// `embedder` and a pipeline over it sharing `llm` and `executor`.
#[derive(Clone)]
pub struct EvalSystem {
    pub llm: Arc<dyn LlmProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub executor: Arc<dyn SparqlExecutor>,
}

/// Runs k-fold cross-validation over `corpus`.
///
/// `sources` supplies the endpoints and VoID statistics; its examples are
/// ignored. Each fold indexes only its training examples and answers its
/// test questions in query-only mode on the example's endpoint. Reference
/// and generated queries run under the same limits, except that
/// `references` may supply reference results ahead of time. Every repeat
/// reuses the same fold plan.
pub async fn run_evaluation(
    sources: &KnowledgeSources,
    corpus: &[QueryExample],
    system: &EvalSystem,
    config: &EvalConfig,
    references: &BTreeMap<String, ResultSet>,
) -> Result<EvaluationReport, EvalError> {
    if config.repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let ids: Vec<String> = corpus.iter().map(|e| e.id.clone()).collect();
    let plan = make_folds(&ids, config.k, config.seed)?;
    let by_id: BTreeMap<&str, &QueryExample> = corpus.iter().map(|e| (e.id.as_str(), e)).collect();
    let limits = config.pipeline.limits();

    let mut pipelines = Vec::new();
    let mut fold_reports = Vec::new();
    for (f, fold) in plan.folds.iter().enumerate() {
        let train: BTreeSet<&str> = fold.train.iter().map(String::as_str).collect();
        let fold_sources = KnowledgeSources {
            endpoints: sources.endpoints.clone(),
            examples: corpus.iter().filter(|e| train.contains(e.id.as_str())).cloned().collect(),
            void: sources.void.clone(),
        };
        let kb = KnowledgeBase::build(&fold_sources, system.embedder.as_ref(), config.schema_fraction, config.index_batch)
            .await
            .map_err(|source| EvalError::Knowledge { fold: f, source })?;
        let leaked: Vec<String> = fold.test.iter().filter(|id| kb.has_example(id)).cloned().collect();
        if !leaked.is_empty() {
            return Err(EvalError::Leakage { fold: f, ids: leaked });
        }
        fold_reports.push(FoldReport {
            fold: f,
            train: fold.train.clone(),
            test: fold.test.clone(),
            indexed_examples: kb.example_count(),
        });
        pipelines.push(Pipeline::new(
            Arc::new(kb),
            system.llm.clone(),
            system.embedder.clone(),
            system.executor.clone(),
            config.pipeline.clone(),
        ));
    }

    let mut records = Vec::new();
    for repeat in 0..config.repeats {
        for (f, fold) in plan.folds.iter().enumerate() {
            let pipeline = &pipelines[f];
            let tasks = fold.test.iter().map(|id| {
                let example = by_id[id.as_str()];
                evaluate_one(pipeline, system.executor.as_ref(), example, references.get(id), &limits, config, repeat, f)
            });
            records.extend(stream::iter(tasks).buffered(config.parallelism.max(1)).collect::<Vec<_>>().await);
        }
    }
    let summary = summarize(&records, config.repeats);
    Ok(EvaluationReport { plan, repeats: config.repeats, folds: fold_reports, records, summary })
}

#[allow(clippy::too_many_arguments)]
async fn evaluate_one(
    pipeline: &Pipeline,
    executor: &dyn SparqlExecutor,
    example: &QueryExample,
    reference: Option<&ResultSet>,
    limits: &ExecutionLimits,
    config: &EvalConfig,
    repeat: usize,
    fold: usize,
) -> EvaluationRecord {
    let request = TurnRequest::new(&example.question)
        .language(&example.language_tag)
        .endpoint(&example.endpoint_url)
        .mode(AnswerMode::QueryOnly);
    let turn = pipeline.answer(&request).await;
    let reference = match reference {
        Some(rs) => Outcome::Results(rs.clone()),
        None => run(executor, &example.sparql, &example.endpoint_url, limits).await,
    };
    let endpoint = turn.endpoint.as_deref().unwrap_or(&example.endpoint_url);
    let generated = match &turn.final_query {
        Some(q) => run(executor, q, endpoint, limits).await,
        None => Outcome::NotRun,
    };
    let score = score_outcomes(&reference, &generated, &config.score);
    let s = score.unwrap_or(Score::ZERO);
    EvaluationRecord {
        repeat,
        fold,
        example_id: example.id.clone(),
        question: example.question.clone(),
        endpoint_url: example.endpoint_url.clone(),
        reference_sparql: example.sparql.clone(),
        generated_sparql: turn.final_query.clone(),
        generated_passed_validation: turn.final_passed,
        reference,
        generated,
        scored: score.is_some(),
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        accounting: turn.accounting,
        error: turn.error.map(|e| e.message),
    }
}

async fn run(executor: &dyn SparqlExecutor, query: &str, endpoint: &str, limits: &ExecutionLimits) -> Outcome {
    match execute(executor, query, endpoint, limits).await {
        Ok(rs) => Outcome::Results(rs),
        Err(e) => Outcome::Error(e.to_string()),
    }
}

pub fn summarize(records: &[EvaluationRecord], repeats: usize) -> EvaluationSummary {
    let scored: Vec<&EvaluationRecord> = records.iter().filter(|r| r.scored).collect();
    let per_repeat_f1: Vec<f64> = (0..repeats)
        .map(|k| mean(&scored.iter().filter(|r| r.repeat == k).map(|r| r.f1).collect::<Vec<_>>()))
        .collect();
    let mean_f1 = mean(&per_repeat_f1);
    let ci95 = t_half_width_95(&per_repeat_f1).map(|h| ConfidenceInterval {
        low: mean_f1 - h,
        high: mean_f1 + h,
        half_width: h,
    });
    EvaluationSummary {
        records: records.len(),
        scored: scored.len(),
        reference_failures: records.len() - scored.len(),
        no_query: records.iter().filter(|r| r.generated_sparql.is_none()).count(),
        mean_precision: mean(&scored.iter().map(|r| r.precision).collect::<Vec<_>>()),
        mean_recall: mean(&scored.iter().map(|r| r.recall).collect::<Vec<_>>()),
        mean_f1,
        per_repeat_f1,
        ci95,
    }
}

/// A provider that answers every generation prompt with the reference
/// query of the corpus example asking the same question. Useful to check
/// the evaluation machinery itself, which should then score F1 = 1.
pub fn echo_reference_llm(corpus: &[QueryExample]) -> FnLlm {
    let answers: BTreeMap<String, String> = corpus.iter().map(|e| (e.question.clone(), e.sparql.clone())).collect();
    FnLlm::new("echo-reference", move |prompt| match prompt.kind {
        PromptKind::Decompose => Ok(serde_json::json!({ "sub_questions": [prompt.question], "concepts": [] }).to_string()),
        PromptKind::Generate | PromptKind::Repair => answers
            .get(&prompt.question)
            .map(|q| format!("```sparql\n{q}\n```"))
            .ok_or_else(|| LlmError::Scripted { message: format!("no reference for {:?}", prompt.question), transient: false }),
        PromptKind::Interpret => Ok(String::new()),
    })
}
