//! The question-answering pipeline: decompose, retrieve, prompt, generate
//! and repair, execute, interpret.
//!
//! [`Pipeline::answer`] never fails. Whatever went wrong is recorded on the
//! returned [`ConversationTurn`] next to every artifact produced before it.

mod context;
mod events;
mod execute;
mod generate;
mod interpret;
mod session;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub use context::{
    build_context, decompose, decomposition_schema, merge_hits, render_decomposition_prompt, Decomposition,
    EmptyQuestion, PromptContext, ScoredExample, ScoredShape,
};
pub use events::{events_from_turn, ContextItem, TurnEvent};
pub use execute::{execute, ExecutionError, ExecutionLimits, HttpExecutor, SparqlExecutor};
pub use generate::{
    extract_sparql_block, generate_and_repair, render_generation_prompt, Attempt, Generation, GenerationError,
    GenerationFailure, RepairOptions,
};
pub use interpret::{interpret, no_results_text, render_interpretation_prompt, table_summary, NO_RESULTS};
pub use session::LlmSession;

use crate::knowledge::KnowledgeBase;
use crate::llm::{CompletionOptions, LlmProvider};
use crate::results::ResultSet;
use crate::retrieval::EmbeddingProvider;
use crate::validation::DEFAULT_REPAIR_BUDGET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k_examples: usize,
    pub k_classes: usize,
    pub max_revisions: usize,
    /// Rows included in the interpretation prompt.
    pub row_budget: usize,
    /// Rows kept from an execution.
    pub max_rows: usize,
    /// Rows sent in the `results` stream event.
    pub stream_rows: usize,
    pub execution_timeout_ms: u64,
    pub llm_retries: u32,
    pub repair_budget: usize,
    pub temperature: f32,
    /// Used when neither the request nor the retrieved examples name one.
    pub default_endpoint: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_examples: 10,
            k_classes: 10,
            max_revisions: 3,
            row_budget: 50,
            max_rows: 1000,
            stream_rows: 100,
            execution_timeout_ms: 60_000,
            llm_retries: 2,
            repair_budget: DEFAULT_REPAIR_BUDGET,
            temperature: 0.0,
            default_endpoint: None,
        }
    }
}

impl PipelineConfig {
    pub fn limits(&self) -> ExecutionLimits {
        ExecutionLimits { timeout: Duration::from_millis(self.execution_timeout_ms), max_rows: self.max_rows }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// Run every stage.
    #[default]
    Full,
    /// Stop once the final query is known.
    QueryOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRequest {
    pub question: String,
    #[serde(default)]
    pub language_tag: String,
    /// Endpoint to run the query on instead of the best example's.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub mode: AnswerMode,
}

impl TurnRequest {
    pub fn new(question: impl Into<String>) -> Self {
        TurnRequest { question: question.into(), language_tag: String::new(), endpoint: None, mode: AnswerMode::Full }
    }

    pub fn language(mut self, tag: impl Into<String>) -> Self {
        self.language_tag = tag.into();
        self
    }

    pub fn endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = Some(endpoint.into());
        self
    }

    pub fn mode(mut self, mode: AnswerMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub wall_ms: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub llm_calls: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Decomposition,
    Context,
    Generation,
    Execution,
    Interpretation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

/// One run of the pipeline, with every intermediate artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub question: String,
    pub language_tag: String,
    pub mode: AnswerMode,
    pub decomposition: Option<Decomposition>,
    pub context: Option<PromptContext>,
    pub attempts: Vec<Attempt>,
    pub final_query: Option<String>,
    /// Whether `final_query` passed validation.
    pub final_passed: bool,
    /// Endpoint the final query is meant for.
    pub endpoint: Option<String>,
    pub results: Option<ResultSet>,
    pub interpretation: Option<String>,
    pub accounting: Accounting,
    pub warnings: Vec<String>,
    pub error: Option<StageError>,
}

impl ConversationTurn {
    fn new(request: &TurnRequest) -> Self {
        ConversationTurn {
            question: request.question.clone(),
            language_tag: request.language_tag.clone(),
            mode: request.mode,
            decomposition: None,
            context: None,
            attempts: Vec::new(),
            final_query: None,
            final_passed: false,
            endpoint: None,
            results: None,
            interpretation: None,
            accounting: Accounting::default(),
            warnings: Vec::new(),
            error: None,
        }
    }
}

/// The assembled pipeline. Cheap to clone; clones share the knowledge
/// base, providers and the LLM concurrency cap.
#[derive(Clone)]
pub struct Pipeline {
    kb: Arc<KnowledgeBase>,
    llm: Arc<dyn LlmProvider>,
    embedder: Arc<dyn EmbeddingProvider>,
    executor: Arc<dyn SparqlExecutor>,
    config: PipelineConfig,
    llm_limit: Arc<Semaphore>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("llm", &self.llm.model_id())
            .field("embedder", &self.embedder.model_id())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        llm: Arc<dyn LlmProvider>,
        embedder: Arc<dyn EmbeddingProvider>,
        executor: Arc<dyn SparqlExecutor>,
        config: PipelineConfig,
    ) -> Self {
        Pipeline { kb, llm, embedder, executor, config, llm_limit: Arc::new(Semaphore::new(8)) }
    }

    /// Caps concurrent provider calls across every clone sharing `limit`.
    pub fn with_llm_limit(mut self, limit: Arc<Semaphore>) -> Self {
        self.llm_limit = limit;
        self
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn knowledge(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub async fn answer(&self, request: &TurnRequest) -> ConversationTurn {
        self.answer_streaming(request, |_| {}).await
    }

    /// Like [`Pipeline::answer`], passing each [`TurnEvent`] to `emit` as
    /// soon as its stage completes. The events equal
    /// [`events_from_turn`] on the returned turn.
    pub async fn answer_streaming(
        &self,
        request: &TurnRequest,
        mut emit: impl FnMut(TurnEvent) + Send,
    ) -> ConversationTurn {
        let started = Instant::now();
        let mut turn = ConversationTurn::new(request);
        let mut session = LlmSession::new(self.llm.as_ref())
            .limit(&self.llm_limit)
            .retries(self.config.llm_retries)
            .options(CompletionOptions { temperature: self.config.temperature, max_output_tokens: None });

        let outcome = self.run_stages(request, &mut turn, &mut session, &mut emit).await;
        turn.warnings.extend(session.take_warnings());
        turn.accounting = Accounting {
            wall_ms: started.elapsed().as_millis() as u64,
            input_tokens: session.usage().input_tokens,
            output_tokens: session.usage().output_tokens,
            llm_calls: session.calls(),
        };
        match outcome {
            Ok(()) => emit(TurnEvent::Accounting(turn.accounting)),
            Err(e) => {
                turn.error = Some(e.clone());
                emit(TurnEvent::Error(e));
            }
        }
        emit(TurnEvent::Done);
        turn
    }

    async fn run_stages(
        &self,
        request: &TurnRequest,
        turn: &mut ConversationTurn,
        session: &mut LlmSession<'_>,
        emit: &mut (dyn FnMut(TurnEvent) + Send),
    ) -> Result<(), StageError> {
        let stage_error = |stage, message: String| StageError { stage, message, endpoint: None, status: None };
        let question = request.question.trim();
        let decomposition = decompose(question, session)
            .await
            .map_err(|e| stage_error(Stage::Input, e.to_string()))?;
        emit(TurnEvent::Decomposition(decomposition.clone()));
        turn.decomposition = Some(decomposition.clone());

        let ctx = build_context(
            &decomposition,
            question,
            &self.kb,
            self.config.k_examples,
            self.config.k_classes,
            self.embedder.as_ref(),
        )
        .await
        .map_err(|e| stage_error(Stage::Context, e.to_string()))?;
        emit(TurnEvent::context(&ctx));
        turn.context = Some(ctx);
        let ctx = turn.context.as_ref().expect("set above");

        let endpoint = request
            .endpoint
            .clone()
            .or_else(|| ctx.suggested_endpoint.clone())
            .or_else(|| self.config.default_endpoint.clone())
            .or_else(|| self.kb.endpoints.keys().next().cloned())
            .ok_or_else(|| stage_error(Stage::Context, "no endpoint is known to run the query on".into()))?;
        turn.endpoint = Some(endpoint.clone());

        let options = RepairOptions { max_revisions: self.config.max_revisions, repair_budget: self.config.repair_budget };
        let generation = {
            let mut observe = |a: &Attempt| {
                for e in TurnEvent::attempt(a) {
                    emit(e);
                }
            };
            generate_and_repair(ctx, session, &self.kb.schemas, &endpoint, &options, &mut observe).await
        };
        let generation = match generation {
            Ok(g) => g,
            Err(failure) => {
                turn.attempts = failure.attempts;
                return Err(stage_error(Stage::Generation, failure.error.to_string()));
            }
        };
        turn.attempts = generation.attempts;
        turn.final_passed = generation.final_passed;
        let query = generation.final_query.expect("a successful generation has a final query");
        turn.final_query = Some(query.clone());
        emit(TurnEvent::final_query(turn));
        if request.mode == AnswerMode::QueryOnly {
            return Ok(());
        }

        let results = execute(self.executor.as_ref(), &query, &endpoint, &self.config.limits())
            .await
            .map_err(|e| StageError {
                stage: Stage::Execution,
                message: e.message.clone(),
                endpoint: Some(e.endpoint.clone()),
                status: e.status,
            })?;
        emit(TurnEvent::results(&results, self.config.stream_rows));
        let text = interpret(question, &query, &results, session, self.config.row_budget).await;
        turn.results = Some(results);
        emit(TurnEvent::Interpretation { text: text.clone() });
        turn.interpretation = Some(text);
        Ok(())
    }
}
