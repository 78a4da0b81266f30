//! Language-model providers.
//!
//! Every call carries a [`Prompt`] tagged with the pipeline stage that
//! issued it, and every answer reports exact token usage so a turn can be
//! costed from the sum of its calls.

mod openai;
mod scripted;

use std::fmt;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use openai::OpenAiChat;
pub use scripted::{FnLlm, ScriptedCall, ScriptedLlm, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Decompose,
    Generate,
    Repair,
    Interpret,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::Decompose => "decompose",
            PromptKind::Generate => "generate",
            PromptKind::Repair => "repair",
            PromptKind::Interpret => "interpret",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    /// The user question the prompt was built for.
    pub question: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionOptions {
    pub temperature: f32,
    pub max_output_tokens: Option<u32>,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions { temperature: 0.0, max_output_tokens: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredCompletion {
    pub value: Value,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("{provider} is unreachable: {message}")]
    Unreachable { provider: String, message: String },
    #[error("{provider} answered HTTP {status}: {message}")]
    Http { provider: String, status: u16, message: String },
    #[error("{provider} returned an unreadable response: {message}")]
    InvalidResponse { provider: String, message: String },
    /// The model answered, but not with the requested structure. The tokens
    /// were still spent.
    #[error("structured output did not match the requested shape: {message}")]
    Structure { message: String, usage: Usage },
    #[error("scripted transcript exhausted after {calls} calls")]
    TranscriptExhausted { calls: usize },
    #[error("scripted call {index} expected a {expected} prompt but got {got}")]
    TranscriptMismatch { index: usize, expected: PromptKind, got: PromptKind },
    #[error("scripted failure: {message}")]
    Scripted { message: String, transient: bool },
}

impl LlmError {
    /// Worth retrying: rate limits, server errors and connection failures.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Unreachable { .. } => true,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            LlmError::Scripted { transient, .. } => *transient,
            _ => false,
        }
    }

    /// Tokens consumed by the failed call.
    pub fn usage(&self) -> Usage {
        match self {
            LlmError::Structure { usage, .. } => *usage,
            _ => Usage::default(),
        }
    }
}

#[async_trait]
pub trait LlmProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Whether [`LlmProvider::structured`] is enforced by the provider
    /// rather than parsed out of free text.
    fn supports_structured_output(&self) -> bool {
        false
    }

    async fn complete(&self, prompt: &Prompt, options: &CompletionOptions) -> Result<Completion, LlmError>;

    /// A JSON value shaped by `schema`. The default asks for free text and
    /// parses the first JSON object in the answer.
    async fn structured(
        &self,
        prompt: &Prompt,
        schema: &Value,
        options: &CompletionOptions,
    ) -> Result<StructuredCompletion, LlmError> {
        let _ = schema;
        let completion = self.complete(prompt, options).await?;
        match parse_json_object(&completion.text) {
            Some(value) => Ok(StructuredCompletion { value, usage: completion.usage }),
            None => Err(LlmError::Structure {
                message: "no JSON object in the response".into(),
                usage: completion.usage,
            }),
        }
    }
}

/// First JSON object in `text`, tolerating code fences and surrounding prose.
pub fn parse_json_object(text: &str) -> Option<Value> {
    let mut start = 0;
    while let Some(offset) = text[start..].find('{') {
        let from = start + offset;
        let mut stream = serde_json::Deserializer::from_str(&text[from..]).into_iter::<Value>();
        if let Some(Ok(value @ Value::Object(_))) = stream.next() {
            return Some(value);
        }
        start = from + 1;
    }
    None
}

/// Rough token count (whitespace-separated words) for providers that do not
/// report usage themselves.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
