use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{approx_tokens, Completion, CompletionOptions, LlmError, LlmProvider, Prompt, PromptKind, Usage};

/// One scripted provider answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    /// When set, the call fails unless the prompt is of this kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    /// Makes the call fail with this message instead of answering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub transient: bool,
}

impl ScriptedCall {
    pub fn answer(kind: PromptKind, text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        ScriptedCall {
            kind: Some(kind),
            text: text.into(),
            input_tokens,
            output_tokens,
            error: None,
            transient: false,
        }
    }

    pub fn failure(kind: PromptKind, message: impl Into<String>, transient: bool) -> Self {
        ScriptedCall {
            kind: Some(kind),
            text: String::new(),
            input_tokens: 0,
            output_tokens: 0,
            error: Some(message.into()),
            transient,
        }
    }
}

/// An ordered list of answers, call `i` receiving `calls[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default = "default_model")]
    pub model_id: String,
    /// The question the transcript was recorded for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub calls: Vec<ScriptedCall>,
}

fn default_model() -> String {
    "scripted".into()
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("cannot read transcript {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("transcript {path} is malformed: {source}")]
    Malformed { path: String, source: serde_json::Error },
}

impl Transcript {
    pub fn new(calls: Vec<ScriptedCall>) -> Self {
        Transcript { model_id: default_model(), question: None, calls }
    }

    pub fn from_file(path: &Path) -> Result<Self, TranscriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TranscriptError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text)
            .map_err(|source| TranscriptError::Malformed { path: path.display().to_string(), source })
    }

    pub fn usage(&self) -> Usage {
        let mut total = Usage::default();
        for c in &self.calls {
            total += Usage { input_tokens: c.input_tokens, output_tokens: c.output_tokens };
        }
        total
    }
}

/// Replays a [`Transcript`] in call order and records every prompt it was
/// sent. Running past the end of the transcript is an error, never a
/// made-up answer.
#[derive(Debug)]
pub struct ScriptedLlm {
    transcript: Transcript,
    state: Mutex<(usize, Vec<Prompt>)>,
}

impl ScriptedLlm {
    pub fn new(transcript: Transcript) -> Self {
        ScriptedLlm { transcript, state: Mutex::new((0, Vec::new())) }
    }

    pub fn calls_made(&self) -> usize {
        self.state.lock().0
    }

    pub fn prompts(&self) -> Vec<Prompt> {
        self.state.lock().1.clone()
    }

    pub fn is_exhausted(&self) -> bool {
        self.calls_made() >= self.transcript.calls.len()
    }
}

#[async_trait]
impl LlmProvider for ScriptedLlm {
    fn model_id(&self) -> &str {
        &self.transcript.model_id
    }

    async fn complete(&self, prompt: &Prompt, _options: &CompletionOptions) -> Result<Completion, LlmError> {
        let index = {
            let mut state = self.state.lock();
            state.1.push(prompt.clone());
            state.0 += 1;
            state.0 - 1
        };
        let call = self
            .transcript
            .calls
            .get(index)
            .ok_or(LlmError::TranscriptExhausted { calls: self.transcript.calls.len() })?;
        if let Some(expected) = call.kind.filter(|k| *k != prompt.kind) {
            return Err(LlmError::TranscriptMismatch { index, expected, got: prompt.kind });
        }
        if let Some(message) = &call.error {
            return Err(LlmError::Scripted { message: message.clone(), transient: call.transient });
        }
        Ok(Completion {
            text: call.text.clone(),
            usage: Usage { input_tokens: call.input_tokens, output_tokens: call.output_tokens },
        })
    }
}

type Responder = dyn Fn(&Prompt) -> Result<String, LlmError> + Send + Sync;

/// Answers from a function of the prompt. Safe to share between
/// concurrent turns, unlike [`ScriptedLlm`]. Usage is counted in
/// whitespace-separated words.
#[derive(Clone)]
pub struct FnLlm {
    model_id: String,
    respond: Arc<Responder>,
}

impl FnLlm {
    pub fn new(
        model_id: impl Into<String>,
        respond: impl Fn(&Prompt) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        FnLlm { model_id: model_id.into(), respond: Arc::new(respond) }
    }
}

impl std::fmt::Debug for FnLlm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnLlm").field("model_id", &self.model_id).finish_non_exhaustive()
    }
}

#[async_trait]
impl LlmProvider for FnLlm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn complete(&self, prompt: &Prompt, _options: &CompletionOptions) -> Result<Completion, LlmError> {
        let text = (self.respond)(prompt)?;
        let usage = Usage { input_tokens: approx_tokens(&prompt.text), output_tokens: approx_tokens(&text) };
        Ok(Completion { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(kind: PromptKind) -> Prompt {
        Prompt { kind, question: "q".into(), text: "t".into() }
    }

    #[tokio::test]
    async fn replays_in_order_then_fails() {
        let llm = ScriptedLlm::new(Transcript::new(vec![
            ScriptedCall::answer(PromptKind::Decompose, "a", 3, 1),
            ScriptedCall::failure(PromptKind::Generate, "down", true),
        ]));
        let opts = CompletionOptions::default();
        let first = llm.complete(&prompt(PromptKind::Decompose), &opts).await.unwrap();
        assert_eq!((first.text.as_str(), first.usage.input_tokens), ("a", 3));
        let err = llm.complete(&prompt(PromptKind::Generate), &opts).await.unwrap_err();
        assert!(err.is_transient());
        assert_eq!(
            llm.complete(&prompt(PromptKind::Interpret), &opts).await.unwrap_err(),
            LlmError::TranscriptExhausted { calls: 2 }
        );
        assert_eq!(llm.prompts().len(), 3);
    }

    #[tokio::test]
    async fn kind_mismatch_is_reported() {
        let llm = ScriptedLlm::new(Transcript::new(vec![ScriptedCall::answer(PromptKind::Generate, "x", 0, 0)]));
        let err = llm.complete(&prompt(PromptKind::Interpret), &CompletionOptions::default()).await.unwrap_err();
        assert!(matches!(err, LlmError::TranscriptMismatch { index: 0, .. }));
    }
}
