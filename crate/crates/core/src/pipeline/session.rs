use tokio::sync::Semaphore;

use crate::llm::{Completion, CompletionOptions, LlmError, LlmProvider, Prompt, StructuredCompletion, Usage};

/// Provider access for one turn: applies the shared concurrency cap and
/// the retry budget, and totals calls and tokens.
pub struct LlmSession<'a> {
    llm: &'a dyn LlmProvider,
    limit: Option<&'a Semaphore>,
    retries: u32,
    options: CompletionOptions,
    usage: Usage,
    calls: u32,
    warnings: Vec<String>,
}

impl<'a> LlmSession<'a> {
    pub fn new(llm: &'a dyn LlmProvider) -> Self {
        LlmSession {
            llm,
            limit: None,
            retries: 0,
            options: CompletionOptions::default(),
            usage: Usage::default(),
            calls: 0,
            warnings: Vec::new(),
        }
    }

    pub fn limit(mut self, semaphore: &'a Semaphore) -> Self {
        self.limit = Some(semaphore);
        self
    }

    /// Extra attempts after a transient provider failure.
    pub fn retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn options(mut self, options: CompletionOptions) -> Self {
        self.options = options;
        self
    }

    pub fn usage(&self) -> Usage {
        self.usage
    }

    /// Provider calls made so far, retries included.
    pub fn calls(&self) -> u32 {
        self.calls
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    pub async fn complete(&mut self, prompt: &Prompt) -> Result<Completion, LlmError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = match self.limit {
                    Some(s) => Some(s.acquire().await.expect("the LLM semaphore is never closed")),
                    None => None,
                };
                self.calls += 1;
                self.llm.complete(prompt, &self.options).await
            };
            match result {
                Ok(c) => {
                    self.usage += c.usage;
                    return Ok(c);
                }
                Err(e) => {
                    self.usage += e.usage();
                    if e.is_transient() && attempt < self.retries {
                        attempt += 1;
                        tracing::debug!(error = %e, attempt, "retrying LLM call");
                        continue;
                    }
                    return Err(e);
                }
            }
        }
    }

    pub async fn structured(
        &mut self,
        prompt: &Prompt,
        schema: &serde_json::Value,
    ) -> Result<StructuredCompletion, LlmError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = match self.limit {
                    Some(s) => Some(s.acquire().await.expect("the LLM semaphore is never closed")),
                    None => None,
                };
                self.calls += 1;
                self.llm.structured(prompt, schema, &self.options).await
            };
            match result {
                Ok(c) => {
                    self.usage += c.usage;
                    return Ok(c);
                }
                Err(e) => {
                    self.usage += e.usage();
                    if e.is_transient() && attempt < self.retries {
                        attempt += 1;
                        continue;
                    }
                    return Err(e);
                }
            }
        }
    }
}
