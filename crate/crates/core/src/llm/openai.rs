use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{Completion, CompletionOptions, LlmError, LlmProvider, Prompt, StructuredCompletion, Usage};

/// Client for `POST {base_url}/chat/completions` in the OpenAI wire format.
#[derive(Debug, Clone)]
pub struct OpenAiChat {
    http: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    structured: bool,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiChat {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        OpenAiChat {
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(180))
                .build()
                .expect("static reqwest configuration is valid"),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            structured: true,
        }
    }

    /// Disables `response_format: json_schema` for servers that reject it.
    pub fn structured_output(mut self, yes: bool) -> Self {
        self.structured = yes;
        self
    }

    fn invalid(&self, message: impl ToString) -> LlmError {
        LlmError::InvalidResponse { provider: self.model.clone(), message: message.to_string() }
    }

    async fn chat(&self, body: Value) -> Result<Completion, LlmError> {
        let mut request = self.http.post(format!("{}/chat/completions", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .await
            .map_err(|e| LlmError::Unreachable { provider: self.model.clone(), message: e.to_string() })?;
        let status = response.status();
        let text = response.text().await.map_err(|e| self.invalid(e))?;
        if !status.is_success() {
            return Err(LlmError::Http {
                provider: self.model.clone(),
                status: status.as_u16(),
                message: text.chars().take(500).collect(),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| self.invalid(e))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| self.invalid("response has no message content"))?;
        let usage = parsed
            .usage
            .map(|u| Usage { input_tokens: u.prompt_tokens, output_tokens: u.completion_tokens })
            .ok_or_else(|| self.invalid("response has no usage block"))?;
        Ok(Completion { text: content, usage })
    }

    fn body(&self, prompt: &Prompt, options: &CompletionOptions) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt.text }],
            "temperature": options.temperature,
        });
        if let Some(max) = options.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

#[async_trait]
impl LlmProvider for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn supports_structured_output(&self) -> bool {
        self.structured
    }

    async fn complete(&self, prompt: &Prompt, options: &CompletionOptions) -> Result<Completion, LlmError> {
        self.chat(self.body(prompt, options)).await
    }

    async fn structured(
        &self,
        prompt: &Prompt,
        schema: &Value,
        options: &CompletionOptions,
    ) -> Result<StructuredCompletion, LlmError> {
        let mut body = self.body(prompt, options);
        if self.structured {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": { "name": "output", "schema": schema, "strict": true },
            });
        }
        let completion = self.chat(body).await?;
        match super::parse_json_object(&completion.text) {
            Some(value) => Ok(StructuredCompletion { value, usage: completion.usage }),
            None => Err(LlmError::Structure {
                message: "no JSON object in the response".into(),
                usage: completion.usage,
            }),
        }
    }
}
