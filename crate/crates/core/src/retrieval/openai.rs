use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{EmbeddingError, EmbeddingProvider};

/// Client for `POST {base_url}/embeddings` in the OpenAI wire format, which
/// most hosted and self-hosted embedding servers also accept.
#[derive(Debug, Clone)]
pub struct OpenAiEmbeddings {
    http: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    multilingual: bool,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

impl OpenAiEmbeddings {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dimension: usize,
    ) -> Self {
        OpenAiEmbeddings {
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("static reqwest configuration is valid"),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            dimension,
            multilingual: false,
        }
    }

    pub fn multilingual(mut self, yes: bool) -> Self {
        self.multilingual = yes;
        self
    }

    fn error(&self, message: impl ToString) -> EmbeddingError {
        EmbeddingError::InvalidResponse { provider: self.model.clone(), message: message.to_string() }
    }
}

#[async_trait]
impl EmbeddingProvider for OpenAiEmbeddings {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn multilingual(&self) -> bool {
        self.multilingual
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut request = self
            .http
            .post(format!("{}/embeddings", self.base_url))
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| EmbeddingError::Unreachable {
            provider: self.model.clone(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let body = response.text().await.map_err(|e| self.error(e))?;
        if !status.is_success() {
            return Err(EmbeddingError::Http {
                provider: self.model.clone(),
                status: status.as_u16(),
                message: body.chars().take(500).collect(),
            });
        }
        let parsed: EmbeddingResponse = serde_json::from_str(&body).map_err(|e| self.error(e))?;
        let mut out = vec![Vec::new(); texts.len()];
        for datum in parsed.data {
            let slot = out.get_mut(datum.index).ok_or_else(|| self.error("index out of range"))?;
            *slot = datum.embedding;
        }
        if out.iter().any(Vec::is_empty) {
            return Err(self.error("missing embeddings in response"));
        }
        Ok(out)
    }
}
