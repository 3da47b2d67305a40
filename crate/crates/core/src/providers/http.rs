//! Clients for hosted providers. Request bodies and response extraction are
//! plain functions so they can be checked without a network.

use std::time::Duration;

use serde_json::{json, Value};

use super::embedding::{Embedder, Vector};
use super::generation::{GenerationRequest, Generator};
use super::search::{SearchProvider, SearchResult};
use super::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApiFlavor {
    OpenAi,
    Anthropic,
    Gemini,
    Tavily,
}

impl ApiFlavor {
    pub fn default_endpoint(&self) -> &'static str {
        match self {
            ApiFlavor::OpenAi => "https://api.openai.com/v1",
            ApiFlavor::Anthropic => "https://api.anthropic.com",
            ApiFlavor::Gemini => "https://generativelanguage.googleapis.com",
            ApiFlavor::Tavily => "https://api.tavily.com",
        }
    }
}

/// One hosted endpoint; implements whichever capabilities its flavor has.
#[derive(Clone)]
pub struct HttpProvider {
    flavor: ApiFlavor,
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("flavor", &self.flavor)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    pub fn new(flavor: ApiFlavor, endpoint: Option<String>, model: String, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            flavor,
            endpoint: endpoint
                .unwrap_or_else(|| flavor.default_endpoint().to_string())
                .trim_end_matches('/')
                .to_string(),
            model,
            api_key,
            agent,
        }
    }

    fn post(&self, url: &str, headers: &[(&str, String)], body: &Value) -> Result<Value, ProviderError> {
        let mut req = self.agent.post(url).header("content-type", "application/json");
        for (k, v) in headers {
            req = req.header(*k, v.as_str());
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| ProviderError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::MalformedResponse(format!("{url}: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(ProviderError::Unavailable(format!("{url}: HTTP {status}: {value}")));
        }
        Ok(value)
    }
}

pub fn chat_body(flavor: ApiFlavor, model: &str, prompt: &str) -> Value {
    match flavor {
        ApiFlavor::OpenAi => json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
        }),
        ApiFlavor::Anthropic => json!({
            "model": model,
            "max_tokens": 16384,
            "messages": [{"role": "user", "content": prompt}],
        }),
        ApiFlavor::Gemini => json!({
            "contents": [{"role": "user", "parts": [{"text": prompt}]}],
        }),
        ApiFlavor::Tavily => Value::Null,
    }
}

pub fn chat_text(flavor: ApiFlavor, response: &Value) -> Result<String, ProviderError> {
    let text = match flavor {
        ApiFlavor::OpenAi => response.pointer("/choices/0/message/content"),
        ApiFlavor::Anthropic => response.pointer("/content/0/text"),
        ApiFlavor::Gemini => response.pointer("/candidates/0/content/parts/0/text"),
        ApiFlavor::Tavily => None,
    };
    text.and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::MalformedResponse("no text in provider response".into()))
}

pub fn embedding_values(flavor: ApiFlavor, response: &Value) -> Result<Vec<f64>, ProviderError> {
    let values = match flavor {
        ApiFlavor::OpenAi => response.pointer("/data/0/embedding"),
        ApiFlavor::Gemini => response.pointer("/embedding/values"),
        _ => None,
    };
    values
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_f64).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ProviderError::MalformedResponse("no embedding in provider response".into()))
}

pub fn search_results(response: &Value) -> Result<Vec<SearchResult>, ProviderError> {
    let items = response
        .get("results")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::MalformedResponse("no results array".into()))?;
    Ok(items
        .iter()
        .filter_map(|r| {
            let url = r.get("url")?.as_str()?.to_string();
            if url.is_empty() {
                return None;
            }
            Some(SearchResult {
                url,
                title: r.get("title").and_then(Value::as_str).unwrap_or_default().to_string(),
                snippet: r
                    .get("content")
                    .or_else(|| r.get("snippet"))
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
            })
        })
        .collect())
}

impl Generator for HttpProvider {
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let prompt = request.render();
        let body = chat_body(self.flavor, &self.model, &prompt);
        let response = match self.flavor {
            ApiFlavor::OpenAi => self.post(
                &format!("{}/chat/completions", self.endpoint),
                &[("authorization", format!("Bearer {}", self.api_key))],
                &body,
            )?,
            ApiFlavor::Anthropic => self.post(
                &format!("{}/v1/messages", self.endpoint),
                &[
                    ("x-api-key", self.api_key.clone()),
                    ("anthropic-version", "2023-06-01".to_string()),
                ],
                &body,
            )?,
            ApiFlavor::Gemini => self.post(
                &format!("{}/v1beta/models/{}:generateContent", self.endpoint, self.model),
                &[("x-goog-api-key", self.api_key.clone())],
                &body,
            )?,
            ApiFlavor::Tavily => {
                return Err(ProviderError::InvalidRequest(
                    "a search provider cannot generate text".into(),
                ))
            }
        };
        chat_text(self.flavor, &response)
    }
}

impl Embedder for HttpProvider {
    fn embed(&self, text: &str) -> Result<Vector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let response = match self.flavor {
            ApiFlavor::OpenAi => self.post(
                &format!("{}/embeddings", self.endpoint),
                &[("authorization", format!("Bearer {}", self.api_key))],
                &json!({"model": self.model, "input": text}),
            )?,
            ApiFlavor::Gemini => self.post(
                &format!("{}/v1beta/models/{}:embedContent", self.endpoint, self.model),
                &[("x-goog-api-key", self.api_key.clone())],
                &json!({"content": {"parts": [{"text": text}]}}),
            )?,
            _ => {
                return Err(ProviderError::InvalidRequest(format!(
                    "{:?} providers do not offer embeddings",
                    self.flavor
                )))
            }
        };
        Vector::normalized(embedding_values(self.flavor, &response)?)
    }
}

impl SearchProvider for HttpProvider {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, ProviderError> {
        if self.flavor != ApiFlavor::Tavily {
            return Err(ProviderError::InvalidRequest(format!(
                "{:?} providers do not offer search",
                self.flavor
            )));
        }
        let response = self.post(
            &format!("{}/search", self.endpoint),
            &[("authorization", format!("Bearer {}", self.api_key))],
            &json!({"api_key": self.api_key, "query": query, "max_results": max_results}),
        )?;
        let mut results = search_results(&response)?;
        results.truncate(max_results);
        Ok(results)
    }
}
