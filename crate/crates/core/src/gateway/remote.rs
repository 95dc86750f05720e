//! Remote HTTP backend: OpenAI-style chat and embedding endpoints with
//! retries and exponential backoff.

use std::env;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    Backend, ChatRequest, ChatResponse, EmbeddingVector, FinishReason, GatewayError, RetryPolicy,
    Role, TokenUsage, ENV_EMBED_API_KEY, ENV_LLM_API_KEY,
};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

pub struct RemoteBackend {
    endpoint: String,
    model_name: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatApiResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct EmbedApiResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl RemoteBackend {
    pub fn new(endpoint: String, model_name: String, retry: RetryPolicy) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .expect("reqwest client builds with static config");
        RemoteBackend {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model_name,
            retry,
            client,
        }
    }

    fn credential(var: &'static str) -> Result<String, GatewayError> {
        env::var(var)
            .ok()
            .filter(|v| !v.is_empty())
            .ok_or(GatewayError::CredentialMissing(var))
    }

    /// POST `body` to `url`, retrying transient failures (connect/timeout
    /// errors, HTTP 429 and 5xx) up to the configured attempt count.
    fn post_with_retries(
        &self,
        url: &str,
        api_key: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, GatewayError> {
        let mut last_error = String::from("no attempt made");
        for attempt in 1..=self.retry.max_attempts {
            let sent = self.client.post(url).bearer_auth(api_key).json(body).send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<serde_json::Value>().map_err(|e| {
                            GatewayError::BackendUnreachable {
                                attempts: attempt,
                                last_error: format!("invalid response body: {e}"),
                            }
                        });
                    }
                    let transient = status.as_u16() == 429 || status.is_server_error();
                    last_error = format!("HTTP {status}");
                    if !transient {
                        return Err(GatewayError::BackendUnreachable {
                            attempts: attempt,
                            last_error,
                        });
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
            if attempt < self.retry.max_attempts {
                let wait = self.retry.backoff_ms(attempt);
                log::warn!("attempt {attempt} failed ({last_error}); retrying in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
            }
        }
        Err(GatewayError::BackendUnreachable {
            attempts: self.retry.max_attempts,
            last_error,
        })
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        // Credential check precedes any network activity.
        let api_key = Self::credential(ENV_LLM_API_KEY)?;
        let mut messages = Vec::with_capacity(req.messages.len() + 1);
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        for m in &req.messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        let mut body = json!({
            "model": self.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let url = format!("{}/chat/completions", self.endpoint);
        let raw = self.post_with_retries(&url, &api_key, &body)?;
        let parsed: ChatApiResponse =
            serde_json::from_value(raw).map_err(|e| GatewayError::BackendUnreachable {
                attempts: 1,
                last_error: format!("unexpected response shape: {e}"),
            })?;
        let choice =
            parsed
                .choices
                .into_iter()
                .next()
                .ok_or_else(|| GatewayError::BackendUnreachable {
                    attempts: 1,
                    last_error: "response contained no choices".into(),
                })?;
        let finish_reason = if choice.message.content.is_empty() {
            // Empty text is only legal with an error finish.
            FinishReason::Error
        } else {
            match choice.finish_reason.as_deref() {
                Some("length") => FinishReason::Length,
                Some("stop") | None => FinishReason::Stop,
                Some(_) => FinishReason::Error,
            }
        };
        let usage = parsed
            .usage
            .map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatResponse {
            text: choice.message.content,
            finish_reason,
            usage,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let api_key = Self::credential(ENV_EMBED_API_KEY)?;
        let body = json!({"model": self.model_name, "input": texts});
        let url = format!("{}/embeddings", self.endpoint);
        let raw = self.post_with_retries(&url, &api_key, &body)?;
        let parsed: EmbedApiResponse =
            serde_json::from_value(raw).map_err(|e| GatewayError::BackendUnreachable {
                attempts: 1,
                last_error: format!("unexpected response shape: {e}"),
            })?;
        if parsed.data.len() != texts.len() {
            return Err(GatewayError::BackendUnreachable {
                attempts: 1,
                last_error: format!(
                    "expected {} embeddings, got {}",
                    texts.len(),
                    parsed.data.len()
                ),
            });
        }
        parsed
            .data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding))
            .collect()
    }
}
