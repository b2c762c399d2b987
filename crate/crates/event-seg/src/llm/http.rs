//! Live HTTP completion backend speaking the classic completions JSON shape.
//! The API key is read from the `EVENT_SEG_API_KEY` environment variable and
//! never appears in configuration files.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, CompletionBackend, CompletionRequest, CompletionResponse, FinishReason,
    ResponseToken,
};

pub const API_KEY_ENV: &str = "EVENT_SEG_API_KEY";

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    logprobs: usize,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    text: String,
    logprobs: Option<WireLogprobs>,
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

pub struct HttpBackend {
    url: String,
    model: String,
    client: reqwest::blocking::Client,
    id: String,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        let url = url.into();
        let model = model.into();
        let id = format!("http-json:{model}");
        Self {
            url,
            model,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("client construction cannot fail with static options"),
            id,
        }
    }

    fn parse(&self, wire: WireResponse) -> Result<CompletionResponse, BackendError> {
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Refusal("response has no choices".to_string()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        let tokens = match choice.logprobs {
            None => Vec::new(),
            Some(lp) => lp
                .tokens
                .into_iter()
                .zip(lp.token_logprobs)
                .zip(
                    lp.top_logprobs
                        .into_iter()
                        .chain(std::iter::repeat(None)),
                )
                .map(|((text, logprob), top)| {
                    let mut top_candidates = top.unwrap_or_default();
                    let logprob = logprob.unwrap_or(0.0);
                    top_candidates.entry(text.clone()).or_insert(logprob);
                    ResponseToken {
                        text,
                        logprob,
                        top_candidates,
                    }
                })
                .collect(),
        };
        Ok(CompletionResponse {
            text: choice.text,
            tokens,
            finish_reason,
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn request(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = WireRequest {
            model: &self.model,
            prompt: &req.prompt,
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            logprobs: req.top_logprobs,
        };
        let mut http = self.client.post(&self.url).json(&body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            http = http.bearer_auth(key);
        }
        let resp = http
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("server error {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(BackendError::Refusal(format!("{status}: {detail}")));
        }
        let wire: WireResponse = resp
            .json()
            .map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        self.parse(wire)
    }

    fn id(&self) -> &str {
        &self.id
    }
}
