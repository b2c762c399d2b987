//! Completion backends: prompt construction, token budgets, and the request
//! contract shared by the live HTTP backend and the deterministic mock.

mod http;
mod mock;

pub use http::HttpBackend;
pub use mock::{
    MockBackend, MockEntry, MockScript, Top5Override, DEFAULT_NEWLINE_LOGPROB,
    DEFAULT_TOKEN_LOGPROB,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("empty story segment")]
    EmptySegment,
    #[error("instruction leaves no room for story tokens ({instruction_tokens} of {usable} usable)")]
    NoRoomForStory {
        instruction_tokens: usize,
        usable: usize,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend refused request: {0}")]
    Refusal(String),
    #[error("no mock script entry matches the requested segment")]
    NoMatchingScript,
    #[error("invalid mock script: {0}")]
    BadScript(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// Prompt flavor: `Long` asks for long events to coarsen the segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    #[default]
    Standard,
    Long,
}

impl PromptVariant {
    fn qualifier(self) -> &'static str {
        match self {
            PromptVariant::Standard => "",
            PromptVariant::Long => "long ",
        }
    }
}

/// The fixed instruction header. The qualifier is inserted on the template
/// itself, never by searching story text, so a story containing the word
/// "event" is left alone. The opening definition sentence is never qualified.
pub fn instruction_text(variant: PromptVariant) -> String {
    let q = variant.qualifier();
    format!(
        "An event is an ongoing coherent situation. The following story needs \
         to be copied and segmented into {q}events. Copy the following story \
         word-for-word and start a new line whenever one {q}event ends and \
         another begins. This is the story: "
    )
}

/// The post-story instruction refresher.
pub fn refresher_text(variant: PromptVariant) -> String {
    let q = variant.qualifier();
    format!(
        "This is a word-for-word copy of the same story that is segmented \
         into {q}events:"
    )
}

/// Assemble the full prompt: instruction, story segment, then the refresher on
/// its own line, ending with a newline so the completion starts on fresh text.
pub fn build_prompt(segment: &str, variant: PromptVariant) -> Result<String, BackendError> {
    if segment.is_empty() {
        return Err(BackendError::EmptySegment);
    }
    Ok(format!(
        "{}{}\n{}\n",
        instruction_text(variant),
        segment,
        refresher_text(variant)
    ))
}

/// A completion request. Temperature and top-logprob count are pinned by
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_logprobs: usize,
}

impl CompletionRequest {
    pub fn new(prompt: String, max_tokens: usize) -> Self {
        Self {
            prompt,
            max_tokens,
            temperature: 0.0,
            top_logprobs: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
}

/// One generated token with its chosen log-probability and the top-5
/// candidate map at that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseToken {
    pub text: String,
    pub logprob: f64,
    pub top_candidates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub tokens: Vec<ResponseToken>,
    pub finish_reason: FinishReason,
}

/// Token accounting for one sliding-window request: half the context window is
/// usable, the instruction is deducted, and the remainder splits evenly
/// between the story segment and the requested output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub context_window: usize,
    pub usable: usize,
    pub instruction_tokens: usize,
    pub segment_budget: usize,
    pub max_tokens: usize,
    pub padding: usize,
}

pub const CONTEXT_WINDOW: usize = 4096;
pub const USABLE_WINDOW: usize = CONTEXT_WINDOW / 2;

pub fn token_budget(
    instruction_tokens: usize,
    padding: usize,
) -> Result<TokenBudget, BackendError> {
    if instruction_tokens >= USABLE_WINDOW {
        return Err(BackendError::NoRoomForStory {
            instruction_tokens,
            usable: USABLE_WINDOW,
        });
    }
    let segment_budget = (USABLE_WINDOW - instruction_tokens) / 2;
    if segment_budget == 0 {
        return Err(BackendError::NoRoomForStory {
            instruction_tokens,
            usable: USABLE_WINDOW,
        });
    }
    Ok(TokenBudget {
        context_window: CONTEXT_WINDOW,
        usable: USABLE_WINDOW,
        instruction_tokens,
        segment_budget,
        max_tokens: segment_budget + padding,
        padding,
    })
}

/// A completion backend. Implementations must be safe for concurrent requests;
/// the segmenter itself calls sequentially within one story.
pub trait CompletionBackend: Send + Sync {
    fn request(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Configuration string identifying the backend (e.g. model name or
    /// "mock-script").
    fn id(&self) -> &str;
}

/// Retry policy for transport failures. Semantic problems (refusals,
/// divergence) are never retried here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 0,
        }
    }
}

/// Issue a completion request, retrying transport errors with exponential
/// backoff.
pub fn complete(
    req: &CompletionRequest,
    backend: &dyn CompletionBackend,
    retry: &RetryPolicy,
) -> Result<CompletionResponse, BackendError> {
    let mut attempt = 0u32;
    loop {
        match backend.request(req) {
            Ok(resp) => return Ok(resp),
            Err(e) if e.is_retryable() && attempt < retry.max_retries => {
                let delay = retry.base_delay_ms.saturating_mul(1 << attempt);
                if delay > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
