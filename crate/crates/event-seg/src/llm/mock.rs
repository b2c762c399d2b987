//! Deterministic scripted backend. It echoes the story segment from the
//! prompt word-for-word, inserting event-boundary newlines at scripted token
//! positions. Replaying archived model runs and offline testing both go
//! through this backend.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    instruction_text, refresher_text, BackendError, CompletionBackend, CompletionRequest,
    CompletionResponse, FinishReason, PromptVariant, ResponseToken,
};
use crate::tokenizer::Tokenizer;

pub const DEFAULT_NEWLINE_LOGPROB: f64 = -0.4;
pub const DEFAULT_TOKEN_LOGPROB: f64 = -0.02;

/// Extra top-5 candidates attached to one segment token, keyed by candidate
/// text. Used to place the newline character in the top-5 of non-boundary
/// tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Top5Override {
    pub token_index: usize,
    pub candidates: BTreeMap<String, f64>,
}

/// One scripted response. The first entry whose `match_prefix_tokens` is a
/// prefix of the segment's tokens is used; an empty prefix matches anything.
/// Boundary indices are segment-relative: a newline is inserted after segment
/// token `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default)]
    pub match_prefix_tokens: Vec<String>,
    #[serde(default)]
    pub boundary_after_token_indices: Vec<usize>,
    #[serde(default)]
    pub newline_logprobs: Vec<f64>,
    #[serde(default)]
    pub top5_overrides: Vec<Top5Override>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let data =
            std::fs::read_to_string(path).map_err(|e| BackendError::BadScript(e.to_string()))?;
        serde_json::from_str(&data).map_err(|e| BackendError::BadScript(e.to_string()))
    }

    /// Build a script from story-global event-start token indices. One entry
    /// is generated per possible window start (token 0 plus every event
    /// start), keyed by a token prefix at that position, with boundaries
    /// rebased to segment-relative indices. Works for any window budget as
    /// long as prefixes are unambiguous.
    pub fn from_story_boundaries(
        story_tokens: &[String],
        event_start_tokens: &[usize],
        newline_logprob: f64,
        prefix_len: usize,
    ) -> Self {
        let mut starts: Vec<usize> = std::iter::once(0)
            .chain(event_start_tokens.iter().copied())
            .filter(|&s| s < story_tokens.len())
            .collect();
        starts.sort_unstable();
        starts.dedup();
        let entries = starts
            .into_iter()
            .map(|s| {
                let end = (s + prefix_len).min(story_tokens.len());
                let boundaries: Vec<usize> = event_start_tokens
                    .iter()
                    .filter(|&&g| g > s && g < story_tokens.len())
                    .map(|&g| g - s - 1)
                    .collect();
                MockEntry {
                    match_prefix_tokens: story_tokens[s..end].to_vec(),
                    newline_logprobs: vec![newline_logprob; boundaries.len()],
                    boundary_after_token_indices: boundaries,
                    top5_overrides: Vec::new(),
                }
            })
            .collect();
        Self { entries }
    }
}

pub struct MockBackend {
    script: MockScript,
    tokenizer: Arc<dyn Tokenizer>,
    id: String,
}

impl MockBackend {
    pub fn new(script: MockScript, tokenizer: Arc<dyn Tokenizer>) -> Self {
        Self {
            script,
            tokenizer,
            id: "mock-script".to_string(),
        }
    }

    /// Strip the known instruction header and refresher from the prompt,
    /// returning the story segment and the detected variant.
    fn extract_segment<'a>(prompt: &'a str) -> Result<(&'a str, PromptVariant), BackendError> {
        for variant in [PromptVariant::Standard, PromptVariant::Long] {
            let head = instruction_text(variant);
            let tail = format!("\n{}\n", refresher_text(variant));
            if let Some(rest) = prompt.strip_prefix(&head) {
                if let Some(segment) = rest.strip_suffix(&tail) {
                    if !segment.contains('\n') {
                        return Ok((segment, variant));
                    }
                }
            }
        }
        Err(BackendError::Refusal(
            "unrecognized prompt layout".to_string(),
        ))
    }
}

impl CompletionBackend for MockBackend {
    fn request(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let (segment, _variant) = Self::extract_segment(&req.prompt)?;
        // Per-word tokenization, remembering word starts so the echo can
        // reinsert spaces.
        let mut seg_tokens: Vec<(String, bool)> = Vec::new();
        for word in segment.split_whitespace() {
            for (i, tok) in self.tokenizer.tokenize_word(word).into_iter().enumerate() {
                seg_tokens.push((tok.text, i == 0));
            }
        }
        let token_texts: Vec<&str> = seg_tokens.iter().map(|(t, _)| t.as_str()).collect();
        let entry = self
            .script
            .entries
            .iter()
            .find(|e| {
                e.match_prefix_tokens.len() <= token_texts.len()
                    && e.match_prefix_tokens
                        .iter()
                        .zip(&token_texts)
                        .all(|(a, b)| a == b)
            })
            .ok_or(BackendError::NoMatchingScript)?;

        let mut boundary_logprob: BTreeMap<usize, f64> = BTreeMap::new();
        let mut sorted = entry.boundary_after_token_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        for (j, &idx) in sorted.iter().enumerate() {
            let lp = entry
                .newline_logprobs
                .get(j)
                .copied()
                .unwrap_or(DEFAULT_NEWLINE_LOGPROB);
            boundary_logprob.insert(idx, lp);
        }
        let overrides: BTreeMap<usize, &BTreeMap<String, f64>> = entry
            .top5_overrides
            .iter()
            .map(|o| (o.token_index, &o.candidates))
            .collect();

        let mut tokens: Vec<ResponseToken> = Vec::new();
        let mut text = String::new();
        let mut finish_reason = FinishReason::Stop;
        'emit: for (i, (tok_text, word_start)) in seg_tokens.iter().enumerate() {
            let needs_space = *word_start && !text.is_empty() && !text.ends_with('\n');
            let emitted = if needs_space {
                format!(" {tok_text}")
            } else {
                tok_text.clone()
            };
            let mut top: BTreeMap<String, f64> = overrides
                .get(&i)
                .map(|m| (*m).clone())
                .unwrap_or_default();
            top.insert(emitted.clone(), DEFAULT_TOKEN_LOGPROB);
            while top.len() > 5 {
                let worst = top
                    .iter()
                    .filter(|(k, _)| **k != emitted)
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, _)| k.clone());
                match worst {
                    Some(k) => top.remove(&k),
                    None => break,
                };
            }
            if tokens.len() >= req.max_tokens {
                finish_reason = FinishReason::Length;
                break 'emit;
            }
            text.push_str(&emitted);
            tokens.push(ResponseToken {
                text: emitted,
                logprob: DEFAULT_TOKEN_LOGPROB,
                top_candidates: top,
            });
            if let Some(&lp) = boundary_logprob.get(&i) {
                if tokens.len() >= req.max_tokens {
                    finish_reason = FinishReason::Length;
                    break 'emit;
                }
                text.push('\n');
                tokens.push(ResponseToken {
                    text: "\n".to_string(),
                    logprob: lp,
                    top_candidates: BTreeMap::from([("\n".to_string(), lp)]),
                });
            }
        }
        Ok(CompletionResponse {
            text,
            tokens,
            finish_reason,
        })
    }

    fn id(&self) -> &str {
        &self.id
    }
}
