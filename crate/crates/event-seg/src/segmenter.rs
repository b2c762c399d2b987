//! The sliding-window copy-and-split protocol: drive the backend over a full
//! story, parse its output into events, verify copy fidelity, and express the
//! result as sentence-level boundary vectors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{dtw_align, unit_distance, AlignError};
use crate::llm::{
    build_prompt, complete, instruction_text, refresher_text, token_budget, BackendError,
    CompletionBackend, CompletionRequest, CompletionResponse, PromptVariant, RetryPolicy,
};
use crate::tokenizer::{TokenId, Tokenizer};
use crate::transcript::{SentenceBoundary, TimedToken, Transcript, TranscriptError};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("window starting at token {window_start} produced no completed events")]
    NoProgress { window_start: usize },
    #[error("output diverged from transcript in window starting at token {window_start} (match ratio {match_ratio:.3})")]
    Divergence {
        window_start: usize,
        match_ratio: f64,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// One event: a contiguous span of transcript tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub text: String,
    pub start_token: usize,
    pub end_token: usize,
}

/// A complete segmentation of one story by one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub events: Vec<Event>,
    pub variant: PromptVariant,
    pub run_id: String,
    pub windows: Vec<(usize, usize)>,
}

impl Segmentation {
    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    /// Event-start token indices, excluding the story start.
    pub fn boundary_tokens(&self) -> Vec<usize> {
        self.events.iter().skip(1).map(|e| e.start_token).collect()
    }
}

/// Binary vector over a story's sentence boundaries; 1 marks an event
/// boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryVector {
    pub bits: Vec<u8>,
}

impl BoundaryVector {
    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn n_boundaries(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn set(&mut self, index: usize) {
        self.bits[index] = 1;
    }
}

/// Copy-fidelity report for one window (or a whole story, summed over
/// windows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyReport {
    pub match_ratio: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub diverged: bool,
}

/// Split model output into event texts at newline characters. Runs of
/// newlines collapse to one boundary; surrounding whitespace is trimmed.
pub fn parse_events(output_text: &str) -> Vec<String> {
    output_text
        .split('\n')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reassemble the surface text of a token span, with spaces at word changes.
pub fn span_text(tokens: &[TimedToken]) -> String {
    let mut out = String::new();
    let mut last_word = usize::MAX;
    for t in tokens {
        if t.word_index != last_word && last_word != usize::MAX {
            out.push(' ');
        }
        out.push_str(&t.token.text);
        last_word = t.word_index;
    }
    out
}

/// Map each response token to a bare [`TokenId`] (leading spaces stripped) for
/// alignment against transcript tokens. Newline tokens stay in the sequence;
/// they simply never match and warp onto a neighbor.
pub fn response_token_ids(resp: &CompletionResponse) -> Vec<TokenId> {
    resp.tokens
        .iter()
        .map(|t| TokenId::new(t.text.trim_start_matches(' ')))
        .collect()
}

/// Token-level comparison of parsed output against the transcript window it
/// was supposed to copy, via the warp alignment. Reporting only; divergence is
/// flagged, not fatal, unless strict mode says otherwise.
pub fn verify_copy(
    event_texts: &[String],
    window_tokens: &[TokenId],
    tok: &dyn Tokenizer,
    tolerance: f64,
) -> CopyReport {
    let gen: Vec<TokenId> = event_texts
        .iter()
        .flat_map(|e| tok.tokenize_text(e))
        .collect();
    let total = window_tokens.len();
    if gen.is_empty() || total == 0 {
        return CopyReport {
            match_ratio: 0.0,
            substitutions: 0,
            insertions: 0,
            deletions: total,
            diverged: true,
        };
    }
    let (path, _) = dtw_align(&gen, window_tokens, &unit_distance)
        .expect("both sequences checked non-empty");
    let mut matches = 0usize;
    let mut substitutions = 0usize;
    let mut insertions = 0usize;
    let mut deletions = 0usize;
    let mut prev: Option<(usize, usize)> = None;
    for &(gi, ri) in &path.pairs {
        match prev {
            None => {
                if gen[gi].id == window_tokens[ri].id {
                    matches += 1;
                } else {
                    substitutions += 1;
                }
            }
            Some((pg, pr)) => match (gi - pg, ri - pr) {
                (1, 1) => {
                    if gen[gi].id == window_tokens[ri].id {
                        matches += 1;
                    } else {
                        substitutions += 1;
                    }
                }
                (1, 0) => insertions += 1,
                _ => deletions += 1,
            },
        }
        prev = Some((gi, ri));
    }
    let match_ratio = matches as f64 / total as f64;
    CopyReport {
        match_ratio,
        substitutions,
        insertions,
        deletions,
        diverged: match_ratio < tolerance,
    }
}

#[derive(Debug, Clone)]
pub struct SegmentOptions {
    pub padding: usize,
    pub copy_tolerance: f64,
    pub strict: bool,
    pub retry: RetryPolicy,
    pub run_id: String,
    /// Fix the per-window story-token budget instead of deriving it from the
    /// context window. Used for tuning and for windowing tests.
    pub budget_override: Option<usize>,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            padding: 0,
            copy_tolerance: 0.8,
            strict: false,
            retry: RetryPolicy::default(),
            run_id: "run-0".to_string(),
            budget_override: None,
        }
    }
}

/// Per-window artifacts kept for downstream trace building.
#[derive(Debug, Clone)]
pub struct WindowRecord {
    pub start_token: usize,
    pub end_token: usize,
    pub response: CompletionResponse,
    pub copy_report: CopyReport,
}

#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub segmentation: Segmentation,
    pub windows: Vec<WindowRecord>,
    pub copy_report: CopyReport,
}

/// Run the sliding-window protocol over a full story.
///
/// Each window takes the next `segment_budget` transcript tokens, prompts the
/// backend, and parses events from the output. The final event of a
/// non-final window is provisional (it was truncated by the window, not
/// semantically closed): its start is kept as the next window's origin and
/// its extent is re-derived there. The loop ends once a window reaches the
/// story's final token; returned events tile the transcript.
pub fn segment_story(
    transcript: &Transcript,
    tok: &dyn Tokenizer,
    backend: &dyn CompletionBackend,
    variant: PromptVariant,
    options: &SegmentOptions,
) -> Result<SegmentOutcome, SegmentError> {
    let timed = crate::transcript::timed_tokens(transcript, tok)?;
    let n = timed.len();
    if n == 0 {
        return Err(SegmentError::EmptyTranscript);
    }
    let instruction_tokens = tok.tokenize_text(&instruction_text(variant)).len()
        + tok.tokenize_text(&refresher_text(variant)).len();
    let mut budget = token_budget(instruction_tokens, options.padding)?;
    if let Some(b) = options.budget_override {
        budget.segment_budget = b.max(1);
        budget.max_tokens = budget.segment_budget + options.padding;
    }

    let mut event_starts: Vec<usize> = vec![0];
    let mut window_spans: Vec<(usize, usize)> = Vec::new();
    let mut window_records: Vec<WindowRecord> = Vec::new();
    let mut start = 0usize;
    loop {
        let end = (start + budget.segment_budget).min(n);
        let window = &timed[start..end];
        let window_tokens: Vec<TokenId> = window.iter().map(|t| t.token.clone()).collect();
        let prompt = build_prompt(&span_text(window), variant)?;
        let response = complete(
            &CompletionRequest::new(prompt, budget.max_tokens),
            backend,
            &options.retry,
        )?;
        let event_texts = parse_events(&response.text);
        if event_texts.is_empty() {
            return Err(SegmentError::NoProgress {
                window_start: start,
            });
        }
        let copy_report = verify_copy(&event_texts, &window_tokens, tok, options.copy_tolerance);
        if options.strict && copy_report.diverged {
            return Err(SegmentError::Divergence {
                window_start: start,
                match_ratio: copy_report.match_ratio,
            });
        }
        let boundaries =
            event_boundary_tokens(&event_texts, &window_tokens, tok, start)?;
        // A truncated final window has not really covered the story end; keep
        // windowing from the last boundary until the tail fits. With no
        // boundary left to restart from, the remaining tail is one event.
        let is_final = end == n
            && (matches!(response.finish_reason, crate::llm::FinishReason::Stop)
                || boundaries.is_empty());
        window_spans.push((start, end));
        window_records.push(WindowRecord {
            start_token: start,
            end_token: end,
            response,
            copy_report,
        });
        if is_final {
            event_starts.extend(boundaries);
            break;
        }
        let next_start = match boundaries.last() {
            Some(&b) if b > start => b,
            _ => {
                return Err(SegmentError::NoProgress {
                    window_start: start,
                })
            }
        };
        event_starts.extend(boundaries);
        start = next_start;
    }
    event_starts.sort_unstable();
    event_starts.dedup();

    let mut events = Vec::with_capacity(event_starts.len());
    for (i, &s) in event_starts.iter().enumerate() {
        let e = event_starts.get(i + 1).copied().unwrap_or(n);
        events.push(Event {
            text: span_text(&timed[s..e]),
            start_token: s,
            end_token: e,
        });
    }
    let copy_report = aggregate_copy_reports(&window_records, options.copy_tolerance);
    Ok(SegmentOutcome {
        segmentation: Segmentation {
            events,
            variant,
            run_id: options.run_id.clone(),
            windows: window_spans,
        },
        windows: window_records,
        copy_report,
    })
}

/// Translate parsed event texts into story-global token indices of event
/// starts (excluding the window start) by aligning the regenerated tokens to
/// the window's transcript tokens.
fn event_boundary_tokens(
    event_texts: &[String],
    window_tokens: &[TokenId],
    tok: &dyn Tokenizer,
    window_start: usize,
) -> Result<Vec<usize>, SegmentError> {
    let mut gen: Vec<TokenId> = Vec::new();
    let mut gen_starts: Vec<usize> = Vec::new();
    for text in event_texts {
        let toks = tok.tokenize_text(text);
        if !gen.is_empty() && !toks.is_empty() {
            gen_starts.push(gen.len());
        }
        gen.extend(toks);
    }
    if gen.is_empty() {
        return Err(SegmentError::NoProgress {
            window_start,
        });
    }
    let (path, _) = dtw_align(&gen, window_tokens, &unit_distance)?;
    let mut boundaries = Vec::with_capacity(gen_starts.len());
    let mut pair_iter = path.pairs.iter().peekable();
    let mut last = window_start;
    for gs in gen_starts {
        // First transcript index matched to this generated token.
        let ri = loop {
            match pair_iter.peek() {
                Some(&&(gi, ri)) if gi < gs => {
                    pair_iter.next();
                    let _ = ri;
                }
                Some(&&(_, ri)) => break ri,
                None => break window_tokens.len().saturating_sub(1),
            }
        };
        let global = window_start + ri;
        // Boundaries that collapse onto a previous one merge the events.
        if global > last {
            boundaries.push(global);
            last = global;
        }
    }
    Ok(boundaries)
}

fn aggregate_copy_reports(windows: &[WindowRecord], tolerance: f64) -> CopyReport {
    let mut matches_weighted = 0.0f64;
    let mut total = 0usize;
    let mut substitutions = 0;
    let mut insertions = 0;
    let mut deletions = 0;
    for w in windows {
        let len = w.end_token - w.start_token;
        matches_weighted += w.copy_report.match_ratio * len as f64;
        total += len;
        substitutions += w.copy_report.substitutions;
        insertions += w.copy_report.insertions;
        deletions += w.copy_report.deletions;
    }
    let match_ratio = if total == 0 {
        0.0
    } else {
        matches_weighted / total as f64
    };
    CopyReport {
        match_ratio,
        substitutions,
        insertions,
        deletions,
        diverged: match_ratio < tolerance,
    }
}

/// Assemble the story-wide newline log-probability trace from the per-window
/// responses: response tokens are warped onto the window's transcript tokens
/// to get time spans, and newline top-5 log-probabilities fill those spans.
/// Later windows overwrite earlier ones on the overlap.
pub fn newline_story_trace(
    windows: &[WindowRecord],
    timed: &[TimedToken],
    duration_ms: u64,
) -> Result<crate::align::ProbTrace, SegmentError> {
    use crate::align::{apply_warp, newline_trace, ProbTrace};
    let mut story = ProbTrace::missing(duration_ms);
    for w in windows {
        let gen = response_token_ids(&w.response);
        if gen.is_empty() {
            continue;
        }
        let window_tokens: Vec<TokenId> = timed[w.start_token..w.end_token]
            .iter()
            .map(|t| t.token.clone())
            .collect();
        let (path, _) = dtw_align(&gen, &window_tokens, &unit_distance)?;
        let spans = apply_warp(&path, &timed[w.start_token..w.end_token])?;
        let partial = newline_trace(&w.response, &spans, duration_ms)?;
        for (t, v) in partial.values.iter().enumerate() {
            if !v.is_nan() {
                story.values[t] = *v;
            }
        }
    }
    Ok(story)
}

/// Snap the index of the sentence boundary nearest to `time_ms`; ties go to
/// the earlier boundary.
pub fn nearest_sentence_boundary(boundaries: &[SentenceBoundary], time_ms: u64) -> Option<usize> {
    boundaries
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.time_ms.abs_diff(time_ms)))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Express a segmentation as a sentence-boundary bit vector: each event start
/// (except the story start) is snapped to the nearest sentence boundary in
/// milliseconds.
pub fn boundary_vector(
    seg: &Segmentation,
    boundaries: &[SentenceBoundary],
    timed: &[TimedToken],
) -> BoundaryVector {
    let mut v = BoundaryVector::zeros(boundaries.len());
    for event in seg.events.iter().skip(1) {
        let onset = timed[event.start_token].onset_ms;
        if let Some(i) = nearest_sentence_boundary(boundaries, onset) {
            v.set(i);
        }
    }
    v
}
