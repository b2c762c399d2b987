//! Computational event segmentation of spoken narratives.
//!
//! This crate asks a text-completion model to copy a story word for word and
//! insert a newline wherever one event ends and the next begins, then turns
//! those newlines into boundary annotations that can be compared against
//! human button-press data on the same story.
//!
//! The pipeline, end to end:
//!
//! 1. [`transcript`] — normalize the story text, join it with word timings,
//!    and detect sentence boundaries.
//! 2. [`llm`] — build the copy-and-segment prompt, manage the token budget,
//!    and talk to a completion backend (an HTTP endpoint or a deterministic
//!    scripted mock).
//! 3. [`segmenter`] — drive the sliding-window protocol over a whole story,
//!    verify the copy, and map each event start back to a transcript token.
//! 4. [`align`] — dynamic-time-warp the model output onto the transcript and
//!    project newline log probabilities onto the story's millisecond timeline.
//! 5. [`consensus`] — aggregate human button presses into an agreement curve
//!    and a consensus boundary set.
//! 6. [`stats`] — Hamming distances, permutation tests, Welch t-tests, and
//!    lagged cross-correlation between model and human traces.
//! 7. [`cli`] — file-based pipeline commands used by the `event-seg` binary
//!    and the runnable examples.
//!
//! Start with `examples/full_pipeline.rs` for a complete run against the
//! scripted mock backend.

pub mod align;
pub mod cli;
pub mod consensus;
pub mod llm;
pub mod segmenter;
pub mod stats;
pub mod tokenizer;
pub mod transcript;
