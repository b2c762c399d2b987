//! Segment a short story with the deterministic scripted backend.
//!
//! The script is derived from a set of story-global event-start tokens, so
//! the same scripted "model" answers consistently no matter how the sliding
//! window tiles the story.
//!
//! Run with: cargo run --example segment_with_mock

use std::sync::Arc;

use event_seg::llm::{MockBackend, MockScript, PromptVariant, DEFAULT_NEWLINE_LOGPROB};
use event_seg::segmenter::{segment_story, SegmentOptions};
use event_seg::tokenizer::WordTokenizer;
use event_seg::transcript::{load_transcript, normalize_text, WordTiming};

const STORY: &str = "Anna walked into the quiet library. She found an old map inside a \
dusty book. The map showed a path through the hills. That evening she packed a bag \
and left. By sunrise she reached the first marker. A rusted gate stood there before \
her. Beyond it lay the garden she had read about.";

fn main() {
    // Word timings: 300 ms per word, 250 ms voiced.
    let (words, sentence_starts) = normalize_text(STORY);
    let timings: Vec<WordTiming> = words
        .iter()
        .enumerate()
        .map(|(i, w)| WordTiming {
            word: w.clone(),
            onset_ms: i as u64 * 300,
            offset_ms: i as u64 * 300 + 250,
        })
        .collect();
    let transcript = load_transcript(STORY, &timings).expect("valid story");
    println!(
        "story: {} words, {} sentences",
        transcript.words.len(),
        transcript.n_sentences()
    );

    // Scripted boundaries: the model "decides" that new events start at the
    // third, fifth, and seventh sentences. With the word tokenizer, token
    // indices equal word indices.
    let event_starts: Vec<usize> = [2, 4, 6].iter().map(|&s| sentence_starts[s]).collect();
    let story_tokens: Vec<String> = words.clone();
    let script =
        MockScript::from_story_boundaries(&story_tokens, &event_starts, DEFAULT_NEWLINE_LOGPROB, 3);
    let backend = MockBackend::new(script, Arc::new(WordTokenizer));

    let outcome = segment_story(
        &transcript,
        &WordTokenizer,
        &backend,
        PromptVariant::Standard,
        &SegmentOptions::default(),
    )
    .expect("segmentation succeeds");

    println!(
        "copy check: match ratio {:.3} over {} windows",
        outcome.copy_report.match_ratio,
        outcome.windows.len()
    );
    println!("{} events:", outcome.segmentation.n_events());
    for (i, event) in outcome.segmentation.events.iter().enumerate() {
        println!(
            "  event {:>2} [tokens {:>3}..{:>3}]: {}",
            i + 1,
            event.start_token,
            event.end_token,
            event.text
        );
    }
}
