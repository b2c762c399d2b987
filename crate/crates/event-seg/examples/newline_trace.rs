//! Turn a scripted model response into a millisecond boundary-probability
//! trace: newline log probabilities from the response land on the time spans
//! of their aligned transcript tokens; everything else stays missing.
//!
//! Run with: cargo run --example newline_trace

use std::sync::Arc;

use event_seg::align::write_trace_csv_rle;
use event_seg::llm::{MockBackend, MockScript, PromptVariant, DEFAULT_NEWLINE_LOGPROB};
use event_seg::segmenter::{newline_story_trace, segment_story, SegmentOptions};
use event_seg::tokenizer::WordTokenizer;
use event_seg::transcript::{load_transcript, normalize_text, timed_tokens, WordTiming};

const STORY: &str = "The train slowed at the empty platform. A single lamp burned over \
the ticket office. The conductor stepped down and checked his watch.";

fn main() {
    let (words, _) = normalize_text(STORY);
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
    let tok = WordTokenizer;
    let timed = timed_tokens(&transcript, &tok).expect("timed tokens");

    // Scripted event boundaries after tokens 6 and 14.
    let script = MockScript::from_story_boundaries(&words, &[7, 15], DEFAULT_NEWLINE_LOGPROB, 3);
    let backend = MockBackend::new(script, Arc::new(WordTokenizer));
    let outcome = segment_story(
        &transcript,
        &tok,
        &backend,
        PromptVariant::Standard,
        &SegmentOptions::default(),
    )
    .expect("segmentation succeeds");

    let trace = newline_story_trace(&outcome.windows, &timed, transcript.duration_ms)
        .expect("trace");
    println!(
        "trace: {} ms total, {} ms defined",
        trace.len(),
        trace.defined_count()
    );
    println!("run-length encoded (start_ms,end_ms,value; empty value = missing):");
    let mut csv = Vec::new();
    write_trace_csv_rle(&trace, &mut csv).expect("write csv");
    print!("{}", String::from_utf8(csv).expect("utf8"));
}
