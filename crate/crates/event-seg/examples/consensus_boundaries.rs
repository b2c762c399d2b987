//! Aggregate simulated button presses from a group of annotators into
//! consensus event boundaries.
//!
//! Each press becomes a one-second window of agreement; the pointwise mean
//! over annotators is smoothed with a Gaussian kernel and thresholded at
//! mean + 1 SD, and each surviving peak snaps to the nearest sentence
//! boundary.
//!
//! Run with: cargo run --example consensus_boundaries

use event_seg::consensus::{
    agreement_curve, consensus_boundaries, default_threshold, gaussian_smooth, snap_to_sentences,
    AnnotationLog,
};
use event_seg::transcript::{load_transcript, normalize_text, sentence_boundary_times, WordTiming};

const STORY: &str = "The storm broke just after midnight. Rain hammered the tin roof for \
hours. At dawn the valley was silver with water. Birds returned one by one to the wires. \
By noon the road was passable again.";

fn main() {
    let (words, _) = normalize_text(STORY);
    let timings: Vec<WordTiming> = words
        .iter()
        .enumerate()
        .map(|(i, w)| WordTiming {
            word: w.clone(),
            onset_ms: i as u64 * 400,
            offset_ms: i as u64 * 400 + 350,
        })
        .collect();
    let transcript = load_transcript(STORY, &timings).expect("valid story");
    let duration = transcript.duration_ms;
    let sentences = sentence_boundary_times(&transcript);

    // Ten annotators pressing near the second and fourth sentence boundaries,
    // with a little personal jitter; two of them also press mid-story.
    let b1 = sentences[1].time_ms;
    let b3 = sentences[3].time_ms;
    let logs: Vec<AnnotationLog> = (0..10)
        .map(|p| {
            let jitter = p as u64 * 40;
            let mut presses = vec![b1 + jitter, b3 + jitter];
            if p < 2 {
                presses.push(duration / 2);
            }
            AnnotationLog::new(format!("p{p:02}"), presses)
        })
        .collect();

    let curve = agreement_curve(&logs, duration, 500).expect("curve");
    let smoothed = gaussian_smooth(&curve.values, 1000.0);
    let threshold = default_threshold(&smoothed);
    let boundaries = consensus_boundaries(&curve, 1000.0, threshold).expect("boundaries");

    println!(
        "{} annotators, story duration {} ms, threshold {:.4}",
        curve.n_participants, duration, threshold
    );
    println!("consensus boundary times: {:?} ms", boundaries.times_ms);

    let bits = snap_to_sentences(&boundaries, &sentences);
    println!("sentence boundaries at: {:?} ms", sentences.iter().map(|s| s.time_ms).collect::<Vec<_>>());
    println!(
        "snapped to sentences: {:?} ({} of {} set)",
        bits.bits,
        bits.n_boundaries(),
        bits.len()
    );
}
