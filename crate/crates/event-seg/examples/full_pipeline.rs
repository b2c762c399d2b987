//! The complete file-based pipeline in one run: segment a story with the
//! scripted backend, aggregate simulated annotator presses into consensus
//! boundaries, and compare the two, all through the same commands the
//! `event-seg` binary exposes.
//!
//! Run with: cargo run --example full_pipeline

use std::io::Write;

use event_seg::cli::{
    cmd_compare, cmd_consensus, cmd_segment, print_compare_table, BackendConfig, ConsensusConfig,
    RunConfig, StatsConfig, TokenizerConfig,
};
use event_seg::llm::{MockScript, PromptVariant};
use event_seg::transcript::{
    load_transcript, normalize_text, sentence_boundary_times, WordTiming,
};

const STORY: &str = "Mara opened the bakery before the sun was up. The ovens ticked and \
warmed the dark kitchen. Flour hung in the light from the single bulb. At seven the \
first customers pushed through the door. They carried the cold in on their coats. \
The morning rush swallowed the next two hours. When it ended Mara finally poured \
her own coffee. She sat by the window and watched the street empty out.";

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();

    // Story text and word timings: 300 ms per word.
    let (words, sentence_starts) = normalize_text(STORY);
    std::fs::write(root.join("story.txt"), STORY).expect("write story");
    let mut timing = std::fs::File::create(root.join("timing.csv")).expect("create timing");
    writeln!(timing, "word,onset_ms,offset_ms").unwrap();
    let timings: Vec<WordTiming> = words
        .iter()
        .enumerate()
        .map(|(i, w)| WordTiming {
            word: w.clone(),
            onset_ms: i as u64 * 300,
            offset_ms: i as u64 * 300 + 250,
        })
        .collect();
    for t in &timings {
        writeln!(timing, "{},{},{}", t.word, t.onset_ms, t.offset_ms).unwrap();
    }
    drop(timing);

    // The scripted model starts new events at sentences 3, 5, and 7, with a
    // different newline confidence at each boundary so the trace varies.
    let event_starts: Vec<usize> = [2, 4, 6].iter().map(|&s| sentence_starts[s]).collect();
    let mut script = MockScript::from_story_boundaries(&words, &event_starts, -0.4, 3);
    for entry in &mut script.entries {
        for (j, lp) in entry.newline_logprobs.iter_mut().enumerate() {
            *lp = -0.2 - 0.35 * j as f64;
        }
        // Away from boundaries the newline is merely an unlikely top-5
        // candidate, so the trace is defined over the whole story.
        entry.top5_overrides = (0..words.len())
            .map(|i| event_seg::llm::Top5Override {
                token_index: i,
                candidates: std::collections::BTreeMap::from([("\n".to_string(), -7.0)]),
            })
            .collect();
    }
    std::fs::write(
        root.join("script.json"),
        serde_json::to_string_pretty(&script).expect("script json"),
    )
    .expect("write script");

    // Simulated annotators pressing near the same three boundaries.
    let transcript = load_transcript(STORY, &timings).expect("valid story");
    let sentences = sentence_boundary_times(&transcript);
    let press_targets: Vec<u64> = [1usize, 3, 5].iter().map(|&s| sentences[s].time_ms).collect();
    let mut ann = std::fs::File::create(root.join("annotations.csv")).expect("create csv");
    writeln!(ann, "participant_id,press_time_ms").unwrap();
    for p in 0..8u64 {
        for (k, &t) in press_targets.iter().enumerate() {
            // Per-participant jitter; one participant misses the last press.
            if p == 7 && k == 2 {
                continue;
            }
            writeln!(ann, "p{p:02},{}", t + p * 60).unwrap();
        }
    }
    drop(ann);

    let cfg = RunConfig {
        story_id: "bakery".to_string(),
        text_path: root.join("story.txt"),
        timing_csv: root.join("timing.csv"),
        sentence_sidecar: None,
        annotation_csv: Some(root.join("annotations.csv")),
        duration_ms: None,
        backend: BackendConfig::MockScript {
            script_path: root.join("script.json"),
        },
        variant: PromptVariant::Standard,
        padding: 0,
        replications: 2,
        jobs: 2,
        strict: true,
        copy_tolerance: 0.8,
        tokenizer: TokenizerConfig::Word,
        consensus: ConsensusConfig::default(),
        stats: StatsConfig {
            n_permutations: 5000,
            seed: 7,
            max_lag_ms: 1000,
        },
        output_dir: root.join("out"),
    };

    let summary = cmd_segment(&cfg).expect("segment");
    println!(
        "segment: {} run(s), event counts {:?}, max pairwise distance {:.3}",
        summary.n_runs, summary.event_counts, summary.max_pairwise_hamming
    );

    let consensus = cmd_consensus(&cfg).expect("consensus");
    println!(
        "consensus: {} boundaries at {:?} ms",
        consensus.n_boundaries, consensus.boundary_times_ms
    );

    let seg_files: Vec<_> = (0..cfg.replications)
        .map(|i| cfg.output_dir.join(format!("segmentation_run-{i}.json")))
        .collect();
    let report = cmd_compare(
        &cfg,
        &seg_files,
        &cfg.output_dir.join("consensus_boundaries.json"),
    )
    .expect("compare");
    println!();
    print_compare_table(&report, std::io::stdout().lock()).expect("print table");
    println!();
    println!("artifacts were written under {}", cfg.output_dir.display());
    for entry in std::fs::read_dir(&cfg.output_dir).expect("read dir") {
        println!("  {}", entry.expect("entry").file_name().to_string_lossy());
    }
}
