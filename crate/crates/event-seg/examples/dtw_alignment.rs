//! Align a slightly corrupted model copy back onto the reference transcript
//! with dynamic time warping, then project the aligned tokens onto word
//! times.
//!
//! Run with: cargo run --example dtw_alignment

use event_seg::align::{apply_warp, dtw_align, unit_distance};
use event_seg::tokenizer::{Tokenizer, WordTokenizer};
use event_seg::transcript::TimedToken;

fn main() {
    let reference = "the fox crossed the frozen river before dawn";
    // The "model" dropped one word and substituted another.
    let generated = "the fox crossed the cold river dawn";

    let tok = WordTokenizer;
    let ref_tokens = tok.tokenize_text(reference);
    let gen_tokens = tok.tokenize_text(generated);

    let (path, cost) = dtw_align(&gen_tokens, &ref_tokens, &unit_distance).expect("non-empty");
    println!("alignment cost: {cost} (mismatched steps)");
    for &(g, r) in &path.pairs {
        let marker = if gen_tokens[g].id == ref_tokens[r].id {
            " "
        } else {
            "*"
        };
        println!(
            "  {marker} gen[{g}] {:<8} ~ ref[{r}] {:<8}",
            gen_tokens[g].text, ref_tokens[r].text
        );
    }

    // Word i of the reference spans [i*300, i*300 + 250] ms.
    let timed: Vec<TimedToken> = ref_tokens
        .iter()
        .enumerate()
        .map(|(i, t)| TimedToken {
            token: t.clone(),
            onset_ms: i as u64 * 300,
            offset_ms: i as u64 * 300 + 250,
            word_index: i,
        })
        .collect();
    let times = apply_warp(&path, &timed).expect("warp covers generated tokens");
    println!("generated token times after warping:");
    for (i, (onset, offset)) in times.iter().enumerate() {
        println!("  gen[{i}] {:<8} -> {onset}..{offset} ms", gen_tokens[i].text);
    }
}
