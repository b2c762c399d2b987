//! The statistical toolkit on synthetic data: Hamming distance between
//! boundary vectors, its permutation-test p-value, the Welch t-test on
//! distances to consensus, and lagged cross-correlation of two traces.
//!
//! Run with: cargo run --example compare_stats

use event_seg::align::ProbTrace;
use event_seg::segmenter::BoundaryVector;
use event_seg::stats::{
    cross_correlate, distance_ttest, hamming, permutation_test,
};

fn main() {
    // A model solution that shares most boundaries with the consensus.
    let model = BoundaryVector {
        bits: vec![1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0],
    };
    let consensus = BoundaryVector {
        bits: vec![1, 0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0],
    };
    let d = hamming(&model, &consensus).expect("same length");
    let perm = permutation_test(&model, &consensus, 100_000, 7).expect("test runs");
    println!("hamming distance: {d:.3}");
    println!(
        "permutation test: p = {:.4} over {} shuffles (seed {})",
        perm.p_value, perm.n_permutations, perm.seed
    );

    // Are model runs closer to the consensus than individual annotators are?
    let model_distances = [0.10, 0.12, 0.11, 0.09];
    let human_distances = [0.22, 0.31, 0.18, 0.27, 0.25, 0.20];
    let t = distance_ttest(&model_distances, &human_distances).expect("t-test");
    println!(
        "t-test: t = {:.3}, df = {:.1}, p = {:.4} (model mean {:.3} vs human mean {:.3})",
        t.t, t.df, t.p_two_sided, t.group_means.0, t.group_means.1
    );

    // Cross-correlate two noisy traces where one trails the other by 250 ms.
    let n = 20_000usize;
    let shift = 250usize;
    let signal = |t: usize| (t as f64 / 900.0).sin() + 0.3 * (t as f64 / 170.0).cos();
    let a = ProbTrace {
        values: (0..n).map(signal).collect(),
    };
    let b = ProbTrace {
        values: (0..n).map(|t| signal(t.saturating_sub(shift))).collect(),
    };
    let cc = cross_correlate(&a, &b, 1000).expect("correlation");
    println!(
        "cross-correlation: zero-lag r = {:.3} (p = {:.4}), peak r = {:.3} at lag {} ms",
        cc.zero_lag_r, cc.p_zero_lag, cc.peak.1, cc.peak.0
    );
}
