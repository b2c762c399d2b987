//! Quantitative comparison of segmentations: Hamming distance, sentence
//! permutation tests, Welch t-tests, missing-value interpolation, and lagged
//! cross-correlation of log-probability traces.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::align::ProbTrace;
use crate::segmenter::BoundaryVector;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values per group, got {got}")]
    GroupTooSmall { needed: usize, got: usize },
    #[error("trace is fully missing; nothing to interpolate")]
    FullyMissing,
    #[error("trace contains missing values; interpolate first")]
    NotFullyDefined,
    #[error("zero-variance input to correlation")]
    ZeroVariance,
    #[error("need at least one permutation")]
    NoPermutations,
}

/// Hamming distance: the proportion of disagreeing components.
pub fn hamming(a: &BoundaryVector, b: &BoundaryVector) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let diff = a
        .bits
        .iter()
        .zip(&b.bits)
        .filter(|(x, y)| (**x != 0) != (**y != 0))
        .count();
    Ok(diff as f64 / a.len() as f64)
}

/// How a permutation p-value is computed from the null distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PValueRule {
    /// Proportion of permuted distances strictly smaller than observed.
    #[default]
    Strict,
    /// (k+1)/(n+1) smoothing; avoids p = 0 for degenerate vectors.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub observed_distance: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

/// Sentence-permutation test: shuffle the positions of the model vector
/// uniformly at random, holding the human vector fixed, and report the
/// proportion of permuted Hamming distances smaller than the observed one.
/// Deterministic for a fixed seed.
pub fn permutation_test(
    model: &BoundaryVector,
    human: &BoundaryVector,
    n_permutations: usize,
    seed: u64,
) -> Result<PermutationTestResult, StatsError> {
    permutation_test_with_rule(model, human, n_permutations, seed, PValueRule::Strict)
}

pub fn permutation_test_with_rule(
    model: &BoundaryVector,
    human: &BoundaryVector,
    n_permutations: usize,
    seed: u64,
    rule: PValueRule,
) -> Result<PermutationTestResult, StatsError> {
    if model.len() != human.len() {
        return Err(StatsError::LengthMismatch(model.len(), human.len()));
    }
    if n_permutations == 0 {
        return Err(StatsError::NoPermutations);
    }
    let observed = hamming(model, human)?;
    let len = model.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permuted = model.bits.clone();
    let mut smaller = 0usize;
    for _ in 0..n_permutations {
        permuted.shuffle(&mut rng);
        let diff = permuted
            .iter()
            .zip(&human.bits)
            .filter(|(x, y)| (**x != 0) != (**y != 0))
            .count();
        if (diff as f64 / len) < observed {
            smaller += 1;
        }
    }
    let p_value = match rule {
        PValueRule::Strict => smaller as f64 / n_permutations as f64,
        PValueRule::Smoothed => (smaller as f64 + 1.0) / (n_permutations as f64 + 1.0),
    };
    Ok(PermutationTestResult {
        observed_distance: observed,
        p_value,
        n_permutations,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p_two_sided: f64,
    pub df: f64,
    pub group_means: (f64, f64),
    pub group_sds: (f64, f64),
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    2.0 * dist.cdf(-t.abs())
}

/// Welch's independent two-sample, two-sided t-test. Welch (rather than a
/// pooled variance) because the group sizes here are highly unequal: a
/// handful of model runs against dozens of annotators.
pub fn distance_ttest(
    model_distances: &[f64],
    human_distances: &[f64],
) -> Result<TTestResult, StatsError> {
    for group in [model_distances, human_distances] {
        if group.len() < 2 {
            return Err(StatsError::GroupTooSmall {
                needed: 2,
                got: group.len(),
            });
        }
    }
    let (m1, s1) = mean_and_sd(model_distances);
    let (m2, s2) = mean_and_sd(human_distances);
    let n1 = model_distances.len() as f64;
    let n2 = human_distances.len() as f64;
    let se2 = s1 * s1 / n1 + s2 * s2 / n2;
    if se2 == 0.0 {
        // Both groups constant: identical means are a perfect null fit.
        let equal = m1 == m2;
        return Ok(TTestResult {
            t: if equal { 0.0 } else { f64::INFINITY },
            p_two_sided: if equal { 1.0 } else { 0.0 },
            df: n1 + n2 - 2.0,
            group_means: (m1, m2),
            group_sds: (s1, s2),
        });
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2
        / ((s1 * s1 / n1).powi(2) / (n1 - 1.0) + (s2 * s2 / n2).powi(2) / (n2 - 1.0));
    Ok(TTestResult {
        t,
        p_two_sided: t_two_sided_p(t, df),
        df,
        group_means: (m1, m2),
        group_sds: (s1, s2),
    })
}

/// Linear interpolation of missing samples between their nearest defined
/// neighbors; leading and trailing gaps hold the nearest defined value.
/// Defined samples are never altered.
pub fn interpolate_missing(trace: &ProbTrace) -> Result<ProbTrace, StatsError> {
    let n = trace.len();
    let mut values = trace.values.clone();
    let mut defined: Vec<usize> = (0..n).filter(|&i| !values[i].is_nan()).collect();
    if defined.is_empty() {
        return Err(StatsError::FullyMissing);
    }
    // Edge holds.
    let first = defined[0];
    let last = *defined.last().expect("non-empty");
    for v in values.iter_mut().take(first) {
        *v = trace.values[first];
    }
    for v in values.iter_mut().skip(last + 1) {
        *v = trace.values[last];
    }
    if first > 0 {
        defined.insert(0, 0);
    }
    if last + 1 < n {
        defined.push(n - 1);
    }
    for pair in defined.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a <= 1 {
            continue;
        }
        let va = values[a];
        let vb = values[b];
        let span = (b - a) as f64;
        for i in a + 1..b {
            values[i] = va + (vb - va) * (i - a) as f64 / span;
        }
    }
    Ok(ProbTrace { values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub lags_ms: Vec<i64>,
    pub r: Vec<f64>,
    pub zero_lag_r: f64,
    pub peak: (i64, f64),
    pub p_zero_lag: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    pearson(&x[..x.len() - 1], &x[1..])
}

/// Pearson correlation of the overlapping samples at every integer-ms lag in
/// `[-max_lag, +max_lag]`. A positive peak lag means `b` trails `a` (e.g. a
/// perception-to-action delay in the button presses).
///
/// The zero-lag p-value uses a t-test on r with an effective sample size
/// `n_eff = n (1 - ra rb) / (1 + ra rb)` from the two lag-1 autocorrelations,
/// since millisecond samples are massively autocorrelated.
pub fn cross_correlate(
    a: &ProbTrace,
    b: &ProbTrace,
    max_lag_ms: u64,
) -> Result<CrossCorrelation, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if !a.fully_defined() || !b.fully_defined() {
        return Err(StatsError::NotFullyDefined);
    }
    let n = a.len();
    let max_lag = max_lag_ms as i64;
    if n == 0 || n as i64 <= max_lag {
        return Err(StatsError::LengthMismatch(n, max_lag as usize));
    }
    let lags_ms: Vec<i64> = (-max_lag..=max_lag).collect();
    let r: Vec<f64> = lags_ms
        .par_iter()
        .map(|&lag| {
            let (xa, xb) = if lag >= 0 {
                (&a.values[..n - lag as usize], &b.values[lag as usize..])
            } else {
                let s = (-lag) as usize;
                (&a.values[s..], &b.values[..n - s])
            };
            pearson(xa, xb)
        })
        .collect();
    for &v in &r {
        if v.is_nan() {
            return Err(StatsError::ZeroVariance);
        }
    }
    let zero_idx = max_lag as usize;
    let zero_lag_r = r[zero_idx];
    let peak_idx = (0..r.len())
        .max_by(|&i, &j| r[i].total_cmp(&r[j]))
        .expect("non-empty");
    let peak = (lags_ms[peak_idx], r[peak_idx]);

    let ra = lag1_autocorrelation(&a.values);
    let rb = lag1_autocorrelation(&b.values);
    let shrink = (1.0 - ra * rb) / (1.0 + ra * rb);
    let n_eff = (n as f64 * shrink).max(4.0);
    let t = zero_lag_r * ((n_eff - 2.0) / (1.0 - zero_lag_r * zero_lag_r)).sqrt();
    let p_zero_lag = t_two_sided_p(t, n_eff - 2.0);

    Ok(CrossCorrelation {
        lags_ms,
        r,
        zero_lag_r,
        peak,
        p_zero_lag,
    })
}

/// Block-permutation alternative for the zero-lag significance: permute
/// whole blocks of `b` and take the proportion of |r| values at least as
/// large as observed, with (k+1)/(n+1) smoothing.
pub fn zero_lag_p_block_permutation(
    a: &ProbTrace,
    b: &ProbTrace,
    block_ms: usize,
    n_permutations: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if !a.fully_defined() || !b.fully_defined() {
        return Err(StatsError::NotFullyDefined);
    }
    if n_permutations == 0 {
        return Err(StatsError::NoPermutations);
    }
    let observed = pearson(&a.values, &b.values).abs();
    let blocks: Vec<&[f64]> = b.values.chunks(block_ms.max(1)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let mut shuffled = Vec::with_capacity(b.len());
    let mut at_least = 0usize;
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        shuffled.clear();
        for &i in &order {
            shuffled.extend_from_slice(blocks[i]);
        }
        if pearson(&a.values, &shuffled).abs() >= observed {
            at_least += 1;
        }
    }
    Ok((at_least as f64 + 1.0) / (n_permutations as f64 + 1.0))
}

/// Write `lag_ms,r` rows for plotting.
pub fn write_crosscorr_csv<W: std::io::Write>(
    cc: &CrossCorrelation,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "lag_ms,r")?;
    for (lag, r) in cc.lags_ms.iter().zip(&cc.r) {
        writeln!(w, "{lag},{r}")?;
    }
    Ok(())
}
