//! Human annotation aggregation: button presses to response vectors, agreement
//! curves, smoothed-and-thresholded consensus boundaries, and the human
//! log-probability trace.

use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::ProbTrace;
use crate::segmenter::{nearest_sentence_boundary, BoundaryVector};
use crate::transcript::SentenceBoundary;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("press at {press_ms}ms outside story duration {duration_ms}ms (participant {participant_id})")]
    PressOutOfRange {
        participant_id: String,
        press_ms: u64,
        duration_ms: u64,
    },
    #[error("no annotation logs provided")]
    NoLogs,
    #[error("kernel sigma must be positive")]
    BadSigma,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Button presses of one participant, milliseconds from story start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLog {
    pub participant_id: String,
    pub press_times_ms: Vec<u64>,
    /// Section label for stories annotated in parts.
    pub section: Option<String>,
}

impl AnnotationLog {
    pub fn new(participant_id: impl Into<String>, mut press_times_ms: Vec<u64>) -> Self {
        press_times_ms.sort_unstable();
        Self {
            participant_id: participant_id.into(),
            press_times_ms,
            section: None,
        }
    }
}

/// Binary vector at 1ms resolution: 1 where a press lies within the
/// surrounding window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseVector {
    pub bits: Vec<bool>,
}

impl ResponseVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Ratio of participants responding at each millisecond.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementCurve {
    pub values: Vec<f64>,
    pub n_participants: usize,
}

/// Peak-picked consensus boundaries and the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusBoundaries {
    pub times_ms: Vec<u64>,
    pub kernel_sigma_ms: f64,
    pub threshold: f64,
}

/// Default "surrounding second": a symmetric ±500ms window.
pub const DEFAULT_HALF_WINDOW_MS: u64 = 500;

/// Mark every millisecond within `half_window_ms` of a press, clipped at the
/// story edges.
pub fn response_vector(
    log: &AnnotationLog,
    duration_ms: u64,
    half_window_ms: u64,
) -> Result<ResponseVector, ConsensusError> {
    let mut bits = vec![false; duration_ms as usize];
    for &p in &log.press_times_ms {
        if p > duration_ms {
            return Err(ConsensusError::PressOutOfRange {
                participant_id: log.participant_id.clone(),
                press_ms: p,
                duration_ms,
            });
        }
        let lo = p.saturating_sub(half_window_ms);
        let hi = (p + half_window_ms).min(duration_ms.saturating_sub(1));
        for t in lo..=hi {
            if (t as usize) < bits.len() {
                bits[t as usize] = true;
            }
        }
    }
    Ok(ResponseVector { bits })
}

/// Pointwise mean of participant response vectors.
pub fn agreement_curve(
    logs: &[AnnotationLog],
    duration_ms: u64,
    half_window_ms: u64,
) -> Result<AgreementCurve, ConsensusError> {
    if logs.is_empty() {
        return Err(ConsensusError::NoLogs);
    }
    let vectors: Vec<ResponseVector> = logs
        .par_iter()
        .map(|log| response_vector(log, duration_ms, half_window_ms))
        .collect::<Result<_, _>>()?;
    let n = vectors.len() as f64;
    let values = (0..duration_ms as usize)
        .into_par_iter()
        .map(|t| vectors.iter().filter(|v| v.bits[t]).count() as f64 / n)
        .collect();
    Ok(AgreementCurve {
        values,
        n_participants: logs.len(),
    })
}

/// Gaussian smoothing with a kernel truncated at 4 sigma; edge windows are
/// renormalized over the in-range kernel mass so a curve in [0,1] stays there.
pub fn gaussian_smooth(values: &[f64], sigma_ms: f64) -> Vec<f64> {
    assert!(sigma_ms > 0.0);
    let radius = (4.0 * sigma_ms).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-0.5 * (d as f64 / sigma_ms).powi(2)).exp())
        .collect();
    let n = values.len() as i64;
    (0..n)
        .into_par_iter()
        .map(|t| {
            let mut acc = 0.0;
            let mut mass = 0.0;
            let lo = (t - radius).max(0);
            let hi = (t + radius).min(n - 1);
            for s in lo..=hi {
                let k = kernel[(s - t + radius) as usize];
                acc += k * values[s as usize];
                mass += k;
            }
            acc / mass
        })
        .collect()
}

/// A threshold at mean + 1 SD of the smoothed curve; the source studies do
/// not publish their exact value, so this is the calibratable default.
pub fn default_threshold(smoothed: &[f64]) -> f64 {
    let n = smoothed.len() as f64;
    let mean = smoothed.iter().sum::<f64>() / n;
    let var = smoothed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    mean + var.sqrt()
}

/// Smooth the agreement curve, threshold it, and take each supra-threshold
/// cluster's maximum as a consensus event boundary. Plateau ties take the
/// earliest sample.
pub fn consensus_boundaries(
    curve: &AgreementCurve,
    kernel_sigma_ms: f64,
    threshold: f64,
) -> Result<ConsensusBoundaries, ConsensusError> {
    if kernel_sigma_ms <= 0.0 {
        return Err(ConsensusError::BadSigma);
    }
    let smoothed = gaussian_smooth(&curve.values, kernel_sigma_ms);
    let mut times_ms = Vec::new();
    let mut t = 0usize;
    while t < smoothed.len() {
        if smoothed[t] <= threshold {
            t += 1;
            continue;
        }
        let start = t;
        while t < smoothed.len() && smoothed[t] > threshold {
            t += 1;
        }
        let peak = (start..t)
            .max_by(|&a, &b| smoothed[a].total_cmp(&smoothed[b]).then(b.cmp(&a)))
            .expect("cluster is non-empty");
        times_ms.push(peak as u64);
    }
    Ok(ConsensusBoundaries {
        times_ms,
        kernel_sigma_ms,
        threshold,
    })
}

/// Snap consensus boundary times to their nearest sentence boundaries;
/// duplicate snaps collapse to one bit.
pub fn snap_to_sentences(
    cb: &ConsensusBoundaries,
    sentence_boundaries: &[SentenceBoundary],
) -> BoundaryVector {
    let mut v = BoundaryVector::zeros(sentence_boundaries.len());
    for &t in &cb.times_ms {
        if let Some(i) = nearest_sentence_boundary(sentence_boundaries, t) {
            v.set(i);
        }
    }
    v
}

/// Snap one participant's individual presses to sentence boundaries.
pub fn presses_to_sentences(
    log: &AnnotationLog,
    sentence_boundaries: &[SentenceBoundary],
) -> BoundaryVector {
    let mut v = BoundaryVector::zeros(sentence_boundaries.len());
    for &p in &log.press_times_ms {
        if let Some(i) = nearest_sentence_boundary(sentence_boundaries, p) {
            v.set(i);
        }
    }
    v
}

/// Log button-press probability: log of the (unsmoothed) response ratio,
/// missing where nobody pressed. Missing samples are interpolated downstream.
pub fn press_logprob_trace(curve: &AgreementCurve) -> ProbTrace {
    let values = curve
        .values
        .iter()
        .map(|&r| if r > 0.0 { r.ln() } else { f64::NAN })
        .collect();
    ProbTrace { values }
}

/// Read an annotation CSV (`participant_id,press_time_ms[,section]`), one row
/// per press, into per-participant logs ordered by first appearance.
pub fn read_annotation_csv<R: Read>(reader: R) -> Result<Vec<AnnotationLog>, ConsensusError> {
    #[derive(Deserialize)]
    struct Row {
        participant_id: String,
        press_time_ms: u64,
        #[serde(default)]
        section: Option<String>,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut logs: std::collections::HashMap<String, AnnotationLog> =
        std::collections::HashMap::new();
    for record in rdr.deserialize() {
        let row: Row = record?;
        let entry = logs
            .entry(row.participant_id.clone())
            .or_insert_with(|| {
                order.push(row.participant_id.clone());
                AnnotationLog {
                    participant_id: row.participant_id.clone(),
                    press_times_ms: Vec::new(),
                    section: row.section.clone(),
                }
            });
        entry.press_times_ms.push(row.press_time_ms);
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut log = logs.remove(&id).expect("inserted above");
        log.press_times_ms.sort_unstable();
        out.push(log);
    }
    Ok(out)
}

/// Write an agreement curve as `time_ms,value` rows.
pub fn write_agreement_csv<W: std::io::Write>(
    curve: &AgreementCurve,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "time_ms,value")?;
    for (t, v) in curve.values.iter().enumerate() {
        writeln!(w, "{t},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(id: &str, presses: &[u64]) -> AnnotationLog {
        AnnotationLog::new(id, presses.to_vec())
    }

    #[test]
    fn single_press_marks_surrounding_second() {
        let v = response_vector(&log("p1", &[5000]), 10_000, 500).unwrap();
        assert!(!v.bits[4499]);
        assert!(v.bits[4500]);
        assert!(v.bits[5500]);
        assert!(!v.bits[5501]);
    }

    #[test]
    fn no_presses_means_all_zeros() {
        let v = response_vector(&log("p1", &[]), 1000, 500).unwrap();
        assert!(v.bits.iter().all(|b| !b));
    }

    #[test]
    fn edge_press_is_clipped() {
        let v = response_vector(&log("p1", &[200]), 10_000, 500).unwrap();
        assert!(v.bits[0]);
        assert!(v.bits[700]);
        assert!(!v.bits[701]);
    }

    #[test]
    fn press_outside_duration_is_an_error() {
        let err = response_vector(&log("p1", &[2000]), 1000, 500).unwrap_err();
        assert!(matches!(err, ConsensusError::PressOutOfRange { .. }));
    }

    #[test]
    fn agreement_is_participant_ratio() {
        let logs = vec![
            log("a", &[5000]),
            log("b", &[5000]),
            log("c", &[]),
            log("d", &[]),
        ];
        let curve = agreement_curve(&logs, 10_000, 500).unwrap();
        assert_eq!(curve.values[5000], 0.5);
        assert_eq!(curve.values[100], 0.0);
    }

    #[test]
    fn identical_logs_reproduce_single_vector() {
        let logs = vec![log("a", &[3000]), log("b", &[3000])];
        let curve = agreement_curve(&logs, 6000, 500).unwrap();
        let single = response_vector(&logs[0], 6000, 500).unwrap();
        for t in 0..6000 {
            assert_eq!(curve.values[t], if single.bits[t] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn disjoint_presses_give_two_half_plateaus() {
        let logs = vec![log("a", &[2000]), log("b", &[7000])];
        let curve = agreement_curve(&logs, 10_000, 500).unwrap();
        assert_eq!(curve.values[2000], 0.5);
        assert_eq!(curve.values[7000], 0.5);
        assert_eq!(curve.values[4500], 0.0);
    }

    #[test]
    fn participant_order_does_not_matter() {
        let mut logs = vec![log("a", &[1000]), log("b", &[2500]), log("c", &[4000])];
        let curve1 = agreement_curve(&logs, 6000, 500).unwrap();
        logs.reverse();
        let curve2 = agreement_curve(&logs, 6000, 500).unwrap();
        assert_eq!(curve1.values, curve2.values);
    }

    #[test]
    fn all_zero_participant_rescales_curve() {
        let logs = vec![log("a", &[3000]), log("b", &[3000])];
        let base = agreement_curve(&logs, 6000, 500).unwrap();
        let mut extended = logs.clone();
        extended.push(log("z", &[]));
        let grown = agreement_curve(&extended, 6000, 500).unwrap();
        for t in 0..6000 {
            assert!((grown.values[t] - base.values[t] * 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unanimous_press_peaks_at_press_time() {
        let logs: Vec<AnnotationLog> = (0..5).map(|i| log(&format!("p{i}"), &[5000])).collect();
        let curve = agreement_curve(&logs, 10_000, 500).unwrap();
        let cb = consensus_boundaries(&curve, 300.0, 0.5).unwrap();
        assert_eq!(cb.times_ms.len(), 1);
        // Symmetric kernel over a symmetric plateau keeps the peak centered.
        assert!(cb.times_ms[0].abs_diff(5000) <= 1);
    }

    #[test]
    fn flat_curve_below_threshold_has_no_boundaries() {
        let curve = AgreementCurve {
            values: vec![0.1; 5000],
            n_participants: 10,
        };
        let cb = consensus_boundaries(&curve, 300.0, 0.5).unwrap();
        assert!(cb.times_ms.is_empty());
    }

    #[test]
    fn two_clusters_give_two_boundaries() {
        let logs = vec![log("a", &[2000, 8000]), log("b", &[2050, 8010])];
        let curve = agreement_curve(&logs, 12_000, 500).unwrap();
        let cb = consensus_boundaries(&curve, 200.0, 0.5).unwrap();
        assert_eq!(cb.times_ms.len(), 2);
        assert!(cb.times_ms[0].abs_diff(2025) < 300);
        assert!(cb.times_ms[1].abs_diff(8005) < 300);
    }

    #[test]
    fn smoothing_keeps_range_and_preserves_constants() {
        let smoothed = gaussian_smooth(&vec![0.25; 2000], 100.0);
        for v in smoothed {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    fn sb(times: &[u64]) -> Vec<SentenceBoundary> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| SentenceBoundary {
                index: i,
                time_ms: t,
                after_word: i,
            })
            .collect()
    }

    #[test]
    fn snap_picks_nearest_sentence() {
        let cb = ConsensusBoundaries {
            times_ms: vec![2250],
            kernel_sigma_ms: 1000.0,
            threshold: 0.5,
        };
        let v = snap_to_sentences(&cb, &sb(&[2200, 3100]));
        assert_eq!(v.bits, vec![1, 0]);
    }

    #[test]
    fn duplicate_snaps_collapse() {
        let cb = ConsensusBoundaries {
            times_ms: vec![2100, 2300],
            kernel_sigma_ms: 1000.0,
            threshold: 0.5,
        };
        let v = snap_to_sentences(&cb, &sb(&[2200, 9000]));
        assert_eq!(v.n_boundaries(), 1);
    }

    #[test]
    fn empty_boundaries_give_zero_vector() {
        let cb = ConsensusBoundaries {
            times_ms: Vec::new(),
            kernel_sigma_ms: 1000.0,
            threshold: 0.5,
        };
        assert_eq!(snap_to_sentences(&cb, &sb(&[100, 200])).n_boundaries(), 0);
    }

    #[test]
    fn snapping_is_idempotent() {
        let sentences = sb(&[1000, 2500, 4000]);
        let cb = ConsensusBoundaries {
            times_ms: vec![1200, 3900],
            kernel_sigma_ms: 1000.0,
            threshold: 0.5,
        };
        let v1 = snap_to_sentences(&cb, &sentences);
        let snapped_times: Vec<u64> = v1
            .bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| sentences[i].time_ms)
            .collect();
        let v2 = snap_to_sentences(
            &ConsensusBoundaries {
                times_ms: snapped_times,
                kernel_sigma_ms: 1000.0,
                threshold: 0.5,
            },
            &sentences,
        );
        assert_eq!(v1, v2);
    }

    #[test]
    fn logprob_trace_definition() {
        let curve = AgreementCurve {
            values: vec![0.5, 0.0, 1.0],
            n_participants: 2,
        };
        let trace = press_logprob_trace(&curve);
        assert!((trace.values[0] - 0.5f64.ln()).abs() < 1e-12);
        assert!(trace.values[1].is_nan());
        assert_eq!(trace.values[2], 0.0);
    }

    #[test]
    fn annotation_csv_groups_by_participant() {
        let csv = "participant_id,press_time_ms\np1,5000\np2,100\np1,2000\n";
        let logs = read_annotation_csv(csv.as_bytes()).unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(logs[0].participant_id, "p1");
        assert_eq!(logs[0].press_times_ms, vec![2000, 5000]);
        assert_eq!(logs[1].press_times_ms, vec![100]);
    }

    #[test]
    fn annotation_csv_with_section_column() {
        let csv = "participant_id,press_time_ms,section\np1,5000,q1\n";
        let logs = read_annotation_csv(csv.as_bytes()).unwrap();
        assert_eq!(logs[0].section.as_deref(), Some("q1"));
    }
}
