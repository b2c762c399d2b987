//! Dynamic time warping between generated and transcript token sequences, and
//! millisecond-resolution probability traces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::CompletionResponse;
use crate::tokenizer::TokenId;
use crate::transcript::TimedToken;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("cannot align an empty sequence")]
    EmptySequence,
    #[error("warp path index out of range: pair ({0}, {1})")]
    PathOutOfRange(usize, usize),
    #[error("trace length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no traces to average")]
    NoTraces,
}

/// A monotone warp path over (generated index, reference index) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
}

/// Unit distance on token ids: 0 when equal, 1 otherwise.
pub fn unit_distance(a: &TokenId, b: &TokenId) -> f64 {
    if a.id == b.id {
        0.0
    } else {
        1.0
    }
}

/// Exact DTW over the full cost matrix. Steps are (1,0), (0,1), (1,1); ties
/// prefer the diagonal. Returns the warp path and its total cost.
pub fn dtw_align<T>(
    gen: &[T],
    refr: &[T],
    dist: &dyn Fn(&T, &T) -> f64,
) -> Result<(WarpPath, f64), AlignError> {
    dtw_banded_impl(gen, refr, dist, None)
}

/// Banded DTW: only cells within `radius` of the scaled diagonal are explored.
/// Agrees with [`dtw_align`] whenever the optimal path stays inside the band.
pub fn dtw_align_banded<T>(
    gen: &[T],
    refr: &[T],
    dist: &dyn Fn(&T, &T) -> f64,
    radius: usize,
) -> Result<(WarpPath, f64), AlignError> {
    dtw_banded_impl(gen, refr, dist, Some(radius))
}

fn dtw_banded_impl<T>(
    gen: &[T],
    refr: &[T],
    dist: &dyn Fn(&T, &T) -> f64,
    radius: Option<usize>,
) -> Result<(WarpPath, f64), AlignError> {
    let g = gen.len();
    let r = refr.len();
    if g == 0 || r == 0 {
        return Err(AlignError::EmptySequence);
    }
    let in_band = |i: usize, j: usize| -> bool {
        match radius {
            None => true,
            Some(rad) => {
                // Diagonal scaled so (0,0) and (g-1,r-1) are always inside.
                let diag = if g > 1 {
                    i as f64 * (r.saturating_sub(1)) as f64 / (g - 1) as f64
                } else {
                    0.0
                };
                (j as f64 - diag).abs() <= rad as f64
            }
        }
    };
    let mut cost = vec![f64::INFINITY; g * r];
    // 0 = diagonal, 1 = up (gen advance), 2 = left (ref advance)
    let mut step = vec![0u8; g * r];
    for i in 0..g {
        for j in 0..r {
            if !in_band(i, j) {
                continue;
            }
            let d = dist(&gen[i], &refr[j]);
            let idx = i * r + j;
            if i == 0 && j == 0 {
                cost[idx] = d;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut mv = 0u8;
            if i > 0 && j > 0 && cost[(i - 1) * r + (j - 1)] <= best {
                best = cost[(i - 1) * r + (j - 1)];
                mv = 0;
            }
            if i > 0 && cost[(i - 1) * r + j] < best {
                best = cost[(i - 1) * r + j];
                mv = 1;
            }
            if j > 0 && cost[i * r + (j - 1)] < best {
                best = cost[i * r + (j - 1)];
                mv = 2;
            }
            cost[idx] = best + d;
            step[idx] = mv;
        }
    }
    let total = cost[g * r - 1];
    let mut pairs = Vec::with_capacity(g.max(r));
    let (mut i, mut j) = (g - 1, r - 1);
    loop {
        pairs.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match step[i * r + j] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    pairs.reverse();
    Ok((WarpPath { pairs }, total))
}

/// Carry transcript token times over the warp path: each generated token gets
/// the min onset / max offset of the reference tokens it is matched to.
pub fn apply_warp(
    path: &WarpPath,
    ref_times: &[TimedToken],
) -> Result<Vec<(u64, u64)>, AlignError> {
    let gen_len = path.pairs.last().map_or(0, |p| p.0 + 1);
    let mut spans: Vec<Option<(u64, u64)>> = vec![None; gen_len];
    for &(gi, ri) in &path.pairs {
        let t = ref_times
            .get(ri)
            .ok_or(AlignError::PathOutOfRange(gi, ri))?;
        let entry = spans
            .get_mut(gi)
            .ok_or(AlignError::PathOutOfRange(gi, ri))?;
        *entry = Some(match *entry {
            None => (t.onset_ms, t.offset_ms),
            Some((on, off)) => (on.min(t.onset_ms), off.max(t.offset_ms)),
        });
    }
    spans
        .into_iter()
        .enumerate()
        .map(|(gi, s)| s.ok_or(AlignError::PathOutOfRange(gi, 0)))
        .collect()
}

/// A real-valued series at 1ms resolution; NaN marks missing samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbTrace {
    pub values: Vec<f64>,
}

impl ProbTrace {
    pub fn missing(duration_ms: u64) -> Self {
        Self {
            values: vec![f64::NAN; duration_ms as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_defined(&self, t: usize) -> bool {
        !self.values[t].is_nan()
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn fully_defined(&self) -> bool {
        self.values.iter().all(|v| !v.is_nan())
    }
}

/// True for tokens made only of newline characters, covering fused forms like
/// `"\n\n"`.
pub fn is_newline_token(text: &str) -> bool {
    !text.is_empty() && text.chars().all(|c| c == '\n' || c == '\r')
}

/// Build the model's boundary-probability trace: wherever a newline token
/// appears among a token's top-5 candidates, its log-probability fills the
/// token's whole time span. Overlapping fills from many-to-one warps resolve
/// in favor of the later token.
pub fn newline_trace(
    resp: &CompletionResponse,
    gen_times: &[(u64, u64)],
    duration_ms: u64,
) -> Result<ProbTrace, AlignError> {
    if resp.tokens.len() > gen_times.len() {
        return Err(AlignError::LengthMismatch(
            resp.tokens.len(),
            gen_times.len(),
        ));
    }
    let mut trace = ProbTrace::missing(duration_ms);
    for (token, &(onset, offset)) in resp.tokens.iter().zip(gen_times) {
        let newline_lp = token
            .top_candidates
            .iter()
            .filter(|(text, _)| is_newline_token(text))
            .map(|(_, lp)| *lp)
            .fold(f64::NEG_INFINITY, f64::max);
        if newline_lp == f64::NEG_INFINITY {
            continue;
        }
        let end = offset.min(duration_ms);
        for t in onset.min(duration_ms)..end {
            trace.values[t as usize] = newline_lp;
        }
    }
    Ok(trace)
}

/// Pointwise mean over defined samples; missing only where every input is.
pub fn average_traces(traces: &[ProbTrace]) -> Result<ProbTrace, AlignError> {
    let first = traces.first().ok_or(AlignError::NoTraces)?;
    let n = first.len();
    for t in traces {
        if t.len() != n {
            return Err(AlignError::LengthMismatch(n, t.len()));
        }
    }
    let values = (0..n)
        .map(|i| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t in traces {
                let v = t.values[i];
                if !v.is_nan() {
                    sum += v;
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        })
        .collect();
    Ok(ProbTrace { values })
}

/// Write a trace as `time_ms,value,defined` rows, one per millisecond.
pub fn write_trace_csv<W: std::io::Write>(trace: &ProbTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "time_ms,value,defined")?;
    for (t, v) in trace.values.iter().enumerate() {
        if v.is_nan() {
            writeln!(w, "{t},,0")?;
        } else {
            writeln!(w, "{t},{v},1")?;
        }
    }
    Ok(())
}

/// Write a trace run-length-encoded as `start_ms,end_ms,value` rows over
/// defined runs only.
pub fn write_trace_csv_rle<W: std::io::Write>(trace: &ProbTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "start_ms,end_ms,value")?;
    let mut start = 0usize;
    while start < trace.len() {
        let v = trace.values[start];
        if v.is_nan() {
            start += 1;
            continue;
        }
        let mut end = start + 1;
        while end < trace.len() && trace.values[end] == v {
            end += 1;
        }
        writeln!(w, "{start},{end},{v}")?;
        start = end;
    }
    Ok(())
}

/// Read a trace written by [`write_trace_csv_rle`]. Lines starting with `#`
/// are skipped.
pub fn read_trace_csv_rle<R: std::io::BufRead>(
    reader: R,
    duration_ms: u64,
) -> std::io::Result<ProbTrace> {
    let mut trace = ProbTrace::missing(duration_ms);
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("start_ms") {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| {
            s.and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad trace row: {line}"),
                )
            })
        };
        let start = parse(parts.next())? as usize;
        let end = parse(parts.next())? as usize;
        let value = parse(parts.next())?;
        for t in start..end.min(trace.len()) {
            trace.values[t] = value;
        }
    }
    Ok(trace)
}
