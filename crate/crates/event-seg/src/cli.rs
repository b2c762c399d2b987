//! End-to-end pipeline commands: segment, consensus, compare, and the
//! replication report. The `event-seg` binary is a thin argument parser over
//! these functions; they are equally usable from library code and examples.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::{average_traces, read_trace_csv_rle, write_trace_csv_rle, ProbTrace};
use crate::consensus::{
    agreement_curve, consensus_boundaries, default_threshold, gaussian_smooth,
    press_logprob_trace, presses_to_sentences, read_annotation_csv, snap_to_sentences,
    write_agreement_csv, AnnotationLog,
};
use crate::llm::{CompletionBackend, HttpBackend, MockBackend, MockScript, PromptVariant};
use crate::segmenter::{
    boundary_vector, newline_story_trace, segment_story, BoundaryVector, CopyReport,
    SegmentError, SegmentOptions,
};
use crate::stats::{
    cross_correlate, distance_ttest, hamming, interpolate_missing, permutation_test,
    write_crosscorr_csv,
};
use crate::tokenizer::{CharChunkTokenizer, Tokenizer, WordTokenizer};
use crate::transcript::{
    load_transcript, read_sentence_sidecar, read_timing_csv, sentence_boundary_times,
    timed_tokens, Transcript,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("output diverged from transcript: {0}")]
    Divergence(String),
    #[error("data mismatch: {0}")]
    DataMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::DataMismatch(_) => 5,
        }
    }
}

impl From<SegmentError> for CliError {
    fn from(e: SegmentError) -> Self {
        match e {
            SegmentError::Divergence { .. } => CliError::Divergence(e.to_string()),
            SegmentError::Backend(b) => CliError::Backend(b.to_string()),
            SegmentError::NoProgress { .. } => CliError::Backend(e.to_string()),
            other => CliError::DataMismatch(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    MockScript { script_path: PathBuf },
    HttpJson { url: String, model: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TokenizerConfig {
    #[default]
    Word,
    CharChunk {
        max_chars: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub sigma_ms: f64,
    /// Absolute threshold on the smoothed curve; omitted = mean + 1 SD.
    pub threshold: Option<f64>,
    pub half_window_ms: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            sigma_ms: 1000.0,
            threshold: None,
            half_window_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsConfig {
    pub n_permutations: usize,
    pub seed: u64,
    pub max_lag_ms: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            n_permutations: 100_000,
            seed: 0,
            max_lag_ms: 3000,
        }
    }
}

fn default_replications() -> usize {
    1
}

fn default_tolerance() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub story_id: String,
    pub text_path: PathBuf,
    pub timing_csv: PathBuf,
    #[serde(default)]
    pub sentence_sidecar: Option<PathBuf>,
    #[serde(default)]
    pub annotation_csv: Option<PathBuf>,
    #[serde(default)]
    pub duration_ms: Option<u64>,
    pub backend: BackendConfig,
    #[serde(default)]
    pub variant: PromptVariant,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Worker threads for concurrent replications; 0 = library default.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_tolerance")]
    pub copy_tolerance: f64,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, CliError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&data).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replications < 1 {
            return Err(CliError::Config("replications must be >= 1".to_string()));
        }
        for (label, path) in [
            ("text_path", Some(&self.text_path)),
            ("timing_csv", Some(&self.timing_csv)),
            ("sentence_sidecar", self.sentence_sidecar.as_ref()),
            ("annotation_csv", self.annotation_csv.as_ref()),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::Config(format!(
                        "{label} does not exist: {}",
                        p.display()
                    )));
                }
            }
        }
        if let BackendConfig::MockScript { script_path } = &self.backend {
            if !script_path.exists() {
                return Err(CliError::Config(format!(
                    "mock script does not exist: {}",
                    script_path.display()
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization; embedded in every output
    /// file for provenance. The API key lives only in the environment and so
    /// can never leak into this hash.
    pub fn config_hash(&self) -> String {
        let toml = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(toml.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

/// Per-run segmentation output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationFile {
    pub story_id: String,
    pub variant: PromptVariant,
    pub run_id: String,
    pub backend_id: String,
    pub n_events: usize,
    pub events: Vec<EventRecord>,
    pub boundary_vector: Vec<u8>,
    pub copy_report: CopyReport,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub start_token: usize,
    pub end_token: usize,
    pub start_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub story_id: String,
    pub n_runs: usize,
    pub event_counts: Vec<usize>,
    pub max_pairwise_hamming: f64,
    pub pairwise_hamming: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

/// Consensus boundary output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundariesFile {
    pub story_id: String,
    pub run: String,
    pub parameters: BoundaryParameters,
    pub boundary_times_ms: Vec<u64>,
    pub sentence_bits: Vec<u8>,
    pub n_boundaries: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryParameters {
    pub sigma_ms: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantsFile {
    pub story_id: String,
    pub participants: Vec<ParticipantBits>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantBits {
    pub participant_id: String,
    pub sentence_bits: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub comparison_id: String,
    pub hamming: f64,
    pub permutation: PermutationSection,
    pub ttest: Option<TTestSection>,
    pub crosscorr: Option<CrossCorrSection>,
    pub per_run: Vec<RunComparison>,
    pub parameters: StatsConfig,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationSection {
    pub p: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TTestSection {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub model_mean: f64,
    pub human_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCorrSection {
    pub zero_lag_r: f64,
    pub p: f64,
    pub peak_lag_ms: i64,
    pub peak_r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunComparison {
    pub run_id: String,
    pub n_events: usize,
    pub hamming: f64,
    pub permutation_p: f64,
}

pub fn build_tokenizer(cfg: &TokenizerConfig) -> Arc<dyn Tokenizer> {
    match cfg {
        TokenizerConfig::Word => Arc::new(WordTokenizer),
        TokenizerConfig::CharChunk { max_chars } => Arc::new(CharChunkTokenizer::new(*max_chars)),
    }
}

pub fn build_backend(
    cfg: &BackendConfig,
    tok: Arc<dyn Tokenizer>,
) -> Result<Arc<dyn CompletionBackend>, CliError> {
    match cfg {
        BackendConfig::MockScript { script_path } => {
            let script = MockScript::from_file(script_path)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Arc::new(MockBackend::new(script, tok)))
        }
        BackendConfig::HttpJson { url, model } => Ok(Arc::new(HttpBackend::new(url, model))),
    }
}

pub fn load_story(cfg: &RunConfig) -> Result<Transcript, CliError> {
    let text = std::fs::read_to_string(&cfg.text_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", cfg.text_path.display())))?;
    let timing_file = std::fs::File::open(&cfg.timing_csv)
        .map_err(|e| CliError::Config(format!("{}: {e}", cfg.timing_csv.display())))?;
    let timings =
        read_timing_csv(timing_file).map_err(|e| CliError::DataMismatch(e.to_string()))?;
    let mut transcript =
        load_transcript(&text, &timings).map_err(|e| CliError::DataMismatch(e.to_string()))?;
    if let Some(sidecar) = &cfg.sentence_sidecar {
        let file = std::fs::File::open(sidecar)
            .map_err(|e| CliError::Config(format!("{}: {e}", sidecar.display())))?;
        let starts =
            read_sentence_sidecar(file).map_err(|e| CliError::DataMismatch(e.to_string()))?;
        transcript = transcript
            .with_sentence_starts(starts)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
    }
    if let Some(d) = cfg.duration_ms {
        transcript = transcript
            .with_duration(d)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
    }
    Ok(transcript)
}

fn load_annotations(cfg: &RunConfig) -> Result<Vec<AnnotationLog>, CliError> {
    let path = cfg
        .annotation_csv
        .as_ref()
        .ok_or_else(|| CliError::Config("annotation_csv is required".to_string()))?;
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let logs = read_annotation_csv(file).map_err(|e| CliError::DataMismatch(e.to_string()))?;
    if logs.is_empty() {
        return Err(CliError::DataMismatch(
            "annotation CSV contains no presses".to_string(),
        ));
    }
    Ok(logs)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn provenance_line(p: &Provenance) -> String {
    format!("# config_sha256={} seed={}\n", p.config_sha256, p.seed)
}

fn run_pool(jobs: usize) -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        builder = builder.num_threads(jobs);
    }
    builder.build().expect("thread pool")
}

/// Run the model segmentation `replications` times, writing one JSON and one
/// trace CSV per run plus a summary with the pairwise Hamming distances
/// between solutions.
pub fn cmd_segment(cfg: &RunConfig) -> Result<SegmentSummary, CliError> {
    cfg.validate()?;
    let transcript = load_story(cfg)?;
    let tok = build_tokenizer(&cfg.tokenizer);
    let backend = build_backend(&cfg.backend, tok.clone())?;
    let timed = timed_tokens(&transcript, tok.as_ref())
        .map_err(|e| CliError::DataMismatch(e.to_string()))?;
    let sentences = sentence_boundary_times(&transcript);
    let provenance = Provenance {
        config_sha256: cfg.config_hash(),
        seed: cfg.stats.seed,
    };
    std::fs::create_dir_all(&cfg.output_dir)?;

    use rayon::prelude::*;
    let pool = run_pool(cfg.jobs);
    let runs: Result<Vec<(SegmentationFile, ProbTrace)>, CliError> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| {
                let options = SegmentOptions {
                    padding: cfg.padding,
                    copy_tolerance: cfg.copy_tolerance,
                    strict: cfg.strict,
                    run_id: format!("run-{i}"),
                    ..SegmentOptions::default()
                };
                let outcome = segment_story(
                    &transcript,
                    tok.as_ref(),
                    backend.as_ref(),
                    cfg.variant,
                    &options,
                )?;
                let bits = boundary_vector(&outcome.segmentation, &sentences, &timed);
                let trace =
                    newline_story_trace(&outcome.windows, &timed, transcript.duration_ms)?;
                let events = outcome
                    .segmentation
                    .events
                    .iter()
                    .map(|e| EventRecord {
                        start_token: e.start_token,
                        end_token: e.end_token,
                        start_ms: timed[e.start_token].onset_ms,
                        text: e.text.clone(),
                    })
                    .collect();
                let file = SegmentationFile {
                    story_id: cfg.story_id.clone(),
                    variant: cfg.variant,
                    run_id: options.run_id.clone(),
                    backend_id: backend.id().to_string(),
                    n_events: outcome.segmentation.n_events(),
                    events,
                    boundary_vector: bits.bits,
                    copy_report: outcome.copy_report,
                    provenance: provenance.clone(),
                };
                Ok((file, trace))
            })
            .collect()
    });
    let runs = runs?;

    for (file, trace) in &runs {
        write_json(
            &cfg.output_dir.join(format!("segmentation_{}.json", file.run_id)),
            file,
        )?;
        let mut out = Vec::new();
        out.extend_from_slice(provenance_line(&provenance).as_bytes());
        write_trace_csv_rle(trace, &mut out)?;
        std::fs::write(
            cfg.output_dir.join(format!("trace_{}.csv", file.run_id)),
            out,
        )?;
    }

    let vectors: Vec<BoundaryVector> = runs
        .iter()
        .map(|(f, _)| BoundaryVector {
            bits: f.boundary_vector.clone(),
        })
        .collect();
    let mut pairwise = vec![vec![0.0; vectors.len()]; vectors.len()];
    let mut max_pair = 0.0f64;
    for i in 0..vectors.len() {
        for j in 0..vectors.len() {
            let d = hamming(&vectors[i], &vectors[j])
                .map_err(|e| CliError::DataMismatch(e.to_string()))?;
            pairwise[i][j] = d;
            if i != j {
                max_pair = max_pair.max(d);
            }
        }
    }
    let summary = SegmentSummary {
        story_id: cfg.story_id.clone(),
        n_runs: runs.len(),
        event_counts: runs.iter().map(|(f, _)| f.n_events).collect(),
        max_pairwise_hamming: max_pair,
        pairwise_hamming: pairwise,
        provenance,
    };
    write_json(&cfg.output_dir.join("segment_summary.json"), &summary)?;
    Ok(summary)
}

/// Aggregate annotations into the consensus solution: boundaries JSON, the
/// agreement curve CSV, and per-participant sentence bit vectors for the
/// distance t-test.
pub fn cmd_consensus(cfg: &RunConfig) -> Result<BoundariesFile, CliError> {
    cfg.validate()?;
    let transcript = load_story(cfg)?;
    let logs = load_annotations(cfg)?;
    let duration = cfg.duration_ms.unwrap_or(transcript.duration_ms);
    let curve = agreement_curve(&logs, duration, cfg.consensus.half_window_ms)
        .map_err(|e| CliError::DataMismatch(e.to_string()))?;
    let threshold = cfg.consensus.threshold.unwrap_or_else(|| {
        default_threshold(&gaussian_smooth(&curve.values, cfg.consensus.sigma_ms))
    });
    let boundaries = consensus_boundaries(&curve, cfg.consensus.sigma_ms, threshold)
        .map_err(|e| CliError::DataMismatch(e.to_string()))?;
    let sentences = sentence_boundary_times(&transcript);
    let bits = snap_to_sentences(&boundaries, &sentences);
    let provenance = Provenance {
        config_sha256: cfg.config_hash(),
        seed: cfg.stats.seed,
    };
    std::fs::create_dir_all(&cfg.output_dir)?;

    let file = BoundariesFile {
        story_id: cfg.story_id.clone(),
        run: "consensus".to_string(),
        parameters: BoundaryParameters {
            sigma_ms: cfg.consensus.sigma_ms,
            threshold,
        },
        boundary_times_ms: boundaries.times_ms.clone(),
        n_boundaries: bits.n_boundaries(),
        sentence_bits: bits.bits.clone(),
        provenance: provenance.clone(),
    };
    write_json(&cfg.output_dir.join("consensus_boundaries.json"), &file)?;

    let mut out = Vec::new();
    out.extend_from_slice(provenance_line(&provenance).as_bytes());
    write_agreement_csv(&curve, &mut out)?;
    std::fs::write(cfg.output_dir.join("agreement_curve.csv"), out)?;

    let participants = ParticipantsFile {
        story_id: cfg.story_id.clone(),
        participants: logs
            .iter()
            .map(|log| ParticipantBits {
                participant_id: log.participant_id.clone(),
                sentence_bits: presses_to_sentences(log, &sentences).bits,
            })
            .collect(),
        provenance,
    };
    write_json(&cfg.output_dir.join("participants.json"), &participants)?;
    Ok(file)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let data = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&data)
        .map_err(|e| CliError::DataMismatch(format!("{}: {e}", path.display())))
}

/// Compare model runs against the human consensus: Hamming + permutation p
/// per run, the distance-to-consensus t-test when participant vectors are
/// available, and the cross-correlation of the averaged newline trace against
/// the human log-press trace when annotations and traces are available.
pub fn cmd_compare(
    cfg: &RunConfig,
    segmentation_files: &[PathBuf],
    consensus_file: &Path,
) -> Result<CompareReport, CliError> {
    let consensus: BoundariesFile = read_json(consensus_file)?;
    if consensus.story_id != cfg.story_id {
        return Err(CliError::DataMismatch(format!(
            "story id mismatch: config has {:?}, consensus file has {:?}",
            cfg.story_id, consensus.story_id
        )));
    }
    let consensus_bits = BoundaryVector {
        bits: consensus.sentence_bits.clone(),
    };
    let mut per_run = Vec::new();
    let mut traces: Vec<ProbTrace> = Vec::new();
    let transcript = load_story(cfg)?;
    let duration = cfg.duration_ms.unwrap_or(transcript.duration_ms);
    for (i, path) in segmentation_files.iter().enumerate() {
        let seg: SegmentationFile = read_json(path)?;
        if seg.story_id != cfg.story_id {
            return Err(CliError::DataMismatch(format!(
                "story id mismatch in {}",
                path.display()
            )));
        }
        let bits = BoundaryVector {
            bits: seg.boundary_vector.clone(),
        };
        let h = hamming(&bits, &consensus_bits)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        let perm = permutation_test(
            &bits,
            &consensus_bits,
            cfg.stats.n_permutations,
            cfg.stats.seed.wrapping_add(i as u64),
        )
        .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        per_run.push(RunComparison {
            run_id: seg.run_id.clone(),
            n_events: seg.n_events,
            hamming: h,
            permutation_p: perm.p_value,
        });
        let trace_path = path.with_file_name(format!("trace_{}.csv", seg.run_id));
        if trace_path.exists() {
            let file = std::fs::File::open(&trace_path)?;
            traces.push(read_trace_csv_rle(std::io::BufReader::new(file), duration)?);
        }
    }
    if per_run.is_empty() {
        return Err(CliError::Config("no segmentation files given".to_string()));
    }

    let mean_hamming =
        per_run.iter().map(|r| r.hamming).sum::<f64>() / per_run.len() as f64;
    // Mean-level permutation p: the first run's test is representative for
    // deterministic replications; report it alongside per-run values.
    let permutation = PermutationSection {
        p: per_run[0].permutation_p,
        n: cfg.stats.n_permutations,
        seed: cfg.stats.seed,
    };

    let participants_path = consensus_file.with_file_name("participants.json");
    let ttest = if participants_path.exists() && per_run.len() >= 2 {
        let participants: ParticipantsFile = read_json(&participants_path)?;
        let human: Vec<f64> = participants
            .participants
            .iter()
            .map(|p| {
                hamming(
                    &BoundaryVector {
                        bits: p.sentence_bits.clone(),
                    },
                    &consensus_bits,
                )
                .map_err(|e| CliError::DataMismatch(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let model: Vec<f64> = per_run.iter().map(|r| r.hamming).collect();
        if human.len() >= 2 {
            let t = distance_ttest(&model, &human)
                .map_err(|e| CliError::DataMismatch(e.to_string()))?;
            Some(TTestSection {
                t: t.t,
                p: t.p_two_sided,
                df: t.df,
                model_mean: t.group_means.0,
                human_mean: t.group_means.1,
            })
        } else {
            None
        }
    } else {
        None
    };

    let crosscorr = if !traces.is_empty() && cfg.annotation_csv.is_some() {
        let logs = load_annotations(cfg)?;
        let curve = agreement_curve(&logs, duration, cfg.consensus.half_window_ms)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        let human = interpolate_missing(&press_logprob_trace(&curve))
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        let model_avg = average_traces(&traces)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        let model = interpolate_missing(&model_avg)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        let cc = cross_correlate(&model, &human, cfg.stats.max_lag_ms)
            .map_err(|e| CliError::DataMismatch(e.to_string()))?;
        std::fs::create_dir_all(&cfg.output_dir)?;
        let mut out = Vec::new();
        out.extend_from_slice(
            provenance_line(&Provenance {
                config_sha256: cfg.config_hash(),
                seed: cfg.stats.seed,
            })
            .as_bytes(),
        );
        write_crosscorr_csv(&cc, &mut out)?;
        std::fs::write(cfg.output_dir.join("crosscorr.csv"), out)?;
        Some(CrossCorrSection {
            zero_lag_r: cc.zero_lag_r,
            p: cc.p_zero_lag,
            peak_lag_ms: cc.peak.0,
            peak_r: cc.peak.1,
        })
    } else {
        None
    };

    let report = CompareReport {
        comparison_id: format!("{}_{:?}", cfg.story_id, cfg.variant).to_lowercase(),
        hamming: mean_hamming,
        permutation,
        ttest,
        crosscorr,
        per_run,
        parameters: cfg.stats.clone(),
        provenance: Provenance {
            config_sha256: cfg.config_hash(),
            seed: cfg.stats.seed,
        },
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("compare_report.json"), &report)?;
    Ok(report)
}

/// Summarize a set of per-run segmentation files: event counts and pairwise
/// Hamming distances, the replication table.
pub fn cmd_replicate_report(
    segmentation_files: &[PathBuf],
) -> Result<BTreeMap<String, (usize, f64)>, CliError> {
    let mut files = Vec::new();
    for path in segmentation_files {
        let seg: SegmentationFile = read_json(path)?;
        files.push(seg);
    }
    if files.is_empty() {
        return Err(CliError::Config("no segmentation files given".to_string()));
    }
    let mut out = BTreeMap::new();
    for (i, a) in files.iter().enumerate() {
        let va = BoundaryVector {
            bits: a.boundary_vector.clone(),
        };
        let mut max_d = 0.0f64;
        for (j, b) in files.iter().enumerate() {
            if i == j {
                continue;
            }
            let vb = BoundaryVector {
                bits: b.boundary_vector.clone(),
            };
            let d = hamming(&va, &vb).map_err(|e| CliError::DataMismatch(e.to_string()))?;
            max_d = max_d.max(d);
        }
        out.insert(a.run_id.clone(), (a.n_events, max_d));
    }
    Ok(out)
}

/// Print the comparison report as a compact table, one story row, mirroring
/// the layout of published event-count / distance tables.
pub fn print_compare_table<W: Write>(report: &CompareReport, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<20} {:>10} {:>12} {:>12}",
        "comparison", "N events", "distance", "p-val"
    )?;
    for run in &report.per_run {
        writeln!(
            w,
            "{:<20} {:>10} {:>12.3} {:>12.4}",
            run.run_id, run.n_events, run.hamming, run.permutation_p
        )?;
    }
    writeln!(
        w,
        "{:<20} {:>10} {:>12.3} {:>12.4}",
        "mean", "", report.hamming, report.permutation.p
    )?;
    if let Some(t) = &report.ttest {
        writeln!(
            w,
            "t-test: t = {:.3}, df = {:.1}, p = {:.4} (model mean {:.3} vs human mean {:.3})",
            t.t, t.df, t.p, t.model_mean, t.human_mean
        )?;
    }
    if let Some(cc) = &report.crosscorr {
        writeln!(
            w,
            "cross-correlation: zero-lag r = {:.3} (p = {:.4}), peak r = {:.3} at {}ms",
            cc.zero_lag_r, cc.p, cc.peak_r, cc.peak_lag_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config(dir: &Path) -> RunConfig {
        RunConfig {
            story_id: "test".to_string(),
            text_path: dir.join("story.txt"),
            timing_csv: dir.join("timing.csv"),
            sentence_sidecar: None,
            annotation_csv: None,
            duration_ms: None,
            backend: BackendConfig::MockScript {
                script_path: dir.join("script.json"),
            },
            variant: PromptVariant::Standard,
            padding: 0,
            replications: 1,
            jobs: 1,
            strict: false,
            copy_tolerance: 0.8,
            tokenizer: TokenizerConfig::Word,
            consensus: ConsensusConfig::default(),
            stats: StatsConfig::default(),
            output_dir: dir.join("out"),
        }
    }

    #[test]
    fn missing_timing_csv_is_a_config_error() {
        let cfg = minimal_config(Path::new("/nonexistent"));
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let cfg = minimal_config(Path::new("/tmp/x"));
        let h1 = cfg.config_hash();
        let h2 = cfg.config_hash();
        assert_eq!(h1, h2);
        let mut changed = cfg;
        changed.stats.seed = 99;
        assert_ne!(h1, changed.config_hash());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = minimal_config(Path::new("/tmp/x"));
        let toml = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&toml).unwrap();
        assert_eq!(back.story_id, "test");
        assert_eq!(back.config_hash(), cfg.config_hash());
    }
}
