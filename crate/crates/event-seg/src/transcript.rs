//! Transcript ingestion: text normalization, word timings, sentence structure,
//! and per-token time spans.
//!
//! A [`Transcript`] is the shared timeline that every comparison maps onto.
//! Words come from the story text, times come from an external forced aligner
//! whose output has been converted to a `word,onset_ms,offset_ms` CSV upstream.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript text contains hyphens; input must be hyphen-free")]
    HyphensPresent,
    #[error("word count mismatch: {text_words} words in text, {timing_records} timing records")]
    WordCountMismatch {
        text_words: usize,
        timing_records: usize,
    },
    #[error("word {index}: text has {text_word:?} but timing record has {timing_word:?}")]
    WordMismatch {
        index: usize,
        text_word: String,
        timing_word: String,
    },
    #[error("non-monotonic timing at record {index}")]
    NonMonotonicTiming { index: usize },
    #[error("tokenizer does not round-trip word {word:?}")]
    TokenizeRoundTrip { word: String },
    #[error("word {word:?} spans {span_ms}ms, too short for {tokens} tokens")]
    TokenSpanTooShort {
        word: String,
        span_ms: u64,
        tokens: usize,
    },
    #[error("invalid sentence starts: must begin at 0, be strictly increasing, and index existing words")]
    BadSentenceStarts,
    #[error("duration {given}ms is shorter than the last word offset {last_offset}ms")]
    DurationTooShort { given: u64, last_offset: u64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One spoken word with its aligned time span, in milliseconds from story start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub onset_ms: u64,
    pub offset_ms: u64,
}

/// A word-timing record as read from the aligner CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordTiming {
    pub word: String,
    pub onset_ms: u64,
    pub offset_ms: u64,
}

/// The normalized story: timed words plus sentence structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub words: Vec<Word>,
    /// Word indices that begin a sentence; always starts with 0 for non-empty
    /// transcripts.
    pub sentence_starts: Vec<usize>,
    pub duration_ms: u64,
}

/// A subword token carrying the slice of its word's time span it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedToken {
    pub token: TokenId,
    pub onset_ms: u64,
    pub offset_ms: u64,
    pub word_index: usize,
}

/// A sentence boundary on the millisecond timeline. Internal boundaries sit
/// midway between the surrounding words; the terminal boundary sits at the
/// last word's offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceBoundary {
    pub index: usize,
    pub time_ms: u64,
    pub after_word: usize,
}

const QUOTE_CHARS: &[char] = &['"', '\u{201C}', '\u{201D}', '\u{00AB}', '\u{00BB}'];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Strip quotes and ellipses from a whitespace token, returning the word core
/// and whether the token ended a sentence (terminal . ! ? before stripping).
fn clean_token(raw: &str) -> (String, bool) {
    let no_quotes: String = raw
        .chars()
        .filter(|c| !QUOTE_CHARS.contains(c) && *c != '\u{2026}')
        .collect();
    let terminal = no_quotes
        .trim_end_matches(|c: char| !is_word_char(c) && !matches!(c, '.' | '!' | '?'))
        .ends_with(['.', '!', '?']);
    let core: String = no_quotes
        .trim_start_matches(|c: char| !is_word_char(c))
        .trim_end_matches(|c: char| !is_word_char(c))
        .to_string();
    (core, terminal)
}

fn starts_uppercase(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Normalize raw story text into words and detected sentence starts.
///
/// Quotation marks and ellipsis sequences are removed; surrounding punctuation
/// is stripped from each word. A sentence starts after terminal punctuation
/// (`.` `!` `?`) when the following word begins with an uppercase letter.
pub fn normalize_text(raw_text: &str) -> (Vec<String>, Vec<usize>) {
    let mut words = Vec::new();
    let mut sentence_starts = Vec::new();
    let mut at_sentence_start = true;
    let mut pending_terminal = false;
    for raw in raw_text.split_whitespace() {
        let (core, terminal) = clean_token(raw);
        if core.is_empty() {
            pending_terminal |= terminal;
            continue;
        }
        if at_sentence_start || (pending_terminal && starts_uppercase(&core)) {
            sentence_starts.push(words.len());
        }
        words.push(core);
        at_sentence_start = false;
        pending_terminal = terminal;
    }
    (words, sentence_starts)
}

fn timing_key(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Build a [`Transcript`] from raw story text and forced-aligner word timings.
pub fn load_transcript(
    raw_text: &str,
    timings: &[WordTiming],
) -> Result<Transcript, TranscriptError> {
    if raw_text.contains('-') {
        return Err(TranscriptError::HyphensPresent);
    }
    let (word_texts, sentence_starts) = normalize_text(raw_text);
    if word_texts.len() != timings.len() {
        return Err(TranscriptError::WordCountMismatch {
            text_words: word_texts.len(),
            timing_records: timings.len(),
        });
    }
    let mut words = Vec::with_capacity(word_texts.len());
    let mut prev_offset = 0u64;
    for (index, (text, timing)) in word_texts.into_iter().zip(timings).enumerate() {
        if timing_key(&text) != timing_key(&timing.word) {
            return Err(TranscriptError::WordMismatch {
                index,
                text_word: text,
                timing_word: timing.word.clone(),
            });
        }
        if timing.offset_ms <= timing.onset_ms || timing.onset_ms < prev_offset {
            return Err(TranscriptError::NonMonotonicTiming { index });
        }
        prev_offset = timing.offset_ms;
        words.push(Word {
            text,
            onset_ms: timing.onset_ms,
            offset_ms: timing.offset_ms,
        });
    }
    let duration_ms = words.last().map_or(0, |w| w.offset_ms);
    Ok(Transcript {
        words,
        sentence_starts,
        duration_ms,
    })
}

impl Transcript {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn n_sentences(&self) -> usize {
        self.sentence_starts.len()
    }

    /// The normalized story text: words joined by single spaces.
    pub fn text(&self) -> String {
        self.words
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Extend the story duration past the last word offset (e.g. trailing
    /// silence covered by the behavioral recording).
    pub fn with_duration(mut self, duration_ms: u64) -> Result<Self, TranscriptError> {
        let last_offset = self.words.last().map_or(0, |w| w.offset_ms);
        if duration_ms < last_offset {
            return Err(TranscriptError::DurationTooShort {
                given: duration_ms,
                last_offset,
            });
        }
        self.duration_ms = duration_ms;
        Ok(self)
    }

    /// Replace detected sentence starts with an explicit sidecar list.
    pub fn with_sentence_starts(
        mut self,
        starts: Vec<usize>,
    ) -> Result<Self, TranscriptError> {
        let valid = !starts.is_empty()
            && starts[0] == 0
            && starts.windows(2).all(|w| w[0] < w[1])
            && starts.iter().all(|&s| s < self.words.len());
        if !valid {
            return Err(TranscriptError::BadSentenceStarts);
        }
        self.sentence_starts = starts;
        Ok(self)
    }

    /// Word-index range `[start, end)` of sentence `s`.
    pub fn sentence_span(&self, s: usize) -> (usize, usize) {
        let start = self.sentence_starts[s];
        let end = self
            .sentence_starts
            .get(s + 1)
            .copied()
            .unwrap_or(self.words.len());
        (start, end)
    }
}

/// Compute the sentence-boundary timeline: each internal boundary sits at the
/// mean of the previous sentence's last-word offset and the next sentence's
/// first-word onset; one terminal boundary sits at the last word's offset.
pub fn sentence_boundary_times(t: &Transcript) -> Vec<SentenceBoundary> {
    if t.is_empty() {
        return Vec::new();
    }
    let mut boundaries = Vec::with_capacity(t.n_sentences());
    for s in 1..t.n_sentences() {
        let prev_last = t.sentence_starts[s] - 1;
        let prev_offset = t.words[prev_last].offset_ms;
        let next_onset = t.words[t.sentence_starts[s]].onset_ms;
        boundaries.push(SentenceBoundary {
            index: boundaries.len(),
            time_ms: (prev_offset + next_onset) / 2,
            after_word: prev_last,
        });
    }
    let last = t.words.len() - 1;
    boundaries.push(SentenceBoundary {
        index: boundaries.len(),
        time_ms: t.words[last].offset_ms,
        after_word: last,
    });
    boundaries
}

/// Tokenize every word and split its time span evenly among the resulting
/// tokens. Fractional splits stay contiguous: the remainder goes to the last
/// token of the word.
pub fn timed_tokens(
    t: &Transcript,
    tok: &dyn Tokenizer,
) -> Result<Vec<TimedToken>, TranscriptError> {
    let mut out = Vec::new();
    for (word_index, word) in t.words.iter().enumerate() {
        let tokens = tok.tokenize_word(&word.text);
        let joined: String = tokens.iter().map(|t| t.text.as_str()).collect();
        if joined != word.text {
            return Err(TranscriptError::TokenizeRoundTrip {
                word: word.text.clone(),
            });
        }
        let span = word.offset_ms - word.onset_ms;
        let k = tokens.len() as u64;
        if span < k {
            return Err(TranscriptError::TokenSpanTooShort {
                word: word.text.clone(),
                span_ms: span,
                tokens: tokens.len(),
            });
        }
        let base = span / k;
        let mut onset = word.onset_ms;
        let n = tokens.len();
        for (i, token) in tokens.into_iter().enumerate() {
            let offset = if i + 1 == n {
                word.offset_ms
            } else {
                onset + base
            };
            out.push(TimedToken {
                token,
                onset_ms: onset,
                offset_ms: offset,
                word_index,
            });
            onset = offset;
        }
    }
    Ok(out)
}

/// Read a `word,onset_ms,offset_ms` timing CSV.
pub fn read_timing_csv<R: Read>(reader: R) -> Result<Vec<WordTiming>, TranscriptError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.deserialize() {
        out.push(record?);
    }
    Ok(out)
}

pub fn read_timing_csv_path(path: &Path) -> Result<Vec<WordTiming>, TranscriptError> {
    read_timing_csv(std::fs::File::open(path)?)
}

/// Read a `sentence_index,first_word_index` sidecar CSV into a sentence-start
/// list ordered by sentence index.
pub fn read_sentence_sidecar<R: Read>(reader: R) -> Result<Vec<usize>, TranscriptError> {
    #[derive(Deserialize)]
    struct Row {
        sentence_index: usize,
        first_word_index: usize,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<Row> = Vec::new();
    for record in rdr.deserialize() {
        rows.push(record?);
    }
    rows.sort_by_key(|r| r.sentence_index);
    Ok(rows.into_iter().map(|r| r.first_word_index).collect())
}
