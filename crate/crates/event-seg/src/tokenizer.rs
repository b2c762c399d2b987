//! Pluggable subword tokenization.
//!
//! The pipeline never depends on a particular vocabulary; it only needs a
//! tokenizer that splits a word into subword pieces whose concatenation
//! reproduces the word exactly. Token ids are derived from the piece text by
//! hashing, so two tokenizer instances always agree on ids.

/// A subword token: a stable id plus the surface text it covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenId {
    pub id: u64,
    pub text: String,
}

impl TokenId {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: stable_hash(&text),
            text,
        }
    }
}

/// FNV-1a over the UTF-8 bytes. Stable across platforms and runs.
fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Splits single words into subword tokens. Implementations must round-trip:
/// concatenating the returned token texts reproduces the input word.
pub trait Tokenizer: Send + Sync {
    fn tokenize_word(&self, word: &str) -> Vec<TokenId>;

    /// Tokenize whitespace-separated text, dropping the whitespace.
    fn tokenize_text(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }
}

/// One token per word.
#[derive(Debug, Clone, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<TokenId> {
        if word.is_empty() {
            Vec::new()
        } else {
            vec![TokenId::new(word)]
        }
    }
}

/// Splits words into chunks of at most `max_chars` characters. A cheap stand-in
/// for a trained subword vocabulary that still exercises the multi-token-per-word
/// paths (time splitting, warping).
#[derive(Debug, Clone)]
pub struct CharChunkTokenizer {
    pub max_chars: usize,
}

impl CharChunkTokenizer {
    pub fn new(max_chars: usize) -> Self {
        assert!(max_chars > 0, "chunk size must be positive");
        Self { max_chars }
    }
}

impl Default for CharChunkTokenizer {
    fn default() -> Self {
        Self::new(4)
    }
}

impl Tokenizer for CharChunkTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<TokenId> {
        let chars: Vec<char> = word.chars().collect();
        chars
            .chunks(self.max_chars)
            .map(|c| TokenId::new(c.iter().collect::<String>()))
            .collect()
    }
}
