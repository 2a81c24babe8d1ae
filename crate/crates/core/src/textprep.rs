//! Text normalization, tokenization, vocabularies and padded index sequences.

use std::collections::{HashMap, HashSet};
use std::io;
use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bundled English stop-word list (version 1, 153 words).
pub const STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

/// Index reserved for padding; never assigned to a token.
pub const PAD_INDEX: usize = 0;

pub const DEFAULT_MIN_DOC_FREQUENCY: usize = 2;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus collection")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("vocabulary line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .filter(|l| !l.starts_with('#'))
            .flat_map(str::split_whitespace)
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S*").expect("static regex"))
}

/// Lowercase, strip web links, digits, punctuation and stop-words, collapse
/// whitespace. Total and idempotent.
pub fn normalize_text(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let unlinked = url_pattern().replace_all(&lowered, " ");
    let letters: String = unlinked
        .chars()
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    letters
        .split_whitespace()
        .filter(|t| !is_stopword(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Split normalized text on whitespace.
pub fn tokenize(normalized: &str) -> Vec<String> {
    normalized.split_whitespace().map(str::to_string).collect()
}

/// Token to index mapping. Index 0 is padding; tokens occupy `1..=size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    // index_to_token[i - 1] is the token with index i
    index_to_token: Vec<String>,
    min_doc_frequency: usize,
}

impl Vocabulary {
    /// Number of tokens, excluding padding.
    pub fn size(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    /// Embedding table rows needed: tokens plus the padding row.
    pub fn table_rows(&self) -> usize {
        self.size() + 1
    }

    pub fn min_doc_frequency(&self) -> usize {
        self.min_doc_frequency
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.index_to_token.get(i))
            .map(String::as_str)
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&str, usize)> {
        self.index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i + 1))
    }

    fn from_ordered(tokens: Vec<String>, min_doc_frequency: usize) -> Self {
        let token_to_index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        Vocabulary {
            token_to_index,
            index_to_token: tokens,
            min_doc_frequency,
        }
    }

    /// `token<TAB>index` per line, sorted by index, preceded by a `#` header.
    pub fn to_text(&self) -> String {
        let mut out = format!("# genreflow-vocab v1 min_df={}\n", self.min_doc_frequency);
        for (t, i) in self.tokens() {
            out.push_str(&format!("{t}\t{i}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TextError> {
        let mut min_df = DEFAULT_MIN_DOC_FREQUENCY;
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if let Some(header) = line.strip_prefix('#') {
                if let Some(v) = header.split_whitespace().find_map(|kv| kv.strip_prefix("min_df=")) {
                    min_df = v.parse().map_err(|_| TextError::Parse {
                        line: lineno,
                        reason: format!("bad min_df `{v}`"),
                    })?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (tok, idx) = line.split_once('\t').ok_or_else(|| TextError::Parse {
                line: lineno,
                reason: "expected token<TAB>index".into(),
            })?;
            let idx: usize = idx.trim().parse().map_err(|_| TextError::Parse {
                line: lineno,
                reason: format!("bad index `{idx}`"),
            })?;
            if idx != tokens.len() + 1 {
                return Err(TextError::Parse {
                    line: lineno,
                    reason: format!("index {idx} breaks the contiguous 1..n sequence"),
                });
            }
            tokens.push(tok.to_string());
        }
        let unique: HashSet<&String> = tokens.iter().collect();
        if unique.len() != tokens.len() {
            return Err(TextError::Parse {
                line: 0,
                reason: "duplicate token".into(),
            });
        }
        Ok(Self::from_ordered(tokens, min_df))
    }

    /// Hex SHA-256 of [`Vocabulary::to_text`].
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Keep tokens with document frequency at least `min_doc_frequency`, indexed
/// by descending corpus frequency with lexicographic tie-breaks.
pub fn build_vocabulary<D: AsRef<[String]>>(
    corpora: &[D],
    min_doc_frequency: usize,
) -> Result<Vocabulary, TextError> {
    if corpora.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    let mut corpus_freq: HashMap<&str, usize> = HashMap::new();
    for doc in corpora {
        let mut seen = HashSet::new();
        for tok in doc.as_ref() {
            *corpus_freq.entry(tok).or_default() += 1;
            if seen.insert(tok.as_str()) {
                *doc_freq.entry(tok).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = corpus_freq
        .into_iter()
        .filter(|(t, _)| doc_freq[t] >= min_doc_frequency)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_ordered(
        kept.into_iter().map(|(t, _)| t.to_string()).collect(),
        min_doc_frequency,
    ))
}

/// Fixed-length index sequence, right-padded with [`PAD_INDEX`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub indices: Vec<usize>,
    pub true_length: usize,
}

impl EncodedSequence {
    pub fn max_len(&self) -> usize {
        self.indices.len()
    }
}

/// Drop out-of-vocabulary tokens, keep the first `max_len`, pad with zeros.
pub fn encode_sequence(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> EncodedSequence {
    let mut indices: Vec<usize> = tokens
        .iter()
        .filter_map(|t| vocab.index_of(t))
        .take(max_len)
        .collect();
    let true_length = indices.len();
    indices.resize(max_len, PAD_INDEX);
    EncodedSequence {
        indices,
        true_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    // Step-by-step reference filter, written without the regex.
    fn reference_normalize(raw: &str) -> String {
        let mut words = Vec::new();
        for piece in raw.split_whitespace() {
            let lower = piece.to_lowercase();
            if lower.contains("://") || lower.starts_with("www.") {
                continue;
            }
            let mut cleaned = String::new();
            for c in lower.chars() {
                if c.is_alphabetic() {
                    cleaned.push(c);
                } else {
                    cleaned.push(' ');
                }
            }
            for w in cleaned.split(' ') {
                if !w.is_empty() && !STOPWORDS_EN.split_whitespace().any(|s| s == w) {
                    words.push(w.to_string());
                }
            }
        }
        words.join(" ")
    }

    #[test]
    fn stopword_list_is_shipped() {
        assert_eq!(stopwords().len(), 153);
        for w in ["now", "there", "a", "the"] {
            assert!(is_stopword(w), "{w}");
        }
        assert!(!is_stopword("run"));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(reference_normalize("Visit http://a.io NOW!!"), "visit");
        assert_eq!(normalize_text("Visit http://a.io NOW!!"), "visit");
        assert_eq!(normalize_text(""), "");
        assert_eq!(reference_normalize("Run 123 run"), "run run");
        assert_eq!(normalize_text("Run 123 run"), "run run");
        assert_eq!(normalize_text("see www.imdb.com/title now"), "see");
        assert_eq!(normalize_text("Hello, there."), "hello");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("a man runs"), vec!["a", "man", "runs"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize(" man  runs "), vec!["man", "runs"]);
    }

    #[test]
    fn vocabulary_min_df() {
        let v = build_vocabulary(&docs(&[&["a", "b"], &["b", "c"]]), 2).unwrap();
        assert_eq!(v.size(), 1);
        assert_eq!(v.index_of("b"), Some(1));
        let v = build_vocabulary(&docs(&[&["x"]]), 1).unwrap();
        assert_eq!(v.index_of("x"), Some(1));
        let v = build_vocabulary(&docs(&[&["a"], &["b"]]), 3).unwrap();
        assert!(v.is_empty());
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(matches!(build_vocabulary(&empty, 1), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn vocabulary_orders_by_frequency_then_lexically() {
        let v = build_vocabulary(&docs(&[&["b", "a", "c", "c"], &["b", "a"]]), 1).unwrap();
        let order: Vec<_> = v.tokens().map(|(t, _)| t.to_string()).collect();
        assert_eq!(order, vec!["a", "b", "c"]);
        assert_eq!(v.token(0), None);
        assert_eq!(v.token(1), Some("a"));
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let v = build_vocabulary(&docs(&[&["b", "a"], &["b", "z"]]), 1).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.content_hash(), v.content_hash());
        assert!(Vocabulary::from_text("a\t2\n").is_err());
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::from_ordered(vec!["a".into(), "b".into()], 1);
        let e = encode_sequence(&["b".into(), "a".into()], &v, 4);
        assert_eq!(e.indices, vec![2, 1, 0, 0]);
        assert_eq!(e.true_length, 2);
        let v1 = Vocabulary::from_ordered(vec!["a".into()], 1);
        let e = encode_sequence(&["z".into()], &v1, 2);
        assert_eq!(e.indices, vec![0, 0]);
        assert_eq!(e.true_length, 0);
        let long: Vec<String> = (0..500).map(|i| if i % 2 == 0 { "a".into() } else { "b".into() }).collect();
        let e = encode_sequence(&long, &v, 330);
        assert_eq!(e.indices.len(), 330);
        assert_eq!(e.true_length, 330);
        assert_eq!(&e.indices[..2], &[1, 2]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,80}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn normalize_matches_reference_on_ascii(s in "[ -~]{0,80}") {
            // The reference drops whole whitespace-delimited link tokens.
            prop_assume!(!s.contains("://") && !s.to_lowercase().contains("www."));
            prop_assert_eq!(normalize_text(&s), reference_normalize(&s));
        }

        #[test]
        fn encoded_length_is_fixed(toks in proptest::collection::vec("[a-e]", 0..40), max_len in 1usize..20) {
            let toks: Vec<String> = toks;
            let v = build_vocabulary(std::slice::from_ref(&toks), 1).unwrap();
            let e = encode_sequence(&toks, &v, max_len);
            prop_assert_eq!(e.indices.len(), max_len);
            prop_assert!(e.indices.iter().all(|&i| i < v.size() + 1));
            prop_assert!(e.indices[e.true_length..].iter().all(|&i| i == PAD_INDEX));
        }

        #[test]
        fn vocabulary_ignores_document_order(
            ds in proptest::collection::vec(proptest::collection::vec("[a-f]", 0..6), 1..8),
            min_df in 1usize..3,
        ) {
            let mut rev = ds.clone();
            rev.reverse();
            prop_assert_eq!(build_vocabulary(&ds, min_df).unwrap(), build_vocabulary(&rev, min_df).unwrap());
        }
    }
}
