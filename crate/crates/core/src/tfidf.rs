//! Word uni/bi/trigram TF-IDF features.
//!
//! Weighting is raw count times smoothed idf, `ln((1 + N) / (1 + df)) + 1`,
//! followed by L2 normalization of each document vector.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::Tensor2;
use crate::Scalar;

pub const MAX_NGRAM: usize = 3;
pub const DEFAULT_MIN_DOC_FREQUENCY: usize = 2;
pub const DEFAULT_MAX_FEATURES: usize = 40_000;

#[derive(Debug, Error)]
pub enum TfidfError {
    #[error("cannot fit on an empty corpus collection")]
    EmptyCorpus,
    #[error("tf-idf model line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// All contiguous 1-, 2- and 3-grams with their counts; n-grams are tokens
/// joined by a single space.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<String, usize> {
    let mut grams = BTreeMap::new();
    for n in 1..=MAX_NGRAM {
        for window in tokens.windows(n) {
            let key = window.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
            *grams.entry(key).or_insert(0) += 1;
        }
    }
    grams
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    ngram_to_index: HashMap<String, usize>,
    ngrams: Vec<String>,
    idf: Vec<f64>,
    documents: usize,
    min_doc_frequency: usize,
    max_features: Option<usize>,
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense<T: Scalar>(&self) -> Tensor2<T> {
        let mut t = Tensor2::zeros(1, self.dim);
        for &(i, v) in &self.entries {
            t.set(0, i, T::of(v));
        }
        t
    }
}

impl TfidfModel {
    /// Keep n-grams with document frequency at least `min_doc_frequency`,
    /// rank by descending df then lexicographically, truncate to
    /// `max_features`.
    pub fn fit<D: AsRef<[String]>>(
        corpora: &[D],
        min_doc_frequency: usize,
        max_features: Option<usize>,
    ) -> Result<Self, TfidfError> {
        if corpora.is_empty() {
            return Err(TfidfError::EmptyCorpus);
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpora {
            for gram in extract_ngrams(doc.as_ref()).into_keys() {
                *df.entry(gram).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, d)| *d >= min_doc_frequency).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(m) = max_features {
            kept.truncate(m);
        }
        let n = corpora.len() as f64;
        let idf = kept.iter().map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0).collect();
        let ngrams: Vec<String> = kept.into_iter().map(|(g, _)| g).collect();
        Ok(Self::assemble(ngrams, idf, corpora.len(), min_doc_frequency, max_features))
    }

    fn assemble(
        ngrams: Vec<String>,
        idf: Vec<f64>,
        documents: usize,
        min_doc_frequency: usize,
        max_features: Option<usize>,
    ) -> Self {
        TfidfModel {
            ngram_to_index: ngrams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect(),
            ngrams,
            idf,
            documents,
            min_doc_frequency,
            max_features,
        }
    }

    /// Feature count `M`.
    pub fn dim(&self) -> usize {
        self.ngrams.len()
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.ngram_to_index.get(ngram).copied()
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    pub fn ngram(&self, index: usize) -> &str {
        &self.ngrams[index]
    }

    /// Count times idf per known n-gram, L2-normalized. Unknown n-grams are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut entries: Vec<(usize, f64)> = extract_ngrams(tokens)
            .into_iter()
            .filter_map(|(g, c)| self.index_of(&g).map(|i| (i, c as f64 * self.idf[i])))
            .collect();
        entries.sort_by_key(|e| e.0);
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.iter_mut().for_each(|e| e.1 /= norm);
        }
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }

    /// Header line, then `ngram<TAB>index<TAB>idf` per feature.
    pub fn to_text(&self) -> String {
        let max = self.max_features.map_or("none".to_string(), |m| m.to_string());
        let mut out = format!(
            "# genreflow-tfidf v1 N={} min_df={} max_features={max}\n",
            self.documents, self.min_doc_frequency
        );
        for (i, (g, idf)) in self.ngrams.iter().zip(&self.idf).enumerate() {
            out.push_str(&format!("{g}\t{i}\t{idf}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TfidfError> {
        let (mut documents, mut min_df, mut max_features) = (None, DEFAULT_MIN_DOC_FREQUENCY, None);
        let (mut ngrams, mut idf) = (Vec::new(), Vec::new());
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let err = |reason: String| TfidfError::Parse { line: lineno, reason };
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("N=") {
                        documents = Some(v.parse().map_err(|_| err(format!("bad N `{v}`")))?);
                    } else if let Some(v) = kv.strip_prefix("min_df=") {
                        min_df = v.parse().map_err(|_| err(format!("bad min_df `{v}`")))?;
                    } else if let Some(v) = kv.strip_prefix("max_features=") {
                        max_features = match v {
                            "none" => None,
                            _ => Some(v.parse().map_err(|_| err(format!("bad max_features `{v}`")))?),
                        };
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [g, i, v] = cols.as_slice() else {
                return Err(err("expected ngram<TAB>index<TAB>idf".into()));
            };
            let i: usize = i.parse().map_err(|_| err(format!("bad index `{i}`")))?;
            if i != ngrams.len() {
                return Err(err(format!("index {i} breaks the contiguous 0..M sequence")));
            }
            let v: f64 = v.parse().map_err(|_| err(format!("bad idf `{v}`")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(err(format!("idf must be positive, got {v}")));
            }
            ngrams.push(g.to_string());
            idf.push(v);
        }
        let documents = documents.ok_or(TfidfError::Parse {
            line: 1,
            reason: "missing header with N".into(),
        })?;
        if ngrams.iter().collect::<HashSet<_>>().len() != ngrams.len() {
            return Err(TfidfError::Parse { line: 0, reason: "duplicate n-gram".into() });
        }
        Ok(Self::assemble(ngrams, idf, documents, min_df, max_features))
    }

    /// Hex SHA-256 of [`TfidfModel::to_text`].
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
