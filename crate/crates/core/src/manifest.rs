//! Trailer manifest: CSV loading, genre encoding, and seeded train/eval splits.
//!
//! The manifest is a UTF-8 CSV with the columns
//! `id,title,video_path,audio_path,description,plot,keywords,genres`.
//! `keywords` and `genres` are pipe-separated lists.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_GENRES: usize = 5;

pub const COLUMNS: [&str; 8] = [
    "id",
    "title",
    "video_path",
    "audio_path",
    "description",
    "plot",
    "keywords",
    "genres",
];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is missing column `{0}`")]
    MissingColumn(String),
    #[error("unknown genre `{name}`{}", .id.as_ref().map(|i| format!(" in record `{i}`")).unwrap_or_default())]
    UnknownGenre { name: String, id: Option<String> },
    #[error("duplicate trailer id `{0}`")]
    DuplicateId(String),
    #[error("record `{0}` has no genres")]
    NoGenres(String),
    #[error("record on line {0} has an empty id")]
    EmptyId(u64),
    #[error("label bits `{0}` must be exactly {NUM_GENRES} characters of 0/1")]
    BadLabelBits(String),
    #[error("need at least 2 records to split, got {0}")]
    EmptyInput(usize),
    #[error("eval fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// The five genres, in canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Genre {
    Action,
    Comedy,
    Horror,
    Romance,
    ScienceFiction,
}

/// Canonical label order; index `i` of every [`LabelVector`] refers to `GENRES[i]`.
pub const GENRES: [Genre; NUM_GENRES] = [
    Genre::Action,
    Genre::Comedy,
    Genre::Horror,
    Genre::Romance,
    Genre::ScienceFiction,
];

impl Genre {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Genre::Action => "Action",
            Genre::Comedy => "Comedy",
            Genre::Horror => "Horror",
            Genre::Romance => "Romance",
            Genre::ScienceFiction => "Science Fiction",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Genre {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        GENRES
            .iter()
            .copied()
            .find(|g| g.name().to_lowercase() == key)
            .ok_or_else(|| ManifestError::UnknownGenre {
                name: s.trim().to_string(),
                id: None,
            })
    }
}

/// Five binary genre indicators in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelVector(pub [bool; NUM_GENRES]);

impl LabelVector {
    pub fn from_genres<I: IntoIterator<Item = Genre>>(genres: I) -> Self {
        let mut bits = [false; NUM_GENRES];
        for g in genres {
            bits[g.index()] = true;
        }
        LabelVector(bits)
    }

    pub fn genres(&self) -> Vec<Genre> {
        GENRES.iter().copied().filter(|g| self.0[g.index()]).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn get(&self, genre: Genre) -> bool {
        self.0[genre.index()]
    }

    /// `"10100"` for Action + Horror.
    pub fn to_bits(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bits(bits: &str) -> Result<Self, ManifestError> {
        let chars: Vec<char> = bits.chars().collect();
        if chars.len() != NUM_GENRES {
            return Err(ManifestError::BadLabelBits(bits.to_string()));
        }
        let mut out = [false; NUM_GENRES];
        for (slot, c) in out.iter_mut().zip(chars) {
            *slot = match c {
                '0' => false,
                '1' => true,
                _ => return Err(ManifestError::BadLabelBits(bits.to_string())),
            };
        }
        Ok(LabelVector(out))
    }

    pub fn as_f64(&self) -> [f64; NUM_GENRES] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

/// Map genre names to an indicator vector. Duplicates are harmless.
pub fn encode_genres<S: AsRef<str>>(names: &[S]) -> Result<LabelVector, ManifestError> {
    let genres = names
        .iter()
        .map(|n| n.as_ref().parse::<Genre>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabelVector::from_genres(genres))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailerRecord {
    pub id: String,
    pub title: String,
    pub video_path: Option<PathBuf>,
    pub audio_path: Option<PathBuf>,
    pub description: String,
    pub plot: String,
    pub keywords: Vec<String>,
    pub genres: Vec<Genre>,
}

impl TrailerRecord {
    pub fn labels(&self) -> LabelVector {
        LabelVector::from_genres(self.genres.iter().copied())
    }

    /// A record carrying only an id, used for metadata-free edge cases.
    pub fn empty(id: impl Into<String>) -> Self {
        TrailerRecord {
            id: id.into(),
            title: String::new(),
            video_path: None,
            audio_path: None,
            description: String::new(),
            plot: String::new(),
            keywords: Vec::new(),
            genres: Vec::new(),
        }
    }
}

fn split_list(field: &str) -> Vec<String> {
    field
        .split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn optional_path(field: &str) -> Option<PathBuf> {
    let t = field.trim();
    (!t.is_empty()).then(|| PathBuf::from(t))
}

/// Parse a manifest from any reader. When `require_genres` is false, rows
/// with an empty genre column are accepted (prediction-time manifests).
pub fn read_manifest<R: io::Read>(
    reader: R,
    require_genres: bool,
) -> Result<Vec<TrailerRecord>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col = BTreeMap::new();
    for name in COLUMNS {
        let idx = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| ManifestError::MissingColumn(name.to_string()))?;
        col.insert(name, idx);
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| row.get(col[name]).unwrap_or("");
        let id = field("id").trim().to_string();
        if id.is_empty() {
            return Err(ManifestError::EmptyId(line));
        }
        let genres = split_list(field("genres"))
            .iter()
            .map(|g| {
                g.parse::<Genre>().map_err(|_| ManifestError::UnknownGenre {
                    name: g.clone(),
                    id: Some(id.clone()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut genres = genres;
        genres.sort();
        genres.dedup();
        if require_genres && genres.is_empty() {
            return Err(ManifestError::NoGenres(id));
        }
        if !seen.insert(id.clone()) {
            return Err(ManifestError::DuplicateId(id));
        }
        records.push(TrailerRecord {
            title: field("title").trim().to_string(),
            video_path: optional_path(field("video_path")),
            audio_path: optional_path(field("audio_path")),
            description: field("description").to_string(),
            plot: field("plot").to_string(),
            keywords: split_list(field("keywords")),
            genres,
            id,
        });
    }
    Ok(records)
}

/// Load and validate a labelled manifest.
pub fn load_manifest(path: &Path) -> Result<Vec<TrailerRecord>, ManifestError> {
    read_manifest(std::fs::File::open(path)?, true)
}

/// Load a manifest whose genre column may be empty.
pub fn load_unlabeled_manifest(path: &Path) -> Result<Vec<TrailerRecord>, ManifestError> {
    read_manifest(std::fs::File::open(path)?, false)
}

/// Write records in the canonical column order with canonical genre names.
pub fn write_manifest<W: io::Write>(
    writer: W,
    records: &[TrailerRecord],
) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    let path_str = |p: &Option<PathBuf>| {
        p.as_ref()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    for r in records {
        let genres: Vec<&str> = r.genres.iter().map(|g| g.name()).collect();
        w.write_record([
            r.id.as_str(),
            r.title.as_str(),
            &path_str(&r.video_path),
            &path_str(&r.audio_path),
            r.description.as_str(),
            r.plot.as_str(),
            &r.keywords.join("|"),
            &genres.join("|"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub eval: Vec<T>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SplitOptions {
    /// Allocate eval slots per label-vector group instead of globally.
    pub stratify: bool,
}

/// Anything that can be grouped for stratified splitting.
pub trait Labelled {
    fn label_key(&self) -> LabelVector;
}

impl Labelled for TrailerRecord {
    fn label_key(&self) -> LabelVector {
        self.labels()
    }
}

/// Number of eval items for `n` items at `fraction`, rounding half away from zero.
pub fn eval_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Seeded random split. Both halves keep the input order.
pub fn split_dataset<T: Clone>(
    items: &[T],
    eval_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit<T>, ManifestError> {
    check_split_args(items.len(), eval_fraction)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let k = eval_count(items.len(), eval_fraction);
    let mut is_eval = vec![false; items.len()];
    for &i in &order[..k] {
        is_eval[i] = true;
    }
    Ok(partition(items, &is_eval, seed))
}

/// Split with optional stratification over full label vectors.
pub fn split_dataset_with<T: Clone + Labelled>(
    items: &[T],
    eval_fraction: f64,
    seed: u64,
    options: SplitOptions,
) -> Result<DatasetSplit<T>, ManifestError> {
    if !options.stratify {
        return split_dataset(items, eval_fraction, seed);
    }
    check_split_args(items.len(), eval_fraction)?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        groups.entry(it.label_key().to_bits()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = eval_count(items.len(), eval_fraction);
    // Largest-remainder allocation keeps the global eval size exact.
    let mut quotas: Vec<(String, usize, f64)> = groups
        .iter()
        .map(|(k, v)| {
            let exact = eval_fraction * v.len() as f64;
            (k.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        quotas[b]
            .2
            .partial_cmp(&quotas[a].2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(quotas[a].0.cmp(&quotas[b].0))
    });
    for &q in by_remainder.iter().cycle().take(quotas.len() * 2) {
        if assigned >= total {
            break;
        }
        if quotas[q].1 < groups[&quotas[q].0].len() {
            quotas[q].1 += 1;
            assigned += 1;
        }
    }
    let mut is_eval = vec![false; items.len()];
    for (key, quota, _) in &quotas {
        let mut members = groups[key].clone();
        members.shuffle(&mut rng);
        for &i in &members[..*quota] {
            is_eval[i] = true;
        }
    }
    Ok(partition(items, &is_eval, seed))
}

fn check_split_args(n: usize, fraction: f64) -> Result<(), ManifestError> {
    if n < 2 {
        return Err(ManifestError::EmptyInput(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ManifestError::InvalidFraction(fraction));
    }
    Ok(())
}

fn partition<T: Clone>(items: &[T], is_eval: &[bool], seed: u64) -> DatasetSplit<T> {
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (it, &e) in items.iter().zip(is_eval) {
        if e {
            eval.push(it.clone());
        } else {
            train.push(it.clone());
        }
    }
    DatasetSplit { train, eval, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "id,title,video_path,audio_path,description,plot,keywords,genres\n";

    fn record(id: &str, genres: &[Genre]) -> TrailerRecord {
        let mut r = TrailerRecord::empty(id);
        r.genres = genres.to_vec();
        r
    }

    #[test]
    fn encodes_pipe_separated_genres() {
        let csv = format!("{HEADER}t1,T,,,d,p,k1|k2,Action|Horror\n");
        let recs = read_manifest(csv.as_bytes(), true).unwrap();
        assert_eq!(recs[0].labels().0, [true, false, true, false, false]);
        assert_eq!(recs[0].keywords, vec!["k1", "k2"]);
    }

    #[test]
    fn genre_names_are_case_insensitive_and_trimmed() {
        let csv = format!("{HEADER}t1,T,,,,,, science  FICTION | comedy \n");
        let recs = read_manifest(csv.as_bytes(), true).unwrap();
        assert_eq!(recs[0].genres, vec![Genre::Comedy, Genre::ScienceFiction]);
    }

    #[test]
    fn rejects_unknown_genre() {
        let csv = format!("{HEADER}t1,T,,,,,,Western\n");
        match read_manifest(csv.as_bytes(), true) {
            Err(ManifestError::UnknownGenre { name, id }) => {
                assert_eq!(name, "Western");
                assert_eq!(id.as_deref(), Some("t1"));
            }
            other => panic!("expected UnknownGenre, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_column_and_duplicates() {
        let csv = "id,title,video_path,audio_path,description,plot,genres\nt1,T,,,,,Action\n";
        assert!(matches!(
            read_manifest(csv.as_bytes(), true),
            Err(ManifestError::MissingColumn(c)) if c == "keywords"
        ));
        let csv = format!("{HEADER}t1,T,,,,,,Action\nt1,U,,,,,,Comedy\n");
        assert!(matches!(
            read_manifest(csv.as_bytes(), true),
            Err(ManifestError::DuplicateId(id)) if id == "t1"
        ));
    }

    #[test]
    fn empty_genres_only_allowed_when_unlabelled() {
        let csv = format!("{HEADER}t1,T,,,,,,\n");
        assert!(matches!(
            read_manifest(csv.as_bytes(), true),
            Err(ManifestError::NoGenres(_))
        ));
        assert_eq!(read_manifest(csv.as_bytes(), false).unwrap().len(), 1);
    }

    #[test]
    fn thousands_of_rows() {
        let mut csv = HEADER.to_string();
        for i in 0..2000 {
            csv.push_str(&format!("t{i},Title {i},v{i}.mp4,,desc,,kw,Action\n"));
        }
        assert_eq!(read_manifest(csv.as_bytes(), true).unwrap().len(), 2000);
    }

    #[test]
    fn encode_genres_examples() {
        assert_eq!(encode_genres(&["Science Fiction"]).unwrap().0, [false, false, false, false, true]);
        assert_eq!(encode_genres(&["Comedy", "Romance"]).unwrap().0, [false, true, false, true, false]);
        assert_eq!(encode_genres(&["Action", "Action"]).unwrap().0, [true, false, false, false, false]);
        assert!(encode_genres(&["Western"]).is_err());
    }

    #[test]
    fn label_bits_round_trip() {
        let lv = LabelVector([true, false, true, false, false]);
        assert_eq!(lv.to_bits(), "10100");
        assert_eq!(LabelVector::from_bits("10100").unwrap(), lv);
        assert!(LabelVector::from_bits("1010").is_err());
        assert!(LabelVector::from_bits("1010x").is_err());
    }

    #[test]
    fn split_sizes() {
        let recs: Vec<_> = (0..2000).map(|i| record(&format!("t{i}"), &[Genre::Action])).collect();
        let s = split_dataset(&recs, 0.15, 0).unwrap();
        assert_eq!((s.train.len(), s.eval.len()), (1700, 300));
        let s = split_dataset(&recs[..20], 0.15, 3).unwrap();
        assert_eq!((s.train.len(), s.eval.len()), (17, 3));
    }

    #[test]
    fn split_is_deterministic() {
        let recs: Vec<_> = (0..100).map(|i| record(&format!("t{i}"), &[Genre::Comedy])).collect();
        let a = split_dataset(&recs, 0.15, 7).unwrap();
        let b = split_dataset(&recs, 0.15, 7).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&recs, 0.15, 8).unwrap();
        assert_ne!(a.eval, c.eval);
    }

    #[test]
    fn split_errors() {
        let one = vec![record("a", &[Genre::Action])];
        assert!(matches!(split_dataset(&one, 0.15, 0), Err(ManifestError::EmptyInput(1))));
        let two = vec![record("a", &[Genre::Action]), record("b", &[Genre::Horror])];
        assert!(matches!(split_dataset(&two, 1.0, 0), Err(ManifestError::InvalidFraction(_))));
    }

    #[test]
    fn stratified_split_keeps_global_size() {
        let recs: Vec<_> = (0..40)
            .map(|i| record(&format!("t{i}"), &[GENRES[i % 3]]))
            .collect();
        let s = split_dataset_with(&recs, 0.15, 1, SplitOptions { stratify: true }).unwrap();
        assert_eq!(s.eval.len(), 6);
        for g in &GENRES[..3] {
            assert!(s.eval.iter().any(|r| r.genres[0] == *g));
        }
    }

    #[test]
    fn write_then_read_normalizes() {
        let csv = format!("{HEADER}t1,T,a.mp4,,\"A, b\",,x|y,horror|ACTION\n");
        let recs = read_manifest(csv.as_bytes(), true).unwrap();
        let mut out = Vec::new();
        write_manifest(&mut out, &recs).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.contains("Action|Horror"));
        assert_eq!(read_manifest(out.as_slice(), true).unwrap(), recs);
    }

    fn genre_subset() -> impl Strategy<Value = Vec<Genre>> {
        proptest::sample::subsequence(GENRES.to_vec(), 0..=5)
    }

    proptest! {
        #[test]
        fn decode_then_encode_is_identity(gs in genre_subset()) {
            let lv = LabelVector::from_genres(gs.iter().copied());
            let names: Vec<&str> = lv.genres().iter().map(|g| g.name()).collect();
            prop_assert_eq!(encode_genres(&names).unwrap(), lv);
            prop_assert_eq!(lv.genres(), gs);
        }

        #[test]
        fn split_partitions_exactly(n in 2usize..200, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let recs: Vec<_> = (0..n).map(|i| record(&format!("t{i}"), &[Genre::Action])).collect();
            let s = split_dataset(&recs, frac, seed).unwrap();
            prop_assert_eq!(s.eval.len(), eval_count(n, frac));
            let mut ids: Vec<_> = s.train.iter().chain(&s.eval).map(|r| r.id.clone()).collect();
            ids.sort();
            let mut want: Vec<_> = recs.iter().map(|r| r.id.clone()).collect();
            want.sort();
            prop_assert_eq!(ids, want);
        }

        #[test]
        fn fuzzed_genre_columns_never_yield_invalid_records(
            cells in proptest::collection::vec("[A-Za-z |]{0,24}", 1..8)
        ) {
            let mut csv = HEADER.to_string();
            for (i, c) in cells.iter().enumerate() {
                csv.push_str(&format!("t{i},T,,,,,,{c}\n"));
            }
            if let Ok(recs) = read_manifest(csv.as_bytes(), true) {
                for r in recs {
                    prop_assert!(!r.genres.is_empty());
                    prop_assert!(!r.labels().is_empty());
                }
            }
        }
    }
}
