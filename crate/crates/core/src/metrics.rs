//! Per-genre precision/recall/F1, precision-recall curves and AU(PRC).
//!
//! AU(PRC) uses step interpolation (average precision):
//! `Σ (R_i − R_{i−1}) · P_i` over distinct thresholds with `R_0 = 0`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use thiserror::Error;

use crate::manifest::{LabelVector, GENRES, NUM_GENRES};
use crate::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("precision-recall curve needs at least one positive")]
    NoPositives,
    #[error("{scores} scores but {truths} truths")]
    LengthMismatch { scores: usize, truths: usize },
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrediction<T> {
    pub trailer_id: String,
    pub scores: [T; NUM_GENRES],
    pub truth: LabelVector,
}

/// Counts and derived rates for one genre at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf<T> {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::of_usize(num) / T::of_usize(den)
    }
}

impl<T: Scalar> Prf<T> {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision: T = ratio(tp, tp + fp);
        let recall: T = ratio(tp, tp + fn_);
        let sum = precision + recall;
        let f1 = if sum > T::zero() {
            T::of(2.0) * precision * recall / sum
        } else {
            T::zero()
        };
        Prf {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// A score counts as positive when `score >= threshold`.
pub fn prf_at_threshold<T: Scalar>(
    preds: &[ScoredPrediction<T>],
    threshold: T,
) -> Result<[Prf<T>; NUM_GENRES], MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(std::array::from_fn(|g| {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for p in preds {
            match (p.scores[g] >= threshold, p.truth.0[g]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        Prf::from_counts(tp, fp, fn_)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint<T> {
    pub recall: T,
    pub precision: T,
    pub threshold: T,
}

/// One point per distinct score, thresholds descending.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve<T> {
    pub points: Vec<PrPoint<T>>,
    pub positives: usize,
}

pub fn pr_curve<T: Scalar>(scores: &[T], truths: &[bool]) -> Result<PrCurve<T>, MetricsError> {
    if scores.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            truths: truths.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            tp += usize::from(truths[order[i]]);
            seen += 1;
            i += 1;
        }
        points.push(PrPoint {
            recall: ratio(tp, positives),
            precision: ratio(tp, seen),
            threshold,
        });
    }
    Ok(PrCurve { points, positives })
}

pub fn au_prc<T: Scalar>(curve: &PrCurve<T>) -> T {
    let mut prev = T::zero();
    let mut area = T::zero();
    for p in &curve.points {
        area += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    area
}

/// Flattens every (sample, genre) pair into one list.
pub fn micro_pr_curve<T: Scalar>(preds: &[ScoredPrediction<T>]) -> Result<PrCurve<T>, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let scores: Vec<T> = preds.iter().flat_map(|p| p.scores).collect();
    let truths: Vec<bool> = preds.iter().flat_map(|p| p.truth.0).collect();
    pr_curve(&scores, &truths)
}

pub fn micro_au_prc<T: Scalar>(preds: &[ScoredPrediction<T>]) -> Result<T, MetricsError> {
    micro_pr_curve(preds).map(|c| au_prc(&c))
}

/// `Err(NoPositives)` for a genre without any positive sample.
pub fn genre_pr_curves<T: Scalar>(
    preds: &[ScoredPrediction<T>],
) -> Result<[Result<PrCurve<T>, MetricsError>; NUM_GENRES], MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(std::array::from_fn(|g| {
        let scores: Vec<T> = preds.iter().map(|p| p.scores[g]).collect();
        let truths: Vec<bool> = preds.iter().map(|p| p.truth.0[g]).collect();
        pr_curve(&scores, &truths)
    }))
}

/// `None` marks a genre with no positives.
pub fn per_genre_au_prc<T: Scalar>(
    preds: &[ScoredPrediction<T>],
) -> Result<[Option<T>; NUM_GENRES], MetricsError> {
    let curves = genre_pr_curves(preds)?;
    let mut out = [None; NUM_GENRES];
    for (slot, curve) in out.iter_mut().zip(curves) {
        match curve {
            Ok(c) => *slot = Some(au_prc(&c)),
            Err(MetricsError::NoPositives) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Subset accuracy: fraction of rows whose thresholded label vector matches exactly.
pub fn subset_accuracy<T: Scalar>(preds: &[ScoredPrediction<T>], threshold: T) -> T {
    let hits = preds
        .iter()
        .filter(|p| (0..NUM_GENRES).all(|g| (p.scores[g] >= threshold) == p.truth.0[g]))
        .count();
    ratio(hits, preds.len())
}

fn fmt_value<T: Scalar>(v: T) -> String {
    format!("{:.4}", v.to_f64_lossy())
}

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| "n/a".to_string(), fmt_value)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn csv_line(cells: &[String]) -> String {
    let quoted: Vec<String> = cells
        .iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        })
        .collect();
    quoted.join(",") + "\n"
}

fn prf_rows<T: Scalar>(prf: &[Prf<T>; NUM_GENRES], column: &str) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["genre".into(), "metric".into(), column.to_string()]];
    for (genre, m) in GENRES.iter().zip(prf) {
        for (name, v) in [("P", m.precision), ("R", m.recall), ("F1", m.f1)] {
            rows.push(vec![genre.name().into(), name.into(), fmt_value(v)]);
        }
    }
    rows
}

/// Genre / metric / value rows, P, R and F1 per genre.
pub fn prf_report_csv<T: Scalar>(prf: &[Prf<T>; NUM_GENRES], column: &str) -> String {
    prf_rows(prf, column).iter().map(|r| csv_line(r)).collect()
}

pub fn prf_report_text<T: Scalar>(prf: &[Prf<T>; NUM_GENRES], column: &str) -> String {
    aligned(&prf_rows(prf, column))
}

/// One row per scope: micro first, then each genre; missing values print as `n/a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuPrcReport<T> {
    pub micro: Option<T>,
    pub per_genre: [Option<T>; NUM_GENRES],
}

impl<T: Scalar> AuPrcReport<T> {
    pub fn compute(preds: &[ScoredPrediction<T>]) -> Result<Self, MetricsError> {
        let per_genre = per_genre_au_prc(preds)?;
        let micro = match micro_au_prc(preds) {
            Ok(v) => Some(v),
            Err(MetricsError::NoPositives) => None,
            Err(e) => return Err(e),
        };
        Ok(AuPrcReport { micro, per_genre })
    }

    fn rows(&self, column: &str) -> Vec<Vec<String>> {
        let mut rows = vec![vec!["scope".into(), column.to_string()]];
        rows.push(vec!["micro".into(), fmt_opt(self.micro)]);
        for (genre, v) in GENRES.iter().zip(self.per_genre) {
            rows.push(vec![genre.name().into(), fmt_opt(v)]);
        }
        rows
    }

    pub fn to_csv(&self, column: &str) -> String {
        self.rows(column).iter().map(|r| csv_line(r)).collect()
    }

    pub fn to_text(&self, column: &str) -> String {
        aligned(&self.rows(column))
    }
}

/// `threshold,recall,precision` with full round-trip precision.
pub fn pr_curve_csv<T: Scalar>(curve: &PrCurve<T>) -> String {
    let mut out = String::from("threshold,recall,precision\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.recall, p.precision);
    }
    out
}
