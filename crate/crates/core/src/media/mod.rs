//! Frame sampling and audio chunk planners, situation selection and
//! rendering, and the file-based contract with external recognizers.
//!
//! Media decoding never happens in this crate. A situation recognizer owns
//! the video, a speech recognizer owns the audio; both are reached through
//! [`plugin`].

pub mod plugin;
pub mod stub;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plugin::{
    ExternalPlugin, PluginError, PluginKind, SituationRecognizer, SpeechRecognizer, Stage,
};

pub const DEFAULT_FRAME_STRIDE: usize = 10;
pub const FRAME_WIDTH: u32 = 299;
pub const FRAME_HEIGHT: u32 = 299;
pub const FRAME_CHANNELS: u32 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("frame stride must be at least 1, got {0}")]
    InvalidStride(usize),
    #[error("min_silence_ms must be at least 1")]
    InvalidSilence,
    #[error("no situation candidates to choose from")]
    EmptyCandidates,
}

/// Frames to hand to the situation recognizer, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    pub trailer_id: String,
    pub frame_indices: Vec<usize>,
    pub target_width: u32,
    pub target_height: u32,
    pub target_channels: u32,
}

/// Every `stride`-th frame starting at frame 1: `1, 1 + stride, ...`.
pub fn plan_frames(
    trailer_id: &str,
    total_frames: usize,
    stride: usize,
) -> Result<FramePlan, PlanError> {
    if stride < 1 {
        return Err(PlanError::InvalidStride(stride));
    }
    Ok(FramePlan {
        trailer_id: trailer_id.to_string(),
        frame_indices: (1..=total_frames).step_by(stride).collect(),
        target_width: FRAME_WIDTH,
        target_height: FRAME_HEIGHT,
        target_channels: FRAME_CHANNELS,
    })
}

/// Half-open millisecond interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioChunk {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl AudioChunk {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilenceParams {
    /// Level in dBFS below which a millisecond counts as silent.
    pub threshold_db: f64,
    pub min_silence_ms: u64,
    pub min_chunk_ms: u64,
}

impl Default for SilenceParams {
    fn default() -> Self {
        SilenceParams {
            threshold_db: -40.0,
            min_silence_ms: 300,
            min_chunk_ms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioChunkPlan {
    pub trailer_id: String,
    pub chunks: Vec<AudioChunk>,
}

fn is_silent(rms: f64, threshold_db: f64) -> bool {
    // non-positive or NaN levels carry no signal
    if !(rms > 0.0) {
        return true;
    }
    20.0 * rms.log10() < threshold_db
}

/// Maximal silent runs, as half-open intervals.
pub fn silent_runs(envelope: &[f64], threshold_db: f64) -> Vec<AudioChunk> {
    let mut runs = Vec::new();
    let mut start = None;
    for (ms, &level) in envelope.iter().enumerate() {
        match (is_silent(level, threshold_db), start) {
            (true, None) => start = Some(ms as u64),
            (false, Some(s)) => {
                runs.push(AudioChunk { start_ms: s, end_ms: ms as u64 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(AudioChunk { start_ms: s, end_ms: envelope.len() as u64 });
    }
    runs
}

/// Split a per-millisecond RMS envelope at silences of at least
/// `min_silence_ms`. Pieces without any audible millisecond, and pieces
/// shorter than `min_chunk_ms`, are dropped.
pub fn chunk_audio(envelope: &[f64], params: &SilenceParams) -> Result<Vec<AudioChunk>, PlanError> {
    if params.min_silence_ms < 1 {
        return Err(PlanError::InvalidSilence);
    }
    let total = envelope.len() as u64;
    let splits: Vec<AudioChunk> = silent_runs(envelope, params.threshold_db)
        .into_iter()
        .filter(|r| r.duration_ms() >= params.min_silence_ms)
        .collect();
    let mut chunks = Vec::new();
    let mut cursor = 0;
    for gap in splits.iter().chain(std::iter::once(&AudioChunk { start_ms: total, end_ms: total })) {
        if gap.start_ms > cursor {
            let piece = AudioChunk { start_ms: cursor, end_ms: gap.start_ms };
            let audible = envelope[piece.start_ms as usize..piece.end_ms as usize]
                .iter()
                .any(|&l| !is_silent(l, params.threshold_db));
            if audible && piece.duration_ms() >= params.min_chunk_ms {
                chunks.push(piece);
            }
        }
        cursor = gap.end_ms;
    }
    Ok(chunks)
}

pub fn plan_audio(
    trailer_id: &str,
    envelope: &[f64],
    params: &SilenceParams,
) -> Result<AudioChunkPlan, PlanError> {
    Ok(AudioChunkPlan {
        trailer_id: trailer_id.to_string(),
        chunks: chunk_audio(envelope, params)?,
    })
}

/// Semantic roles a situation may fill, in rendering order after the verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agent,
    Item,
    Part,
    Place,
    Stage,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Agent => "agent",
            Role::Item => "item",
            Role::Part => "part",
            Role::Place => "place",
            Role::Stage => "stage",
            Role::Tool => "tool",
        };
        f.write_str(s)
    }
}

/// A verb with role fillers describing one frame, scored on a log-probability scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Situation {
    pub verb: String,
    #[serde(default)]
    pub roles: BTreeMap<Role, String>,
    pub score: f64,
    /// Optional verb gloss; only used when definitions are enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
}

impl Situation {
    pub fn new(verb: &str, roles: &[(Role, &str)], score: f64) -> Self {
        Situation {
            verb: verb.to_string(),
            roles: roles.iter().map(|(r, n)| (*r, n.to_string())).collect(),
            score,
            definition: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.verb.trim().is_empty() {
            return Err("situation verb is empty".into());
        }
        if !self.score.is_finite() {
            return Err(format!("situation `{}` has a non-finite score", self.verb));
        }
        Ok(())
    }
}

/// Highest score wins; ties go to the lexicographically smallest verb, then
/// to the earliest candidate.
pub fn select_situation(candidates: &[Situation]) -> Result<&Situation, PlanError> {
    let mut iter = candidates.iter();
    let mut best = iter.next().ok_or(PlanError::EmptyCandidates)?;
    for c in iter {
        if c.score > best.score || (c.score == best.score && c.verb < best.verb) {
            best = c;
        }
    }
    Ok(best)
}

fn squash(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// `agent verb item part place stage tool`, lowercase, absent roles skipped.
pub fn render_situation(s: &Situation) -> String {
    let mut words = Vec::new();
    if let Some(agent) = s.roles.get(&Role::Agent) {
        words.push(squash(agent));
    }
    words.push(squash(&s.verb));
    for (role, noun) in &s.roles {
        if *role != Role::Agent {
            words.push(squash(noun));
        }
    }
    words.retain(|w| !w.is_empty());
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_plan_examples() {
        let p = plan_frames("t", 100, 10).unwrap();
        assert_eq!(p.frame_indices, vec![1, 11, 21, 31, 41, 51, 61, 71, 81, 91]);
        assert_eq!((p.target_width, p.target_height, p.target_channels), (299, 299, 3));
        assert_eq!(plan_frames("t", 5, 10).unwrap().frame_indices, vec![1]);
        assert_eq!(plan_frames("t", 1, 1).unwrap().frame_indices, vec![1]);
        assert_eq!(plan_frames("t", 5, 0), Err(PlanError::InvalidStride(0)));
    }

    fn envelope(runs: &[(f64, usize)]) -> Vec<f64> {
        runs.iter()
            .flat_map(|&(l, n)| std::iter::repeat_n(l, n))
            .collect()
    }

    #[test]
    fn chunk_examples() {
        let p = SilenceParams::default();
        assert!(chunk_audio(&envelope(&[(0.0, 2000)]), &p).unwrap().is_empty());
        // 0.5 is about -6 dBFS, 0.001 is -60 dBFS
        let env = envelope(&[(0.5, 1000), (0.001, 500), (0.5, 500)]);
        assert_eq!(
            chunk_audio(&env, &p).unwrap(),
            vec![
                AudioChunk { start_ms: 0, end_ms: 1000 },
                AudioChunk { start_ms: 1500, end_ms: 2000 }
            ]
        );
        assert_eq!(
            chunk_audio(&envelope(&[(0.5, 2000)]), &p).unwrap(),
            vec![AudioChunk { start_ms: 0, end_ms: 2000 }]
        );
    }

    #[test]
    fn short_silences_and_short_chunks() {
        let p = SilenceParams::default();
        // 100 ms dip is below min_silence_ms and does not split
        let env = envelope(&[(0.5, 800), (0.0, 100), (0.5, 800)]);
        assert_eq!(chunk_audio(&env, &p).unwrap(), vec![AudioChunk { start_ms: 0, end_ms: 1700 }]);
        // 150 ms blip between long silences is shorter than min_chunk_ms
        let env = envelope(&[(0.0, 400), (0.5, 150), (0.0, 400), (0.5, 300)]);
        assert_eq!(chunk_audio(&env, &p).unwrap(), vec![AudioChunk { start_ms: 950, end_ms: 1250 }]);
        // a silent envelope shorter than min_silence_ms still yields nothing
        assert!(chunk_audio(&envelope(&[(0.0, 50)]), &p).unwrap().is_empty());
        let bad = SilenceParams { min_silence_ms: 0, ..p };
        assert_eq!(chunk_audio(&[0.5], &bad), Err(PlanError::InvalidSilence));
    }

    #[test]
    fn select_examples() {
        let c = vec![Situation::new("jump", &[], -2.0), Situation::new("run", &[], -1.0)];
        assert_eq!(select_situation(&c).unwrap().verb, "run");
        let c = vec![Situation::new("b", &[], -1.0), Situation::new("a", &[], -1.0)];
        assert_eq!(select_situation(&c).unwrap().verb, "a");
        let c = vec![Situation::new("only", &[], -9.0)];
        assert_eq!(select_situation(&c).unwrap().verb, "only");
        assert_eq!(select_situation(&[]), Err(PlanError::EmptyCandidates));
    }

    #[test]
    fn select_prefers_earliest_on_full_tie() {
        let mut first = Situation::new("a", &[(Role::Place, "x")], 0.0);
        first.definition = Some("first".into());
        let c = vec![first, Situation::new("a", &[(Role::Place, "y")], 0.0)];
        assert_eq!(select_situation(&c).unwrap().roles[&Role::Place], "x");
    }

    #[test]
    fn render_examples() {
        let s = Situation::new("marches", &[(Role::Place, "outdoor"), (Role::Agent, "soldiers")], 0.0);
        assert_eq!(render_situation(&s), "soldiers marches outdoor");
        let s = Situation::new("sprints", &[(Role::Agent, "man"), (Role::Place, "racetrack")], 0.0);
        assert_eq!(render_situation(&s), "man sprints racetrack");
        assert_eq!(render_situation(&Situation::new("v", &[], 0.0)), "v");
        let s = Situation::new(
            "Cuts",
            &[(Role::Tool, "Knife"), (Role::Item, "bread"), (Role::Agent, "chef"), (Role::Place, "kitchen")],
            0.0,
        );
        assert_eq!(render_situation(&s), "chef cuts bread kitchen knife");
    }

    #[test]
    fn roles_parse_from_json() {
        let s: Situation =
            serde_json::from_str(r#"{"verb":"v","roles":{"agent":"a","tool":"t"},"score":-1.5}"#).unwrap();
        assert_eq!(s.roles.len(), 2);
        assert!(serde_json::from_str::<Situation>(r#"{"verb":"v","roles":{"weapon":"a"},"score":0}"#).is_err());
    }

    fn arb_envelope() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((prop_oneof![Just(0.0), Just(0.001), Just(0.5)], 1usize..400), 1..12)
            .prop_map(|runs| runs.into_iter().flat_map(|(l, n)| std::iter::repeat_n(l, n)).collect())
    }

    proptest! {
        #[test]
        fn frame_count_is_ceiling(total in 1usize..=1000, stride in 1usize..=50) {
            let p = plan_frames("t", total, stride).unwrap();
            // brute force over every frame
            let expected: Vec<usize> = (1..=total).filter(|f| (f - 1) % stride == 0).collect();
            prop_assert_eq!(p.frame_indices.len(), total.div_ceil(stride));
            prop_assert_eq!(&p.frame_indices, &expected);
            prop_assert!(p.frame_indices.windows(2).all(|w| w[1] - w[0] == stride));
        }

        #[test]
        fn chunks_avoid_qualifying_silence(env in arb_envelope(), min_sil in 1u64..500, min_chunk in 0u64..300) {
            let p = SilenceParams { threshold_db: -40.0, min_silence_ms: min_sil, min_chunk_ms: min_chunk };
            let chunks = chunk_audio(&env, &p).unwrap();
            let runs: Vec<_> = silent_runs(&env, -40.0).into_iter().filter(|r| r.duration_ms() >= min_sil).collect();
            for c in &chunks {
                prop_assert!(c.duration_ms() >= min_chunk);
                for r in &runs {
                    prop_assert!(c.end_ms <= r.start_ms || c.start_ms >= r.end_ms);
                }
            }
            prop_assert!(chunks.windows(2).all(|w| w[0].end_ms < w[1].start_ms));
        }

        #[test]
        fn shorter_min_silence_never_merges(env in arb_envelope(), a in 1u64..500, b in 1u64..500) {
            let (lo, hi) = (a.min(b), a.max(b));
            let params = |m| SilenceParams { threshold_db: -40.0, min_silence_ms: m, min_chunk_ms: 1 };
            let n_lo = chunk_audio(&env, &params(lo)).unwrap().len();
            let n_hi = chunk_audio(&env, &params(hi)).unwrap().len();
            prop_assert!(n_lo >= n_hi);
        }

        #[test]
        fn argmax_survives_positive_affine_maps(
            scores in proptest::collection::vec(-8i32..8, 1..10),
            scale_pow in -2i32..4,
            shift in -16i32..16,
        ) {
            let verbs = ["d", "b", "c", "a", "e"];
            let cands: Vec<Situation> = scores.iter().enumerate()
                .map(|(i, &s)| Situation::new(verbs[i % verbs.len()], &[(Role::Place, &i.to_string())], s as f64))
                .collect();
            let scale = 2f64.powi(scale_pow);
            let mapped: Vec<Situation> = cands.iter()
                .map(|c| Situation { score: scale * c.score + shift as f64, ..c.clone() })
                .collect();
            let a = select_situation(&cands).unwrap();
            let b = select_situation(&mapped).unwrap();
            prop_assert_eq!(&a.verb, &b.verb);
            prop_assert_eq!(&a.roles, &b.roles);
        }
    }
}
