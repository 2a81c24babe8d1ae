//! Canned-response recognizer for fixtures.
//!
//! The "media" files handed to the stub are JSON documents holding the
//! answers a real recognizer would produce:
//!
//! ```json
//! {"total_frames": 25, "frames": [{"index": 1, "candidates": [...]}]}
//! {"envelope_runs": [[0.5, 1000], [0.0, 500]], "transcripts": ["..."]}
//! ```
//!
//! Frames absent from the fixture are simply not answered, which lets tests
//! exercise missing-entry handling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plugin::{
    AudioProbe, FrameSituations, PluginError, PluginKind, ProbeRequest, SituationRecognizer,
    SituationRequest, SituationResponse, SpeechRecognizer, SpeechRequest, SpeechResponse, Stage,
    VideoProbe,
};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VideoFixture {
    pub total_frames: usize,
    #[serde(default)]
    pub frames: Vec<FrameSituations>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AudioFixture {
    /// Explicit per-millisecond RMS levels.
    #[serde(default)]
    pub envelope: Vec<f64>,
    /// Run-length form: `(level, duration_ms)` pairs appended after `envelope`.
    #[serde(default)]
    pub envelope_runs: Vec<(f64, usize)>,
    #[serde(default)]
    pub transcripts: Vec<String>,
}

impl AudioFixture {
    pub fn expanded_envelope(&self) -> Vec<f64> {
        let mut env = self.envelope.clone();
        for &(level, n) in &self.envelope_runs {
            env.extend(std::iter::repeat_n(level, n));
        }
        env
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubPlugin;

fn load<T: for<'de> Deserialize<'de>>(kind: PluginKind, path: &Path) -> Result<T, PluginError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PluginError::MalformedResponse {
        kind: kind.as_str(),
        reason: format!("fixture {}: {e}", path.display()),
    })
}

impl SpeechRecognizer for StubPlugin {
    fn probe_audio(&self, request: &ProbeRequest) -> Result<AudioProbe, PluginError> {
        let fx: AudioFixture = load(PluginKind::Speech, &request.media_path)?;
        Ok(AudioProbe {
            envelope: fx.expanded_envelope(),
        })
    }

    fn transcribe(&self, request: &SpeechRequest) -> Result<SpeechResponse, PluginError> {
        let fx: AudioFixture = load(PluginKind::Speech, &request.audio_path)?;
        Ok(SpeechResponse {
            transcripts: fx.transcripts.into_iter().take(request.chunks.len()).collect(),
        })
    }
}

impl SituationRecognizer for StubPlugin {
    fn probe_video(&self, request: &ProbeRequest) -> Result<VideoProbe, PluginError> {
        let fx: VideoFixture = load(PluginKind::Situation, &request.media_path)?;
        Ok(VideoProbe {
            total_frames: fx.total_frames,
        })
    }

    fn recognize(&self, request: &SituationRequest) -> Result<SituationResponse, PluginError> {
        let fx: VideoFixture = load(PluginKind::Situation, &request.video_path)?;
        let frames = request
            .frame_indices
            .iter()
            .filter_map(|i| fx.frames.iter().find(|f| f.index == *i).cloned())
            .collect();
        Ok(SituationResponse { frames })
    }
}

/// Answer one exchange the way an external plugin executable would.
pub fn serve(
    kind: PluginKind,
    stage: Stage,
    request_path: &Path,
    response_path: &Path,
) -> Result<(), PluginError> {
    let stub = StubPlugin;
    let body = match (kind, stage) {
        (PluginKind::Speech, Stage::Probe) => to_json(&stub.probe_audio(&load(kind, request_path)?)?),
        (PluginKind::Speech, Stage::Recognize) => to_json(&stub.transcribe(&load(kind, request_path)?)?),
        (PluginKind::Situation, Stage::Probe) => to_json(&stub.probe_video(&load(kind, request_path)?)?),
        (PluginKind::Situation, Stage::Recognize) => {
            to_json(&stub.recognize(&load(kind, request_path)?)?)
        }
    }?;
    std::fs::write(response_path, body)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, PluginError> {
    serde_json::to_vec(value).map_err(|e| PluginError::Io(e.into()))
}
