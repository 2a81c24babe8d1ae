//! Fixture-backed recognizer speaking the plugin protocol:
//! `genreflow-stub-plugin <speech|situation> <probe|recognize> <request.json> <response.json>`.
//!
//! Media paths in requests point at JSON fixtures holding canned answers.

use std::path::Path;
use std::process::ExitCode;

use genreflow_core::media::plugin::{PluginKind, Stage};
use genreflow_core::media::stub::serve;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [kind, stage, req, resp] = args.as_slice() else {
        eprintln!("usage: genreflow-stub-plugin <speech|situation> <probe|recognize> <request> <response>");
        return ExitCode::from(2);
    };
    let kind = match kind.as_str() {
        "speech" => PluginKind::Speech,
        "situation" => PluginKind::Situation,
        other => {
            eprintln!("unknown plugin kind `{other}`");
            return ExitCode::from(2);
        }
    };
    let stage = match stage.as_str() {
        "probe" => Stage::Probe,
        "recognize" => Stage::Recognize,
        other => {
            eprintln!("unknown stage `{other}`");
            return ExitCode::from(2);
        }
    };
    match serve(kind, stage, Path::new(req), Path::new(resp)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
