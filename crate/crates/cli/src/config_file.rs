//! `key=value` config files, spliced into argv ahead of the user's own flags.
//!
//! Clap is configured so a repeated flag keeps its last value, which makes
//! explicit flags override the file.

use std::ffi::OsString;
use std::path::Path;

use crate::exit::ConfigError;

/// Parse `key=value` lines into `--key value` arguments. `#` starts a
/// comment; `true`/`false` toggle switches; underscores become dashes.
pub fn config_args(text: &str, origin: &Path) -> Result<Vec<OsString>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!("{}:{}: expected key=value, got `{line}`", origin.display(), n + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(ConfigError(format!("{}:{}: bad key `{key}`", origin.display(), n + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Insert config-file arguments right after the subcommand name.
pub fn expand_argv(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let extra = config_args(&text, path)?;
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(argv.len(), |p| p + 2);
    let mut out = argv[..sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[sub..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_switches() {
        let args = config_args("# comment\nseed = 3\nskip_failures=true\nverb-definitions=false\n", Path::new("c"))
            .unwrap();
        assert_eq!(args, os(&["--seed", "3", "--skip-failures"]));
        assert!(config_args("oops", Path::new("c")).is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "epochs=7\n").unwrap();
        let argv = os(&["genreflow", "train", "--config", cfg.to_str().unwrap(), "--epochs", "2"]);
        let out = expand_argv(argv).unwrap();
        assert_eq!(out[..4], os(&["genreflow", "train", "--epochs", "7"])[..]);
        assert_eq!(out.last().unwrap(), "2");
    }
}
