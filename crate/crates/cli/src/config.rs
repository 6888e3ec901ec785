//! Flat `key = value` config files, spliced into the argument list so that
//! command-line flags given later override them.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", n + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in a raw argument list, if present.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
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

/// Insert the config entries the chosen subcommand accepts right after its
/// name. Keys no subcommand knows are an error.
pub fn splice(args: Vec<OsString>, path: &Path, cmd: &clap::Command) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let entries = parse(&text)?;
    let Some(pos) = args
        .iter()
        .position(|a| cmd.get_subcommands().any(|s| a.to_string_lossy() == s.get_name()))
    else {
        return Ok(args);
    };
    let name = args[pos].to_string_lossy().to_string();
    let sub = cmd.find_subcommand(&name).expect("subcommand found above");
    let accepts = |c: &clap::Command, key: &str| c.get_arguments().any(|a| a.get_long() == Some(key));
    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        if accepts(sub, &key) || accepts(cmd, &key) {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else if cmd.get_subcommands().any(|s| accepts(s, &key)) {
            log::debug!("config key {key} does not apply to {name}");
        } else {
            bail!("unknown config key {key:?}");
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
