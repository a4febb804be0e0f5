//! `--config` files: one `key = value` per line, keys named like the long
//! flags of the chosen subcommand (`-` or `_` both accepted). Values from
//! the file are used only for flags absent from the command line.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::error::CliError;

/// Returns `argv` with the config file's entries spliced in after the
/// subcommand name.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&args) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
    let entries = parse(&text)?;

    let cli = Cli::command();
    let Some((at, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cli.find_subcommand(a).map(|s| (i, s)))
    else {
        return Ok(argv);
    };

    let mut extra = Vec::new();
    for (line, key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|arg| arg.get_long() == Some(key.as_str()))
            .filter(|_| key != "config")
            .ok_or_else(|| {
                CliError::Config(format!(
                    "line {line}: `{key}` is not an option of `{}`",
                    sub.get_name()
                ))
            })?;
        let flag = format!("--{key}");
        if args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" | "yes" | "1" => extra.push(flag),
                "false" | "no" | "0" => {}
                other => {
                    return Err(CliError::Config(format!(
                        "line {line}: `{key}` expects true or false, got `{other}`"
                    )))
                }
            }
        } else {
            extra.push(format!("{flag}={value}"));
        }
    }

    let mut out = argv;
    out.splice(at + 1..at + 1, extra.into_iter().map(OsString::from));
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// `(line number, key, value)` triples; keys normalized to dashes.
fn parse(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, key, value));
    }
    Ok(out)
}
