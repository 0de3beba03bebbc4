//! `key = value` configuration files mirroring the command-line flags.
//!
//! Keys are long flag names without the leading dashes. Values for flags
//! given on the command line are ignored, so explicit flags always win.
//! Boolean flags accept `true`/`false`. Keys belonging to other subcommands
//! are ignored; keys no subcommand knows are an error.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};
use clap::Command;

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", i + 1);
        };
        let value = value.trim().trim_matches('"');
        out.push((key.trim().to_string(), value.to_string()));
    }
    Ok(out)
}

/// Path given by `--config`, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Inserts config values as flags right after the subcommand name, skipping
/// flags already present in `args`.
pub fn apply(cmd: &Command, args: Vec<OsString>, entries: &[(String, String)]) -> Result<Vec<OsString>> {
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let Some(pos) = args
        .iter()
        .skip(1)
        .position(|a| names.contains(&a.to_string_lossy().as_ref()))
        .map(|p| p + 1)
    else {
        return Ok(args);
    };
    let sub = cmd
        .find_subcommand(args[pos].to_string_lossy().as_ref())
        .expect("name came from the command");

    let given = |key: &str| {
        args.iter().any(|a| {
            let s = a.to_string_lossy();
            s == format!("--{key}") || s.starts_with(&format!("--{key}="))
        })
    };
    let known_elsewhere = |key: &str| {
        cmd.get_subcommands()
            .any(|c| c.get_arguments().any(|a| a.get_long() == Some(key)))
    };

    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            if known_elsewhere(key) {
                continue;
            }
            bail!("unknown config key {key:?}");
        };
        if key == "config" || given(key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            let on: bool = value
                .parse()
                .with_context(|| format!("config key {key:?} expects true or false"))?;
            if on {
                injected.push(format!("--{key}").into());
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn cmd() -> Command {
        Command::new("x")
            .arg(Arg::new("seed").long("seed").global(true))
            .subcommand(
                Command::new("run")
                    .arg(Arg::new("dt").long("dt"))
                    .arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)),
            )
            .subcommand(Command::new("other").arg(Arg::new("out").long("out")))
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let e = parse("# c\n dt = 4\nseed=\"9\"\n\n").unwrap();
        assert_eq!(e, vec![("dt".into(), "4".into()), ("seed".into(), "9".into())]);
        assert!(parse("oops").is_err());
    }

    #[test]
    fn flags_win_and_booleans_expand() {
        let entries = parse("dt = 4\nseed = 9\nfast = true\nout = x").unwrap();
        let args = apply(&cmd(), os(&["x", "run", "--dt", "2"]), &entries).unwrap();
        assert_eq!(args, os(&["x", "run", "--seed", "9", "--fast", "--dt", "2"]));
        assert!(apply(&cmd(), os(&["x", "run"]), &parse("bogus = 1").unwrap()).is_err());
    }
}
