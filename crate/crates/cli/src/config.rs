//! Flat `key = value` config files and run manifests.
//!
//! Keys are long flag names (`list-size` or `list_size`). `true`/`false`
//! switch boolean flags, a repeated key repeats the flag, and `#` starts a
//! comment line. Config entries are spliced in front of the command-line
//! flags, so explicit flags win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::Path;

use clap::{ArgMatches, Command};

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`, got `{line}`", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key `{}`", i + 1, k.trim()));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn to_flags(entries: &[(String, String)]) -> Vec<OsString> {
    let mut args = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => args.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{k}").into());
                args.push(v.into());
            }
        }
    }
    args
}

/// Removes `--config PATH` from `argv` and splices the file's entries in
/// right after the subcommand name.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            path = Some(it.next().ok_or("--config needs a path")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let flags = to_flags(&parse(&text)?);
    // argv[0] is the binary, argv[1] the subcommand
    let at = rest.len().min(2);
    rest.splice(at..at, flags);
    Ok(rest)
}

/// Every resolved argument of a subcommand, defaults included, in config
/// syntax so the file can be passed back through `--config`.
pub fn manifest(verb: &Command, matches: &ArgMatches) -> String {
    let name = verb.get_name();
    let mut out = format!("# pirank {name} {}\n", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# rerun: pirank {name} --config <this file>");
    let mut ids: Vec<&str> = verb.get_arguments().map(|a| a.get_id().as_str()).collect();
    ids.sort_unstable();
    for id in ids {
        let Ok(Some(values)) = matches.try_get_raw(id) else {
            continue;
        };
        let key = id.replace('_', "-");
        for v in values {
            let _ = writeln!(out, "{key} = {}", v.to_string_lossy());
        }
    }
    if let Ok(threads) = std::env::var("PIRANK_THREADS") {
        let _ = writeln!(out, "# PIRANK_THREADS={threads}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_normalizes_keys() {
        let e = parse("# c\n\nlist_size = 20\n tau=0.5 \nstraight-through = true\n").unwrap();
        assert_eq!(
            e,
            vec![
                ("list-size".into(), "20".into()),
                ("tau".into(), "0.5".into()),
                ("straight-through".into(), "true".into())
            ]
        );
        assert!(parse("oops").unwrap_err().contains("line 1"));
        assert!(parse("config = x").is_err());
    }

    #[test]
    fn booleans_become_switches() {
        let flags = to_flags(&[
            ("a".into(), "true".into()),
            ("b".into(), "false".into()),
            ("c".into(), "3".into()),
        ]);
        assert_eq!(flags, vec![OsString::from("--a"), "--c".into(), "3".into()]);
    }

    #[test]
    fn config_entries_precede_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "tau = 2\n").unwrap();
        let argv: Vec<OsString> = vec![
            "pirank".into(),
            "train".into(),
            "--tau".into(),
            "5".into(),
            "--config".into(),
            p.clone().into(),
        ];
        let out = expand(argv).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s, ["pirank", "train", "--tau", "2", "--tau", "5"]);
    }
}
