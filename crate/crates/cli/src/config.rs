//! `key = value` config files, expanded into command-line flags.
//!
//! Expanded flags are placed right after the subcommand, ahead of the flags
//! given on the command line, so the command line wins.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses config text into `--key value` pairs. `true` becomes a bare flag and
/// `false` drops the key.
pub fn parse(text: &str) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", i + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            v => {
                args.push(format!("--{key}").into());
                args.push(v.into());
            }
        }
    }
    Ok(args)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
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

/// Returns `args` with the config file's flags spliced in after the subcommand.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let extra = parse(&text)?;
    let verb = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| {
            let s = a.to_string_lossy();
            !s.starts_with('-') && args[i - 1] != "--config"
        })
        .map(|(i, _)| i);
    let Some(verb) = verb else {
        return Ok(args);
    };
    let mut out = args[..=verb].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[verb + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_booleans() {
        let text = "# comment\nk_prime = 64\nqtp = idf   # trailing\nverbose-stats = true\nskip = false\n\n";
        assert_eq!(
            parse(text).unwrap(),
            os(&["--k-prime", "64", "--qtp", "idf", "--verbose-stats"])
        );
        assert!(parse("novalue\n").is_err());
    }

    #[test]
    fn splices_after_the_verb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        std::fs::write(&p, "k = 5\n").unwrap();
        let args = os(&[
            "latte",
            "--config",
            p.to_str().unwrap(),
            "retrieve",
            "--k",
            "9",
        ]);
        let out = expand(args).unwrap();
        let tail: Vec<_> = out[3..]
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(tail, ["retrieve", "--k", "5", "--k", "9"]);
    }
}
