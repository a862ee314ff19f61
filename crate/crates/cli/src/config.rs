//! `key = value` configuration files expanded into command-line tokens.

use std::fs;
use std::path::Path;

/// Keys that are plain switches: `true` emits the flag, `false` omits it.
const SWITCHES: &[&str] = &["diagnostics"];

pub fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`, got {raw:?}", i + 1))?;
        let key = key.trim().trim_start_matches('-').replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        if key == "config" {
            return Err(format!("config line {}: nested config files are not supported", i + 1));
        }
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" | "1" | "yes" => tokens.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => return Err(format!("config line {}: {key} expects true or false", i + 1)),
            }
        } else {
            tokens.push(format!("--{key}"));
            tokens.push(value.to_string());
        }
    }
    Ok(tokens)
}

fn config_path(args: &[String]) -> Result<Option<String>, String> {
    let mut it = args.iter();
    let mut found = None;
    while let Some(a) = it.next() {
        if a == "--config" {
            found = Some(it.next().cloned().ok_or("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            found = Some(p.to_string());
        }
    }
    Ok(found)
}

/// Inserts the tokens of the `--config` file right after the subcommand so
/// that flags given on the command line override them.
pub fn expand(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let tokens = parse(&text)?;
    let Some(pos) = args.iter().skip(1).position(|a| subcommands.contains(&a.as_str())) else {
        return Ok(args);
    };
    let mut out = args[..pos + 2].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[pos + 2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_switches() {
        let t = parse("# comment\nL = 100\nstep_size=1e-3 # trailing\n\ndiagnostics = true\n").unwrap();
        assert_eq!(t, vec!["--L", "100", "--step-size", "1e-3", "--diagnostics"]);
        assert!(parse("nonsense").is_err());
        assert!(parse("diagnostics = maybe").is_err());
    }

    #[test]
    fn file_tokens_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "L = 5\n").unwrap();
        let args: Vec<String> = ["bin", "--threads", "2", "distance", "--config", path.to_str().unwrap(), "--L", "7"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand(args, &["distance"]).unwrap();
        assert_eq!(&out[..6], &["bin", "--threads", "2", "distance", "--L", "5"]);
        assert_eq!(out.last().unwrap(), "7");
    }
}
