//! Flat `key=value` config files, merged under command-line flags.
//!
//! Each entry becomes a `--key=value` token inserted directly after the
//! subcommand name. Every argument overrides earlier occurrences of itself,
//! so anything the user types later wins.

use std::path::Path;

use clap::Command;

/// Parsed config: `(key, value)` in file order.
pub type Entries = Vec<(String, String)>;

pub fn parse(text: &str) -> Result<Entries, String> {
    let mut out = Entries::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| format!("config line {}: expected key=value, got {raw:?}", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key {:?}", n + 1, k.trim()));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Entries, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

/// Value of `--config` in `args`, if present.
pub fn find_path(args: &[String]) -> Option<String> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

/// Splice config entries into `args` right after the subcommand name.
///
/// `cmd` must already be built so argument actions are resolved.
/// Keys the chosen subcommand does not define are an error. Boolean flags
/// take `true` or `false`.
pub fn splice(cmd: &Command, args: &[String], entries: &Entries) -> Result<Vec<String>, String> {
    if entries.is_empty() {
        return Ok(args.to_vec());
    }
    let Some(pos) =
        args.iter().enumerate().skip(1).find(|(_, a)| cmd.find_subcommand(a.as_str()).is_some()).map(|(i, _)| i)
    else {
        return Ok(args.to_vec());
    };
    let sub = cmd.find_subcommand(&args[pos]).expect("found above");
    let mut tokens = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| format!("config key {key:?} is not an option of `{}`", sub.get_name()))?;
        if arg.get_action().takes_values() {
            tokens.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" => tokens.push(format!("--{key}")),
                "false" => {}
                _ => return Err(format!("config key {key:?} is a switch; use true or false")),
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# c\n\nsigma_x = 5\nm=3\n").unwrap();
        assert_eq!(e, vec![("sigma-x".into(), "5".into()), ("m".into(), "3".into())]);
        assert!(parse("oops").is_err());
        assert!(parse("config=x").is_err());
    }

    #[test]
    fn finds_config_path() {
        let a = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(find_path(&a(&["qev", "--config", "f", "slice"])), Some("f".into()));
        assert_eq!(find_path(&a(&["qev", "slice", "--config=g"])), Some("g".into()));
        assert_eq!(find_path(&a(&["qev", "slice"])), None);
    }
}
