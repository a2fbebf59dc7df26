//! Flat `key = value` config files. Every key names a long flag; values
//! from the file are used only for flags absent from the command line.

use std::ffi::OsString;
use std::path::Path;

use clap::{Arg, Command};
use deep_ed::{Error, Result};
use ini::Ini;

/// Value of `--config` in raw arguments, if any.
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

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ini = Ini::load_from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line, e.msg.to_string()))?;
    let mut pairs = Vec::new();
    for (section, props) in ini.iter() {
        if let Some(s) = section {
            return Err(Error::invalid(format!("{}: sections are not supported (found [{s}])", path.display())));
        }
        for (k, v) in props.iter() {
            pairs.push((k.trim().trim_start_matches("--").replace('_', "-"), v.trim().to_owned()));
        }
    }
    Ok(pairs)
}

fn longs(arg: &Arg) -> Vec<&str> {
    arg.get_long().into_iter().chain(arg.get_all_aliases().unwrap_or_default()).collect()
}

fn present(args: &[OsString], arg: &Arg) -> bool {
    longs(arg).into_iter().any(|long| {
        let flag = format!("--{long}");
        let prefix = format!("--{long}=");
        args.iter().any(|a| {
            let s = a.to_string_lossy();
            s == flag || s.starts_with(&prefix)
        })
    })
}

/// Appends config values for flags of the chosen subcommand that the
/// command line leaves unset. Keys no subcommand knows are rejected.
pub fn merge(cmd: &Command, args: Vec<OsString>, pairs: &[(String, String)]) -> Result<Vec<OsString>> {
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let sub = args.iter().skip(1).find_map(|a| names.iter().find(|n| a.to_string_lossy() == **n).copied());
    let known = |c: &Command, key: &str| c.get_arguments().find(|a| longs(a).contains(&key)).cloned();
    let mut out = args.clone();
    for (key, value) in pairs {
        if key == "config" {
            continue;
        }
        let arg = known(cmd, key).or_else(|| sub.and_then(|s| cmd.find_subcommand(s)).and_then(|c| known(c, key)));
        let Some(arg) = arg else {
            if cmd.get_subcommands().any(|c| known(c, key).is_some()) {
                continue;
            }
            return Err(Error::invalid(format!("config key `{key}` is not a known option")));
        };
        if present(&args, &arg) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().unwrap_or(key));
        if arg.get_action().takes_values() {
            out.push(flag.into());
            out.push(value.into());
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => out.push(flag.into()),
                "false" | "no" | "0" => {}
                other => return Err(Error::invalid(format!("config key `{key}` expects a boolean, got `{other}`"))),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::ArgAction;

    fn cmd() -> Command {
        Command::new("x")
            .arg(Arg::new("threads").long("threads").global(true))
            .subcommand(Command::new("a").arg(Arg::new("lr").long("lr").visible_alias("rate")).arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)))
            .subcommand(Command::new("b").arg(Arg::new("out").long("out")))
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn command_line_wins() {
        let pairs = vec![("lr".to_string(), "0.5".to_string()), ("fast".to_string(), "true".to_string())];
        let out = merge(&cmd(), os(&["x", "a", "--lr", "0.1"]), &pairs).unwrap();
        assert_eq!(out, os(&["x", "a", "--lr", "0.1", "--fast"]));
        let out = merge(&cmd(), os(&["x", "a", "--rate=0.1"]), &pairs[..1]).unwrap();
        assert_eq!(out, os(&["x", "a", "--rate=0.1"]));
        let aliased = vec![("rate".to_string(), "0.3".to_string())];
        assert_eq!(merge(&cmd(), os(&["x", "a"]), &aliased).unwrap(), os(&["x", "a", "--lr", "0.3"]));
    }

    #[test]
    fn keys_of_other_subcommands_are_ignored_and_unknown_keys_rejected() {
        let pairs = vec![("out".to_string(), "dir".to_string()), ("threads".to_string(), "1".to_string())];
        assert_eq!(merge(&cmd(), os(&["x", "a"]), &pairs).unwrap(), os(&["x", "a", "--threads", "1"]));
        let bad = vec![("nope".to_string(), "1".to_string())];
        assert!(merge(&cmd(), os(&["x", "a"]), &bad).is_err());
    }

    #[test]
    fn reads_flat_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ini");
        std::fs::write(&p, "# comment\nlr = 0.2\nbatch_docs=4\n").unwrap();
        assert_eq!(read_pairs(&p).unwrap(), vec![("lr".into(), "0.2".into()), ("batch-docs".into(), "4".into())]);
        std::fs::write(&p, "[train]\nlr = 0.2\n").unwrap();
        assert!(read_pairs(&p).is_err());
        assert_eq!(config_path(&os(&["x", "--config=c.ini"])), Some("c.ini".into()));
    }
}
