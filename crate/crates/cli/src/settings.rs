//! Key-value settings files that stand in for command-line flags.
//!
//! One setting per line, `key = value`, where `key` is a long flag name
//! (`beta-scale` or `beta_scale`) and `value` is what would follow the flag.
//! Blank lines and lines starting with `#` are ignored; values may be
//! wrapped in double quotes. A flag given on the command line wins over
//! the file, and for `workers` the environment variable does too.

use std::collections::BTreeMap;

use clap::Command;

#[derive(Debug, PartialEq)]
pub struct SettingsError(pub String);

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, SettingsError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| SettingsError(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(SettingsError(format!("line {}: empty key", i + 1)));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if out.insert(key.clone(), value.to_string()).is_some() {
            return Err(SettingsError(format!("line {}: `{key}` set twice", i + 1)));
        }
    }
    Ok(out)
}

/// Removes `--config FILE` / `--config=FILE` from `args` and returns the path.
pub fn take_config_path(args: &mut Vec<String>) -> Result<Option<String>, SettingsError> {
    let mut found = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err(SettingsError("--config needs a file".into()));
            }
            found = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(path) = args[i].strip_prefix("--config=") {
            found = Some(path.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

/// Appends settings as flags of the subcommand named in `args`, skipping
/// flags already present. Keys that no subcommand knows are errors; keys
/// that only other subcommands know are skipped.
pub fn inject(cmd: &Command, args: &mut Vec<String>, settings: &BTreeMap<String, String>) -> Result<(), SettingsError> {
    let known_anywhere = |key: &str| {
        cmd.get_subcommands()
            .flat_map(|s| s.get_arguments())
            .any(|a| a.get_long() == Some(key))
    };
    for key in settings.keys() {
        if !known_anywhere(key) {
            return Err(SettingsError(format!("unknown setting `{key}`")));
        }
    }
    let Some(sub_name) = args.iter().skip(1).find(|a| !a.starts_with('-')).cloned() else {
        return Ok(());
    };
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(());
    };
    for (key, value) in settings {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        let flag = format!("--{key}");
        let given = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        let from_env = arg
            .get_env()
            .is_some_and(|var| std::env::var_os(var).is_some());
        if given || from_env {
            continue;
        }
        if arg.get_action().takes_values() {
            args.push(format!("{flag}={value}"));
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => args.push(flag),
                "false" | "no" | "0" => {}
                other => return Err(SettingsError(format!("`{key}` expects true or false, got `{other}`"))),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let s = parse("# c\nbeta_scale = 0.1\n\nout = \"dir with space\"\n").unwrap();
        assert_eq!(s["beta-scale"], "0.1");
        assert_eq!(s["out"], "dir with space");
        assert!(parse("novalue").is_err());
        assert!(parse("a = 1\na = 2").is_err());
    }

    #[test]
    fn config_flag_is_removed() {
        let mut args: Vec<String> = ["dovi", "run", "--config", "x.cfg", "--seed", "1"]
            .map(String::from)
            .to_vec();
        assert_eq!(take_config_path(&mut args).unwrap().as_deref(), Some("x.cfg"));
        assert_eq!(args, ["dovi", "run", "--seed", "1"]);
        let mut args: Vec<String> = ["dovi", "--config=y", "run"].map(String::from).to_vec();
        assert_eq!(take_config_path(&mut args).unwrap().as_deref(), Some("y"));
        assert_eq!(args, ["dovi", "run"]);
    }
}
