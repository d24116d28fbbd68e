//! `--config` files: a JSON object whose keys are long flag names.
//!
//! Keys may use `snake_case` or `kebab-case`. A nested object under a
//! subcommand's name applies to that subcommand only. The file's flags are
//! spliced in ahead of the command line, so explicit flags win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

/// Flags accepted before the subcommand name.
const GLOBAL: &[&str] = &["threads", "verbose"];
/// Global flags that take a value.
const GLOBAL_VALUED: &[&str] = &["--config", "--threads"];

/// Returns `argv` with the flags from any `--config` file merged in.
pub fn expand(argv: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read config file {path}"))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("config file {path} is not valid JSON"))?;
    let Value::Object(map) = value else {
        bail!("config file {path} must contain a JSON object");
    };

    let sub_pos = subcommand_position(&argv);
    let sub = sub_pos.map(|i| argv[i].as_str());
    let mut global = Vec::new();
    let mut local = Vec::new();
    collect(&map, sub, subcommands, &mut global, &mut local, Path::new(&path))?;

    let mut out = Vec::with_capacity(argv.len() + global.len() + local.len());
    out.push(argv[0].clone());
    out.extend(global);
    match sub_pos {
        Some(i) => {
            out.extend(argv[1..=i].iter().cloned());
            out.extend(local);
            out.extend(argv[i + 1..].iter().cloned());
        }
        None => out.extend(argv[1..].iter().cloned()),
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    let mut found = None;
    while let Some(a) = it.next() {
        if a == "--config" {
            found = it.next().cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            found = Some(p.to_string());
        }
    }
    found
}

fn subcommand_position(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if GLOBAL_VALUED.contains(&a) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn collect(
    map: &Map<String, Value>,
    sub: Option<&str>,
    subcommands: &[&str],
    global: &mut Vec<String>,
    local: &mut Vec<String>,
    path: &Path,
) -> Result<()> {
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if flag == "config" {
            continue;
        }
        if subcommands.contains(&flag.as_str()) {
            if let (Value::Object(inner), Some(s)) = (value, sub) {
                if s == flag {
                    collect(inner, None, &[], global, local, path)?;
                }
                continue;
            }
            bail!("{}: `{key}` must be an object of flags", path.display());
        }
        let target = if GLOBAL.contains(&flag.as_str()) { &mut *global } else { &mut *local };
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => target.push(format!("--{flag}")),
            Value::Number(n) => target.extend([format!("--{flag}"), n.to_string()]),
            Value::String(s) => target.extend([format!("--{flag}"), s.clone()]),
            Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        other => bail!("{}: `{key}` holds unsupported item {other}", path.display()),
                    })
                    .collect::<Result<_>>()?;
                target.extend([format!("--{flag}"), parts.join(",")]);
            }
            Value::Object(_) => bail!("{}: `{key}` cannot be an object", path.display()),
        }
    }
    Ok(())
}
