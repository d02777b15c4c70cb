//! `--config file.json` support: a JSON object of flag names to values.
//!
//! Entries are appended to the argument list before parsing, skipping any flag
//! already given on the command line, so explicit flags always win.

use std::ffi::OsString;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// Subcommands whose own `--config` flag means something else.
const OWNS_CONFIG: &[&str] = &["bench"];

fn flag_value(args: &[OsString], name: &str) -> Option<String> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == long {
            return it.next().map(|v| v.to_string_lossy().into_owned());
        }
        if let Some(v) = a.strip_prefix(&prefix) {
            return Some(v.to_string());
        }
    }
    None
}

fn has_flag(args: &[OsString], name: &str) -> bool {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == long || a.starts_with(&prefix)
    })
}

fn subcommand(args: &[OsString]) -> Option<String> {
    // first bare word after the program name that is not a flag value
    let mut skip_next = false;
    for a in args.iter().skip(1) {
        let a = a.to_string_lossy();
        if skip_next {
            skip_next = false;
            continue;
        }
        if a == "--config" || a == "--threads" {
            skip_next = true;
            continue;
        }
        if !a.starts_with('-') {
            return Some(a.into_owned());
        }
    }
    None
}

fn render(value: &Value) -> Result<Option<String>> {
    Ok(match value {
        Value::Bool(true) => Some(String::new()),
        Value::Bool(false) | Value::Null => None,
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let parts = items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    other => bail!("unsupported list item {other}"),
                })
                .collect::<Result<Vec<_>>>()?;
            Some(parts.join(","))
        }
        Value::Object(_) => bail!("nested objects are not flag values"),
    })
}

/// Returns `args` with the entries of the `--config` file appended.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = flag_value(&args, "config") else {
        return Ok(args);
    };
    if subcommand(&args).is_some_and(|s| OWNS_CONFIG.contains(&s.as_str())) {
        return Ok(args);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let obj: serde_json::Map<String, Value> =
        serde_json::from_str(&text).with_context(|| format!("config {path} must be a JSON object"))?;
    let mut out = args;
    let mut extra = Vec::new();
    for (key, value) in &obj {
        let name = key.trim_start_matches("--");
        if name == "config" || has_flag(&out, name) {
            continue;
        }
        match render(value).with_context(|| format!("config key {key:?}"))? {
            None => {}
            Some(v) if v.is_empty() => extra.push(OsString::from(format!("--{name}"))),
            Some(v) => extra.push(OsString::from(format!("--{name}={v}"))),
        }
    }
    out.extend(extra);
    Ok(out)
}
