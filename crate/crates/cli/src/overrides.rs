//! `--set path.to.field=value` overrides on the serialized config.

use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Parses the right-hand side: JSON scalars first, bare strings otherwise.
fn parse_value(text: &str) -> Value {
    match serde_json::from_str::<Value>(text) {
        Ok(v) if !v.is_object() && !v.is_array() => v,
        _ => Value::String(text.to_string()),
    }
}

/// Applies one `key=value` override. Only existing scalar (or null) fields
/// may be replaced; containers and unknown paths are rejected by name.
pub fn apply_override(root: &mut Value, arg: &str) -> CliResult<()> {
    let (path, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::config(arg, "override must have the form path=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(CliError::config(arg, "empty override path"));
    }
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::config(path, "no such field"))?;
    }
    if node.is_object() || node.is_array() {
        return Err(CliError::config(
            path,
            "only scalar fields can be overridden",
        ));
    }
    *node = parse_value(raw);
    Ok(())
}

pub fn apply_overrides(root: &mut Value, specs: &[String]) -> CliResult<()> {
    specs.iter().try_for_each(|s| apply_override(root, s))
}
