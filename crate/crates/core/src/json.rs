//! Canonical JSON: sorted keys, floats rounded to 9 significant digits,
//! trailing newline. Equal values always serialize to equal bytes.

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::Result;

pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = serde_json::to_string_pretty(&canonicalize(&serde_json::to_value(value)?))?;
    out.push('\n');
    Ok(out)
}

fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            format!("{x:.8e}")
                .parse::<f64>()
                .ok()
                .and_then(Number::from_f64)
                .map_or(Value::String("undefined".into()), Value::Number)
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k.clone(), canonicalize(v));
            }
            Value::Object(out)
        }
        other => other.clone(),
    }
}
