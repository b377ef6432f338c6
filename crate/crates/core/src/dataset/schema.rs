//! Validation of replay documents against the shipped schema.
//!
//! The schema document uses a small subset of JSON Schema: `type`,
//! `properties`, `required`, `additionalProperties`, `items`, `enum`,
//! `minimum`/`maximum`, `minItems`/`maxItems`, `minLength`/`maxLength`,
//! `minProperties`/`maxProperties`, `propertyNames`, `format` (`hex`,
//! `int64`), `nullable` and local `$ref`. Record invariants that a schema
//! cannot express are checked afterwards in code.

use std::sync::OnceLock;

use serde_json::{Map, Value};

use crate::anon::is_anonymized_id;
use crate::extract::results_consistent;
use crate::protocol::{GameResult, LOOPS_PER_SECOND};

pub const SCHEMA_TEXT: &str = include_str!("../../schema/replay_record.schema.json");

pub fn schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| serde_json::from_str(SCHEMA_TEXT).expect("shipped schema is valid JSON"))
}

/// A failed check: the offending field path (`players[1].race`,
/// `header.version.build`; empty for the document root) and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

fn violation(field: &str, reason: impl Into<String>) -> Violation {
    Violation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn child(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_matches(value: &Value, ty: &str) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        "number" => value.is_number(),
        "integer" => value.is_i64() || value.is_u64(),
        _ => false,
    }
}

fn resolve<'a>(root: &'a Value, reference: &str) -> &'a Value {
    let pointer = reference
        .strip_prefix('#')
        .expect("only local references are used");
    root.pointer(pointer).expect("reference resolves")
}

fn check_format(value: &Value, format: &str, path: &str) -> Result<(), Violation> {
    let ok = match format {
        "hex" => value.as_str().is_some_and(|s| {
            s.len() % 2 == 0 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
        }),
        "int64" => match value {
            Value::String(s) => s.parse::<i64>().is_ok_and(|n| n.to_string() == *s),
            other => other.is_i64(),
        },
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(violation(path, format!("not a valid {format} value")))
    }
}

fn validate_node(root: &Value, schema: &Value, value: &Value, path: &str) -> Result<(), Violation> {
    if value.is_null() && schema.get("nullable").and_then(Value::as_bool) == Some(true) {
        return Ok(());
    }
    if let Some(reference) = schema.get("$ref").and_then(Value::as_str) {
        validate_node(root, resolve(root, reference), value, path)?;
    }
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        if !allowed.iter().any(|t| type_matches(value, t)) {
            return Err(violation(
                path,
                format!("expected {}", allowed.join(" or ")),
            ));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(violation(path, "value not among the allowed ones"));
        }
    }
    if let Some(format) = schema.get("format").and_then(Value::as_str) {
        check_format(value, format, path)?;
    }
    let bound = |key: &str| schema.get(key).and_then(Value::as_f64);
    if let Some(n) = value.as_f64().filter(|_| value.is_number()) {
        if bound("minimum").is_some_and(|min| n < min) {
            return Err(violation(path, "below minimum"));
        }
        if bound("maximum").is_some_and(|max| n > max) {
            return Err(violation(path, "above maximum"));
        }
    }
    let count = |key: &str| schema.get(key).and_then(Value::as_u64).map(|n| n as usize);
    if let Some(s) = value.as_str() {
        let len = s.chars().count();
        if count("minLength").is_some_and(|min| len < min)
            || count("maxLength").is_some_and(|max| len > max)
        {
            return Err(violation(path, "string length out of range"));
        }
    }
    if let Some(items) = value.as_array() {
        if count("minItems").is_some_and(|min| items.len() < min)
            || count("maxItems").is_some_and(|max| items.len() > max)
        {
            return Err(violation(
                path,
                format!("{} items is out of range", items.len()),
            ));
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                validate_node(root, item_schema, item, &format!("{path}[{i}]"))?;
            }
        }
    }
    if let Some(object) = value.as_object() {
        validate_object(root, schema, object, path)?;
        if count("minProperties").is_some_and(|min| object.len() < min)
            || count("maxProperties").is_some_and(|max| object.len() > max)
        {
            return Err(violation(
                path,
                format!("{} properties is out of range", object.len()),
            ));
        }
    }
    Ok(())
}

fn validate_object(
    root: &Value,
    schema: &Value,
    object: &Map<String, Value>,
    path: &str,
) -> Result<(), Violation> {
    let properties = schema.get("properties").and_then(Value::as_object);
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            if !object.contains_key(key) {
                return Err(violation(&child(path, key), "required field missing"));
            }
        }
    }
    // Walk in schema order so the first reported problem is stable.
    if let Some(properties) = properties {
        for (key, sub) in properties {
            if let Some(value) = object.get(key) {
                validate_node(root, sub, value, &child(path, key))?;
            }
        }
    }
    let names = schema.get("propertyNames");
    let additional = schema.get("additionalProperties");
    for (key, value) in object {
        if properties.is_some_and(|p| p.contains_key(key)) {
            continue;
        }
        let field = child(path, key);
        if let Some(format) = names.and_then(|n| n.get("format")).and_then(Value::as_str) {
            check_format(&Value::String(key.clone()), format, &field)?;
        }
        match additional {
            Some(Value::Bool(false)) => return Err(violation(&field, "unknown field")),
            Some(sub @ Value::Object(_)) => validate_node(root, sub, value, &field)?,
            _ => {}
        }
    }
    Ok(())
}

fn results_of(doc: &Value) -> Vec<GameResult> {
    doc["players"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|p| serde_json::from_value(p["result"].clone()).ok())
        .collect()
}

/// Record invariants beyond structure. Assumes `validate_structure` passed.
fn validate_invariants(doc: &Value) -> Result<(), Violation> {
    let loops = doc["game_duration_loops"]
        .as_u64()
        .expect("checked by schema");
    let header_loops = doc["header"]["duration_loops"]
        .as_u64()
        .expect("checked by schema");
    let seconds = doc["game_duration_seconds"]
        .as_f64()
        .expect("checked by schema");
    let seconds_ok = |l: u64| seconds == l as f64 / LOOPS_PER_SECOND as f64;
    // Three values must agree; blame the odd one out.
    match (
        loops == header_loops,
        seconds_ok(loops),
        seconds_ok(header_loops),
    ) {
        (true, true, _) => {}
        (true, false, _) => {
            return Err(violation(
                "game_duration_seconds",
                "must equal game_duration_loops / 16",
            ))
        }
        (false, _, true) => {
            return Err(violation(
                "game_duration_loops",
                "disagrees with header and seconds",
            ))
        }
        (false, true, _) => {
            return Err(violation(
                "header.duration_loops",
                "disagrees with game_duration_loops",
            ))
        }
        (false, false, false) => {
            return Err(violation(
                "game_duration_loops",
                "disagrees with header.duration_loops",
            ))
        }
    }

    let mut previous = 0;
    for (i, event) in doc["events"]
        .as_array()
        .expect("checked by schema")
        .iter()
        .enumerate()
    {
        let at = event["loop"].as_u64().expect("checked by schema");
        if at < previous {
            return Err(violation(
                &format!("events[{i}].loop"),
                "events not sorted by loop",
            ));
        }
        if at > loops {
            return Err(violation(
                &format!("events[{i}].loop"),
                "event after the end of the game",
            ));
        }
        previous = at;
    }

    let players = doc["players"].as_array().expect("checked by schema");
    if !results_consistent(&results_of(doc)) {
        // Point at the first result that makes the set inconsistent.
        let results = results_of(doc);
        let culprit = (0..results.len())
            .find(|&i| {
                let mut rest = results.clone();
                rest.remove(i);
                results_consistent(&rest) && !rest.is_empty()
            })
            .unwrap_or(0);
        return Err(violation(
            &format!("players[{culprit}].result"),
            "winner rule violated",
        ));
    }
    if doc["anonymized"].as_bool() == Some(true) {
        for (i, player) in players.iter().enumerate() {
            if !player["nickname"].as_str().is_some_and(is_anonymized_id) {
                return Err(violation(
                    &format!("players[{i}].nickname"),
                    "not an issued id",
                ));
            }
        }
    }
    Ok(())
}

/// Check `doc` against the schema document and the record invariants.
pub fn validate_record_value(doc: &Value) -> Result<(), Violation> {
    let root = schema();
    validate_node(root, root, doc, "")?;
    validate_invariants(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_version_matches_emitted_version() {
        assert_eq!(schema()["version"], crate::extract::TOOLSET_VERSION);
        assert_eq!(
            schema()["properties"]["toolset_version"]["enum"][0],
            crate::extract::TOOLSET_VERSION
        );
    }

    #[test]
    fn typed_value_definition() {
        let root = schema();
        let def = &root["definitions"]["typed_value"];
        let ok = serde_json::json!({"Struct": {"0": {"Int": 1}, "-3": {"Optional": null}, "5": {"Blob": "00ff"}}});
        assert!(validate_node(root, def, &ok, "p").is_ok());
        let bad = serde_json::json!({"Struct": {"x": {"Int": 1}}});
        assert_eq!(
            validate_node(root, def, &bad, "p").unwrap_err().field,
            "p.Struct.x"
        );
        let bad = serde_json::json!({"Blob": "ABC"});
        assert_eq!(
            validate_node(root, def, &bad, "p").unwrap_err().field,
            "p.Blob"
        );
        let two = serde_json::json!({"Int": 1, "Bool": true});
        assert_eq!(validate_node(root, def, &two, "p").unwrap_err().field, "p");
    }
}
