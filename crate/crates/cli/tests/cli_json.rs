//! Schema stability of every `--json` output, validated against the
//! schemas bundled in `schemas/`.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run_json(args: &[&str]) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_jackmac"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Minimal JSON-schema checker covering the subset the bundled schemas
/// use: type, required, properties, items, enum, additionalProperties.
fn validate(value: &Value, schema: &Value) -> Result<(), String> {
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(value, t),
            Value::Array(ts) => ts
                .iter()
                .any(|t| type_matches(value, t.as_str().expect("type name"))),
            _ => false,
        };
        if !ok {
            return Err(format!("{value} is not of type {ty}"));
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!("{value} not in {allowed:?}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        let obj = value.as_object().ok_or("required on a non-object")?;
        for key in required {
            let key = key.as_str().expect("key name");
            if !obj.contains_key(key) {
                return Err(format!("missing required key {key:?}"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate(v, sub).map_err(|e| format!("{key}: {e}"))?;
                }
            }
            if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                for key in obj.keys() {
                    if !props.contains_key(key) {
                        return Err(format!("unexpected key {key:?}"));
                    }
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate(v, items).map_err(|e| format!("[{i}]: {e}"))?;
            }
        }
    }
    Ok(())
}

fn type_matches(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

fn schema(name: &str) -> Value {
    let text = match name {
        "mac" => include_str!("../schemas/mac.json"),
        "quantize" => include_str!("../schemas/quantize.json"),
        "execute" => include_str!("../schemas/execute.json"),
        "sim_report" => include_str!("../schemas/sim_report.json"),
        "verify" => include_str!("../schemas/verify.json"),
        "structure" => include_str!("../schemas/structure.json"),
        _ => panic!("unknown schema {name}"),
    };
    serde_json::from_str(text).expect("schema parses")
}

fn assert_valid(value: &Value, name: &str) {
    if let Err(e) = validate(value, &schema(name)) {
        panic!("{name} schema violation: {e}\nvalue: {value:#}");
    }
}

#[test]
fn validator_rejects_what_it_should() {
    let s: Value = serde_json::from_str(
        r#"{"type":"object","required":["a"],"properties":{"a":{"type":"integer"}},"additionalProperties":false}"#,
    )
    .unwrap();
    assert!(validate(&serde_json::json!({"a": 1}), &s).is_ok());
    assert!(validate(&serde_json::json!({}), &s).is_err());
    assert!(validate(&serde_json::json!({"a": "x"}), &s).is_err());
    assert!(validate(&serde_json::json!({"a": 1, "b": 2}), &s).is_err());
    assert!(validate(&serde_json::json!([1]), &s).is_err());
}

#[test]
fn mac_json_is_schema_stable() {
    let doc = run_json(&["mac", "--mode", "int8", "--x", "1,2,3,4", "--w", "1,1,1,1", "--json"]);
    assert_valid(&doc, "mac");
    assert!(doc["e_max"].is_i64());

    // All products zero: e_max has no defined value and rides as null.
    let doc = run_json(&["mac", "--mode", "int8", "--x", "0,0,0,0", "--w", "1,1,1,1", "--json"]);
    assert_valid(&doc, "mac");
    assert!(doc["e_max"].is_null());

    let doc = run_json(&[
        "mac", "--mode", "bf16", "--x", "1,2,3,4", "--w", "0.5,0.5,0.5,0.5", "--json",
    ]);
    assert_valid(&doc, "mac");
    assert!(doc["e_max"].is_i64());
}

#[test]
fn quantize_json_is_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    std::fs::write(&input, "1.5,-2.25,3,0\n").unwrap();
    let out = dir.path().join("v.jkt");
    let doc = run_json(&[
        "quantize",
        "--in",
        input.to_str().unwrap(),
        "--format",
        "bf16",
        "--out",
        out.to_str().unwrap(),
        "--json",
    ]);
    assert_valid(&doc, "quantize");
}

#[test]
fn gemm_json_and_report_are_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    std::fs::write(&input, "1,2,3,4\n").unwrap();
    let jkt = dir.path().join("v.jkt");
    run_json(&[
        "quantize",
        "--in",
        input.to_str().unwrap(),
        "--format",
        "int8",
        "--out",
        jkt.to_str().unwrap(),
        "--json",
    ]);
    let out = dir.path().join("c.jkt");
    let doc = run_json(&[
        "gemm",
        "--a",
        jkt.to_str().unwrap(),
        "--b-t",
        jkt.to_str().unwrap(),
        "--mode",
        "int8",
        "--out",
        out.to_str().unwrap(),
        "--json",
    ]);
    assert_valid(&doc, "execute");
    assert_valid(&doc["report"], "sim_report");
}

#[test]
fn simulate_json_is_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("w.json");
    std::fs::write(
        &spec,
        r#"{"mode": "bf16", "kind": "GEMM", "m": 64, "n": 64, "k": 64}"#,
    )
    .unwrap();
    let doc = run_json(&["simulate", "--workload", spec.to_str().unwrap(), "--json"]);
    assert_valid(&doc, "sim_report");
}

#[test]
fn verify_json_is_schema_stable() {
    let doc = run_json(&["verify", "--suite", "all", "--trials", "50", "--json"]);
    assert_valid(&doc, "verify");
    assert_eq!(doc.as_array().unwrap().len(), 6);
}

#[test]
fn report_json_is_schema_stable() {
    let doc = run_json(&["report", "--structure", "--grouping", "grouped", "--lanes", "4"]);
    assert_valid(&doc, "structure");
    let doc = run_json(&["report", "--structure", "--grouping", "ungrouped", "--lanes", "4"]);
    assert_valid(&doc, "structure");
}

/// The bundled schemas themselves must stay well-formed for this harness.
#[test]
fn schemas_directory_is_covered() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")).unwrap()
    {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let _ = schema(&name);
    }
}
