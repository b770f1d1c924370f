use std::collections::BTreeSet;
use std::path::Path;

use quenched::config::ExperimentConfig;
use serde_json::Value;

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/config.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same(p, q)),
        _ => a == b,
    }
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn schema_properties_match_serialized_config() {
    let s = schema();
    let cfg = ExperimentConfig::from_json(
        r#"{ "family": { "kind": "u1", "tau": [[1, 0, 1, 0]] }, "bandwidth": 4, "fd_eps": 0.001 }"#,
    )
    .unwrap();
    let json: Value = serde_json::from_str(&cfg.to_json()).unwrap();
    assert_eq!(keys(&s["properties"]), keys(&json));
    assert_eq!(keys(&s["$defs"]["family"]["properties"]), keys(&json["family"]));
    assert_eq!(keys(&s["properties"]["sobolev"]["properties"]), keys(&json["sobolev"]));
    assert_eq!(
        keys(&s["properties"]["tolerances"]["properties"]),
        keys(&json["tolerances"])
    );
}

#[test]
fn schema_defaults_match_parser_defaults() {
    let s = schema();
    let cfg = ExperimentConfig::from_json(r#"{ "family": { "kind": "circle" }, "bandwidth": 4 }"#).unwrap();
    let json: Value = serde_json::from_str(&cfg.to_json()).unwrap();
    for section in ["tolerances", "sobolev"] {
        for (name, spec) in s["properties"][section]["properties"].as_object().unwrap() {
            assert!(same(&spec["default"], &json[section][name]), "{section}.{name}");
        }
    }
    for name in ["eps_grid", "fibers", "sample_grid", "fd_eps", "seed"] {
        assert!(same(&s["properties"][name]["default"], &json[name]), "{name}");
    }
    for name in ["degree", "order", "smoothness", "eps_max"] {
        assert!(
            same(
                &s["$defs"]["family"]["properties"][name]["default"],
                &json["family"][name]
            ),
            "{name}"
        );
    }
}
