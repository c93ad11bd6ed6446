//! Config parsing and schema validation. Violations carry JSON-pointer
//! paths so a bad file can be fixed without guesswork.

use serde_json::Value;

#[derive(Debug)]
pub struct SchemaViolations(pub Vec<String>);

impl std::fmt::Display for SchemaViolations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "schema violations:")?;
        for v in &self.0 {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: String,
    pub preset: Option<String>,
    /// preset scalar parameter (kfp friction, catalogue depth, etc.)
    pub a: Option<f64>,
    pub p: Option<u64>,
    pub n: Option<u64>,
    pub chain: Option<ChainParams>,
    pub params: Option<CostParams>,
    pub system: Option<Value>,
    pub region: Option<Value>,
    pub degree: Option<u64>,
    pub grid_len: Option<u64>,
    pub grid_half_width: Option<f64>,
    pub nt: Option<u64>,
    pub t: Option<f64>,
    pub horizon: Option<f64>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ChainParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CostParams {
    pub c1: f64,
    pub c2: f64,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub t0: f64,
}

const COMMANDS: &[&str] = &[
    "analyze", "evolve", "dissipation", "spectral", "cost", "control", "chain",
];

const TOP_KEYS: &[&str] = &[
    "command", "preset", "a", "p", "n", "chain", "params", "system", "region",
    "degree", "grid_len", "grid_half_width", "nt", "t", "horizon", "t_max",
];

fn get_f64(obj: &serde_json::Map<String, Value>, key: &str, base: &str, errs: &mut Vec<String>) -> Option<f64> {
    match obj.get(key) {
        None => None,
        Some(v) => match v.as_f64() {
            Some(x) => Some(x),
            None => {
                errs.push(format!("{base}/{key}: expected a number"));
                None
            }
        },
    }
}

fn get_u64(obj: &serde_json::Map<String, Value>, key: &str, base: &str, errs: &mut Vec<String>) -> Option<u64> {
    match obj.get(key) {
        None => None,
        Some(v) => match v.as_u64() {
            Some(x) => Some(x),
            None => {
                errs.push(format!("{base}/{key}: expected a nonnegative integer"));
                None
            }
        },
    }
}

fn require_f64(obj: &serde_json::Map<String, Value>, key: &str, base: &str, errs: &mut Vec<String>) -> f64 {
    match get_f64(obj, key, base, errs) {
        Some(x) => x,
        None => {
            if !obj.contains_key(key) {
                errs.push(format!("{base}/{key}: missing required field"));
            }
            f64::NAN
        }
    }
}

/// Validates the top-level document; `cli_command` must agree with the
/// config's own command field.
pub fn parse_config(doc: &Value, cli_command: &str) -> Result<RunConfig, SchemaViolations> {
    let mut errs = Vec::new();
    let obj = match doc.as_object() {
        Some(o) => o,
        None => {
            return Err(SchemaViolations(vec!["/: expected a JSON object".into()]));
        }
    };
    for key in obj.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            errs.push(format!("/{key}: unknown key"));
        }
    }
    let command = match obj.get("command") {
        None => {
            errs.push("/command: missing required field".into());
            String::new()
        }
        Some(Value::String(s)) => {
            if !COMMANDS.contains(&s.as_str()) {
                errs.push(format!("/command: unknown command {s:?}"));
            } else if s != cli_command {
                errs.push(format!(
                    "/command: config says {s:?} but the {cli_command:?} command was invoked"
                ));
            }
            s.clone()
        }
        Some(_) => {
            errs.push("/command: expected a string".into());
            String::new()
        }
    };

    let preset = match obj.get("preset") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errs.push("/preset: expected a string".into());
            None
        }
    };

    let chain = match obj.get("chain") {
        None => None,
        Some(Value::Object(c)) => {
            for key in c.keys() {
                if !["a", "b", "c", "alpha", "alpha1", "alpha2"].contains(&key.as_str()) {
                    errs.push(format!("/chain/{key}: unknown key"));
                }
            }
            let cp = ChainParams {
                a: require_f64(c, "a", "/chain", &mut errs),
                b: require_f64(c, "b", "/chain", &mut errs),
                c: require_f64(c, "c", "/chain", &mut errs),
                alpha: require_f64(c, "alpha", "/chain", &mut errs),
                alpha1: require_f64(c, "alpha1", "/chain", &mut errs),
                alpha2: require_f64(c, "alpha2", "/chain", &mut errs),
            };
            Some(cp)
        }
        Some(_) => {
            errs.push("/chain: expected an object".into());
            None
        }
    };

    let params = match obj.get("params") {
        None => None,
        Some(Value::Object(c)) => {
            for key in c.keys() {
                if !["c1", "c2", "a", "b", "m", "t0"].contains(&key.as_str()) {
                    errs.push(format!("/params/{key}: unknown key"));
                }
            }
            let cp = CostParams {
                c1: require_f64(c, "c1", "/params", &mut errs),
                c2: require_f64(c, "c2", "/params", &mut errs),
                a: require_f64(c, "a", "/params", &mut errs),
                b: require_f64(c, "b", "/params", &mut errs),
                m: require_f64(c, "m", "/params", &mut errs),
                t0: require_f64(c, "t0", "/params", &mut errs),
            };
            if cp.a >= cp.b {
                errs.push("/params/a: must be smaller than /params/b".into());
            }
            Some(cp)
        }
        Some(_) => {
            errs.push("/params: expected an object".into());
            None
        }
    };

    let a = get_f64(obj, "a", "", &mut errs);
    let p = get_u64(obj, "p", "", &mut errs);
    let n = get_u64(obj, "n", "", &mut errs);
    let degree = get_u64(obj, "degree", "", &mut errs);
    let grid_len = get_u64(obj, "grid_len", "", &mut errs);
    let grid_half_width = get_f64(obj, "grid_half_width", "", &mut errs);
    let nt = get_u64(obj, "nt", "", &mut errs);
    let t = get_f64(obj, "t", "", &mut errs);
    let horizon = get_f64(obj, "horizon", "", &mut errs);
    let t_max = get_f64(obj, "t_max", "", &mut errs);

    for (key, val, lo) in [
        ("t", t, 0.0),
        ("horizon", horizon, 0.0),
        ("t_max", t_max, 0.0),
        ("grid_half_width", grid_half_width, 0.0),
    ] {
        if let Some(v) = val {
            if !(v > lo) {
                errs.push(format!("/{key}: must be positive"));
            }
        }
    }

    if !errs.is_empty() {
        return Err(SchemaViolations(errs));
    }
    Ok(RunConfig {
        command,
        preset,
        a,
        p,
        n,
        chain,
        params,
        system: obj.get("system").cloned(),
        region: obj.get("region").cloned(),
        degree,
        grid_len,
        grid_half_width,
        nt,
        t,
        horizon,
        t_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn accepts_preset_analysis() {
        let doc = json!({"command": "analyze", "preset": "kfp", "a": 1.0});
        let cfg = parse_config(&doc, "analyze").unwrap();
        assert_eq!(cfg.preset.as_deref(), Some("kfp"));
        assert_eq!(cfg.a, Some(1.0));
    }

    #[test]
    fn missing_command_pointer() {
        let doc = json!({"preset": "heat"});
        let err = parse_config(&doc, "analyze").unwrap_err();
        assert!(err.0.iter().any(|e| e.starts_with("/command")));
    }

    #[test]
    fn unknown_key_pointer() {
        let doc = json!({"command": "analyze", "preset": "heat", "bogus": 3});
        let err = parse_config(&doc, "analyze").unwrap_err();
        assert!(err.0.iter().any(|e| e.starts_with("/bogus")));
    }

    #[test]
    fn cost_params_valid() {
        let doc = json!({"command": "cost",
            "params": {"a": 0.5, "b": 1.0, "m": 3, "c1": 1, "c2": 0.5, "t0": 1}});
        let cfg = parse_config(&doc, "cost").unwrap();
        let p = cfg.params.unwrap();
        assert_eq!(p.a * p.m / (p.b - p.a), 3.0);
    }
}
