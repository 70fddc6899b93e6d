//! Run configuration assembly: JSON config file merged with dotted-key
//! command-line overrides, rejecting unknown keys.

use meshsplat::train::TrainConfig;
use meshsplat::{Error, Result};
use serde_json::Value;
use std::path::Path;

/// `key=value` override. The value is parsed as JSON when possible so
/// numbers and booleans keep their types; anything else stays a string.
fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
    if key.is_empty() {
        return Err(Error::Config(format!("--set has an empty key: {s:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn set_dotted(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = root;
    for (i, part) in path.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!("--set key {} crosses a non-object", path.join(".")))
        })?;
        if i + 1 == path.len() {
            map.insert(part.clone(), value);
            return Ok(());
        }
        node = map.entry(part.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path is never empty")
}

/// Config file (optional) + `--set` overrides -> validated TrainConfig.
/// Unknown keys anywhere are rejected by the typed deserialization.
pub fn assemble(config_path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut root = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| Error::format(p, format!("config: {e}")))?;
            if !v.is_object() {
                return Err(Error::format(p, "config must be a JSON object"));
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    for s in overrides {
        let (path, value) = parse_override(s)?;
        set_dotted(&mut root, &path, value)?;
    }
    serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))
}

/// Writes the effective configuration next to the run outputs.
pub fn echo(cfg: &TrainConfig, out_dir: &Path) -> Result<()> {
    let path = out_dir.join("run_config.json");
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields_with_native_types() {
        let cfg = assemble(
            None,
            &[
                "total_iters=77".into(),
                "weights.lambda_nc=0.25".into(),
                "seed=9".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.total_iters, 77);
        assert_eq!(cfg.weights.lambda_nc, 0.25);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.prune_period, 500, "untouched fields keep defaults");
    }

    #[test]
    fn unknown_keys_and_malformed_sets_are_rejected() {
        assert!(assemble(None, &["totl_iters=5".into()]).is_err(), "top-level typo");
        assert!(assemble(None, &["weights.lambda_oops=1".into()]).is_err(), "nested typo");
        assert!(assemble(None, &["no_equals_sign".into()]).is_err());
        assert!(assemble(None, &["total_iters.x=3".into()]).is_err(), "scalar crossed");
    }

    #[test]
    fn file_then_flags_order_lets_flags_win() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("cfg.json");
        std::fs::write(&p, "{\"total_iters\": 10, \"seed\": 3}").unwrap();
        let cfg = assemble(Some(&p), &["total_iters=20".into()]).unwrap();
        assert_eq!(cfg.total_iters, 20, "flag overrides file");
        assert_eq!(cfg.seed, 3, "file survives where not overridden");
    }
}
