//! Loading, overriding and echoing [`ScenarioConfig`].
//!
//! Files are TOML (which also covers flat `key = value` text) or JSON by
//! extension. Overrides use dotted paths, e.g. `--set wifi.cw_min=32`.

use std::fs;
use std::path::Path;

use lteu_core::scenario::ConfigError;
use lteu_core::ScenarioConfig;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigIoError {
    #[error("reading {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("override `{0}` is not of the form key=value")]
    MalformedOverride(String),
    #[error("override `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

pub fn load(path: Option<&Path>) -> Result<ScenarioConfig, ConfigIoError> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ConfigIoError::Read { path: shown.clone(), source })?;
    let parse_err = |message: String| ConfigIoError::Parse { path: shown.clone(), message };
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        let table: toml::Table = toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        serde_json::to_value(table).map_err(|e| parse_err(e.to_string()))?
    };
    let reference = serde_json::to_value(ScenarioConfig::default()).expect("config serializes");
    check_known(&value, &reference, "")?;
    let config: ScenarioConfig = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn check_known(value: &Value, reference: &Value, prefix: &str) -> Result<(), ConfigIoError> {
    let (Value::Object(map), Value::Object(known)) = (value, reference) else {
        return Ok(());
    };
    for (key, v) in map {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match known.get(key) {
            Some(r) => check_known(v, r, &path)?,
            None => return Err(ConfigIoError::UnknownKey(path)),
        }
    }
    Ok(())
}

/// Applies `key=value` overrides in order. Values are read as JSON
/// literals when they parse as one (numbers, booleans, objects) and as
/// strings otherwise.
pub fn apply_overrides(config: ScenarioConfig, overrides: &[String]) -> Result<ScenarioConfig, ConfigIoError> {
    if overrides.is_empty() {
        return Ok(config);
    }
    let mut value = serde_json::to_value(&config).expect("config serializes");
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| ConfigIoError::MalformedOverride(o.clone()))?;
        let key = key.trim();
        let raw = raw.trim();
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| ConfigIoError::UnknownKey(key.to_string()))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    }
    let config: ScenarioConfig = serde_json::from_value(value)
        .map_err(|e| ConfigIoError::BadValue { key: overrides.join(" "), message: e.to_string() })?;
    config.validate()?;
    Ok(config)
}

/// The effective configuration as TOML, loadable again with [`load`].
pub fn echo(config: &ScenarioConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let c = apply_overrides(
            ScenarioConfig::default(),
            &["n_sbs=2".into(), "wifi.cw_min = 32".into(), "epsilon=0.5".into()],
        )
        .unwrap();
        assert_eq!(c.n_sbs, 2);
        assert_eq!(c.wifi.cw_min, 32);
        assert_eq!(c.epsilon, 0.5);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let d = ScenarioConfig::default;
        assert!(matches!(apply_overrides(d(), &["nope=1".into()]), Err(ConfigIoError::UnknownKey(_))));
        assert!(matches!(apply_overrides(d(), &["n_sbs".into()]), Err(ConfigIoError::MalformedOverride(_))));
        assert!(matches!(apply_overrides(d(), &["n_sbs=abc".into()]), Err(ConfigIoError::BadValue { .. })));
        assert!(matches!(apply_overrides(d(), &["epsilon=1.5".into()]), Err(ConfigIoError::Invalid(_))));
    }

    #[test]
    fn echo_round_trips() {
        let c = apply_overrides(ScenarioConfig::default(), &["n_users=7".into()]).unwrap();
        let text = echo(&c);
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
