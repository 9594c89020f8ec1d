//! Episode configuration from defaults plus JSON overrides.

use std::path::Path;

use offtersim_core::EpisodeConfig;
use serde_json::Value;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "OFFTERSIM_CONFIG";

/// Recursively merges `patch` into `base`. Objects merge key by key and every
/// key must already exist in `base`; anything else replaces. An object that
/// carries a `kind` tag replaces the target whole, so enum variants can switch.
pub fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) if !p.contains_key("kind") => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(CliError::Config(format!("unknown config key `{here}`"))),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

/// Applies a JSON override to `base`, then validates the result.
pub fn apply_overrides(base: &EpisodeConfig, patch: &Value) -> Result<EpisodeConfig, CliError> {
    let mut value = serde_json::to_value(base).map_err(|e| CliError::Config(e.to_string()))?;
    merge(&mut value, patch, "")?;
    let config: EpisodeConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn from_file(path: &Path) -> Result<EpisodeConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let patch: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    apply_overrides(&EpisodeConfig::default(), &patch)
}

/// Defaults, overridden by the file named in `OFFTERSIM_CONFIG` when set.
pub fn load() -> Result<EpisodeConfig, CliError> {
    match std::env::var_os(CONFIG_ENV) {
        Some(p) if !p.is_empty() => from_file(Path::new(&p)),
        _ => Ok(EpisodeConfig::default()),
    }
}
