//! Flat JSON config files: one key per flag, explicit flags win.

use std::path::Path;

use fansite_core::{CoreError, Result};

#[derive(Debug, Default)]
pub struct FileConfig {
    map: serde_json::Map<String, serde_json::Value>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
        path: p.clone(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CoreError::MalformedFile {
            path: p.clone(),
            reason: e.to_string(),
        })?;
    match value {
        serde_json::Value::Object(map) => Ok(FileConfig { map }),
        _ => Err(CoreError::MalformedFile {
            path: p,
            reason: "config must be a flat JSON object".into(),
        }),
    }
}

impl FileConfig {
    /// CLI value if given, else the config-file value, else the default.
    pub fn resolve<T: serde::de::DeserializeOwned>(
        &self,
        cli: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default),
            Some(raw) => {
                serde_json::from_value(raw.clone()).map_err(|e| CoreError::InvalidParameter {
                    name: "config",
                    reason: format!("key {key:?}: {e}"),
                })
            }
        }
    }

    /// Like [`resolve`](FileConfig::resolve) but without a default.
    pub fn resolve_required<T: serde::de::DeserializeOwned>(
        &self,
        cli: Option<T>,
        key: &str,
    ) -> Result<T> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            Some(raw) => {
                serde_json::from_value(raw.clone()).map_err(|e| CoreError::InvalidParameter {
                    name: "config",
                    reason: format!("key {key:?}: {e}"),
                })
            }
            None => Err(CoreError::InvalidParameter {
                name: "config",
                reason: format!("missing required value {key:?} (flag or config file)"),
            }),
        }
    }
}
