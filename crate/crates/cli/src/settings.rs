//! Run settings: a flat JSON config file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

/// Keys accepted in config files, matching the flag names.
pub const KEYS: &[&str] = &[
    "kernel",
    "n",
    "m",
    "c",
    "j",
    "h",
    "box",
    "eps",
    "t",
    "t-min",
    "t-max",
    "t-count",
    "N",
    "seed",
    "budget",
    "out",
    "scenario",
    "samples",
    "slot",
    "set",
    "targets",
    "allow-unbounded",
];

/// Settings as raw strings; list-valued keys hold several entries.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, Vec<String>>,
}

impl Settings {
    /// Reads a flat JSON object. Underscores in keys are read as hyphens.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(map) = value else { bail!("config must be a JSON object") };
        let mut values = BTreeMap::new();
        for (key, v) in map {
            let key = key.replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                bail!("unknown config key `{key}`");
            }
            values.insert(key, flatten(&v)?);
        }
        Ok(Self { values })
    }

    /// Replaces the entries of `key` when the flag was given.
    pub fn overlay(&mut self, key: &str, flag: Option<String>) {
        if let Some(v) = flag {
            self.values.insert(key.to_string(), vec![v]);
        }
    }

    pub fn overlay_list(&mut self, key: &str, flags: Vec<String>) {
        if !flags.is_empty() {
            self.values.insert(key.to_string(), flags);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).and_then(|v| v.first()).map(String::as_str)
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.values.get(key).cloned().unwrap_or_default()
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |s| parse_real(s).with_context(|| format!("--{key}")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |s| s.trim().parse().map_err(|e| anyhow!("--{key}: {e}")))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        self.get(key).map_or(Ok(default), |s| {
            let v = parse_real(s).with_context(|| format!("--{key}"))?;
            if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
                bail!("--{key} must be a nonnegative integer, got {s}");
            }
            Ok(v as u64)
        })
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        self.get(key).map_or(Ok(default), |s| match s {
            "true" => Ok(true),
            "false" => Ok(false),
            other => bail!("--{key} must be true or false, got {other}"),
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.string_or("out", "czlab-out"))
    }
}

fn flatten(v: &Value) -> Result<Vec<String>> {
    Ok(match v {
        Value::String(s) => vec![s.clone()],
        Value::Number(n) => vec![n.to_string()],
        Value::Bool(b) => vec![b.to_string()],
        Value::Array(items) => {
            // Arrays of scalars for `box` and `N` join into one entry; arrays
            // of strings for `slot` and `set` stay separate.
            if items.iter().all(Value::is_number) {
                vec![items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")]
            } else {
                items.iter().map(flatten).collect::<Result<Vec<_>>>()?.into_iter().flatten().collect()
            }
        }
        other => bail!("unsupported config value {other}"),
    })
}

/// Reads `2^-8`, `2^(-8)` or a plain decimal.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if let Some(exp) = s.strip_prefix("2^") {
        let exp = exp.trim_start_matches('(').trim_end_matches(')');
        2f64.powi(exp.parse::<i32>().map_err(|e| anyhow!("bad exponent in `{s}`: {e}"))?)
    } else {
        s.parse::<f64>().map_err(|e| anyhow!("bad number `{s}`: {e}"))?
    };
    if !v.is_finite() {
        bail!("`{s}` is not finite");
    }
    Ok(v)
}
