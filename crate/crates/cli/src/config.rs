//! Parameter records: `key = value` config files, manifests and flag merging.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Keys accepted in config files, spelled like the flags.
pub const KEYS: [&str; 9] = ["N", "scan-N", "L", "gamma", "samples", "a", "p0", "seed", "out"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{0}")]
    Value(String),
}

/// Inclusive `N` range with a step, written `a:b` or `a:b:step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl ScanRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step).collect()
    }
}

impl FromStr for ScanRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(format!("expected a:b or a:b:step, got {s:?}"));
        }
        let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("bad number {p:?} in {s:?}: {e}"));
        let start = num(parts[0])?;
        let end = num(parts[1])?;
        let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
        if start == 0 || end < start || step == 0 {
            return Err(format!("scan range {s:?} must satisfy 1 <= a <= b and step >= 1"));
        }
        Ok(Self { start, end, step })
    }
}

impl fmt::Display for ScanRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.step == 1 {
            write!(f, "{}:{}", self.start, self.end)
        } else {
            write!(f, "{}:{}:{}", self.start, self.end, self.step)
        }
    }
}

/// Every parameter the runner knows, unset ones as `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    pub n: Option<usize>,
    pub scan_n: Option<ScanRange>,
    pub l: Option<usize>,
    pub gamma: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub a: Option<f64>,
    pub p0: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Params {
    /// Field-wise merge; values in `self` win.
    pub fn or(self, other: Params) -> Params {
        Params {
            n: self.n.or(other.n),
            scan_n: self.scan_n.or(other.scan_n),
            l: self.l.or(other.l),
            gamma: self.gamma.or(other.gamma),
            samples: self.samples.or(other.samples),
            a: self.a.or(other.a),
            p0: self.p0.or(other.p0),
            seed: self.seed.or(other.seed),
            out: self.out.or(other.out),
        }
    }

    /// Keys holding a value.
    pub fn set_keys(&self) -> BTreeSet<&'static str> {
        let flags = [
            self.n.is_some(),
            self.scan_n.is_some(),
            self.l.is_some(),
            self.gamma.is_some(),
            self.samples.is_some(),
            self.a.is_some(),
            self.p0.is_some(),
            self.seed.is_some(),
            self.out.is_some(),
        ];
        KEYS.iter().zip(flags).filter(|(_, set)| *set).map(|(k, _)| *k).collect()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse().map_err(|e| format!("cannot parse {v:?}: {e}"))
        }
        match key {
            "N" => self.n = Some(parse(value)?),
            "scan-N" => self.scan_n = Some(value.parse()?),
            "L" => self.l = Some(parse(value)?),
            "gamma" => self.gamma = Some(value.split(',').map(|g| parse(g.trim())).collect::<Result<_, _>>()?),
            "samples" => self.samples = Some(parse(value)?),
            "a" => self.a = Some(parse(value)?),
            "p0" => self.p0 = Some(parse(value)?),
            "seed" => self.seed = Some(parse(value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key {key:?} (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// unknown and repeated keys are errors.
pub fn parse_config(text: &str, path: &str) -> Result<Params, ConfigError> {
    let mut params = Params::default();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ConfigError::Line { path: path.to_string(), line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(err(format!("expected `key = value`, got {content:?}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        params.set(key, value).map_err(err)?;
    }
    Ok(params)
}

/// Reads a config file, or the `params` object of a run manifest when the
/// file is JSON.
pub fn load_config(path: &Path) -> Result<Params, ConfigError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File { path: shown.clone(), message: e.to_string() })?;
    if text.trim_start().starts_with('{') {
        return params_from_manifest(&text, &shown);
    }
    parse_config(&text, &shown)
}

fn params_from_manifest(text: &str, path: &str) -> Result<Params, ConfigError> {
    let file_err = |message: String| ConfigError::File { path: path.to_string(), message };
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| file_err(format!("invalid JSON: {e}")))?;
    let obj = v.get("params").and_then(|p| p.as_object()).ok_or_else(|| file_err("manifest has no params object".into()))?;
    let mut params = Params::default();
    for (key, value) in obj {
        let s = match value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Array(items) => items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            other => other.to_string(),
        };
        params.set(key, &s).map_err(|m| file_err(format!("param {key}: {m}")))?;
    }
    Ok(params)
}
