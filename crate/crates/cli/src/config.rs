//! `key = value` run configuration files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every key a configuration file may set. Keys mirror the long flag names.
pub const KNOWN_KEYS: &[&str] = &[
    "min-df",
    "stopwords",
    "val-fraction",
    "seed",
    "window",
    "char-ngrams",
    "word-ngrams",
    "ngram-min-freq",
    "sim-threshold",
    "no-grams",
    "no-chargrams",
    "no-doc-sim",
    "model",
    "hidden-dim",
    "layers",
    "heads",
    "head-dim",
    "edge-dim",
    "dropout",
    "no-attention-dropout",
    "leaky-slope",
    "lr",
    "epochs",
    "patience",
    "runs",
    "precision",
    "threads",
    "deterministic",
    "lo",
    "hi",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("line {}: key {key:?} set twice", n + 1)));
            }
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: invalid value {v:?}: {e}"))),
        }
    }

    /// Switches: present on the command line wins, otherwise the file decides.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.resolve_opt::<bool>(None, key)?.unwrap_or(false))
    }
}

/// `MIN:MAX` n-gram range, or `none` to disable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range(pub Option<(usize, usize)>);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Range(None));
        }
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected MIN:MAX or none, got {s:?}"))?;
        let a = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
        let b = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
        if a > b {
            return Err(format!("range {a}:{b} is empty"));
        }
        Ok(Range(Some((a, b))))
    }
}

/// A real threshold, or `none` to disable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub Option<f64>);

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Threshold(None));
        }
        s.parse::<f64>().map(|v| Threshold(Some(v))).map_err(|e| e.to_string())
    }
}
