//! Run configuration: a `key = value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};

/// Every key a configuration file may set. Keys mirror flag names with
/// dashes replaced by underscores.
pub const KEYS: &[&str] = &[
    "audio_dir",
    "batch_size",
    "clip",
    "duration",
    "epochs",
    "features",
    "history",
    "index",
    "k",
    "labels",
    "lambda",
    "learning_rate",
    "manifest",
    "mapping",
    "model",
    "n",
    "out",
    "out_dir",
    "plan",
    "precision",
    "predictions",
    "ratings",
    "reference_rater",
    "review",
    "seed",
    "speakers",
    "weights",
];

pub const SEED_ENV: &str = "GRBAS_SEED";

/// A bad flag, key or value. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    command: &'static str,
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| usage(format!("{origin}:{}: expected key = value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(format!("{origin}:{}: unknown key {key:?}", i + 1)));
        }
        if values.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(usage(format!("{origin}:{}: {key} set twice", i + 1)));
        }
    }
    Ok(values)
}

impl RunConfig {
    /// File values, then flags that were given, then the seed environment variable.
    pub fn load(
        command: &'static str,
        file: Option<&Path>,
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self> {
        let mut values = match file {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                parse_config(&text, &path.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for (key, value) in flags {
            debug_assert!(KEYS.contains(&key), "flag {key} missing from KEYS");
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        if !values.contains_key("seed") {
            if let Ok(v) = std::env::var(SEED_ENV) {
                values.insert("seed".into(), v);
            }
        }
        Ok(Self { command, values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.values.get(key).map(|v| v.parse().map_err(|e| usage(format!("invalid {key} {v:?}: {e}")))).transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| {
            let extra = if key == "seed" { format!(" (or set {SEED_ENV})") } else { String::new() };
            usage(format!("{}: missing --{}{extra}", self.command, key.replace('_', "-")))
        })
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.require(key)
    }

    pub fn opt_path(&self, key: &str) -> Result<Option<PathBuf>> {
        self.get(key)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# effective configuration for `{}`\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Writes the effective configuration to `<dir>/<command>.config.txt`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.config.txt", self.command));
        fs::write(&path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }

    /// As [`Self::echo`], into the directory holding `file`.
    pub fn echo_beside(&self, file: &Path) -> Result<()> {
        let dir = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        self.echo(dir)
    }
}
