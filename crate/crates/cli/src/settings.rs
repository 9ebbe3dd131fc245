//! Layered key=value settings and run manifests.
//!
//! Config files and manifests share one format: `key=value` lines, `#`
//! comments and blank lines ignored. Keys are the long flag names with `_`
//! for `-`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn parse_key_values(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::usage(format!("{origin}:{}: expected key=value, got `{line}`", n + 1)));
        };
        let key = k.trim().replace('-', "_");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::usage(format!("{origin}:{}: `{key}` given twice", n + 1)));
        }
    }
    Ok(out)
}

/// Flags over config file over defaults.
pub struct Settings {
    flags: BTreeMap<String, String>,
    file: BTreeMap<String, String>,
    origin: String,
}

impl Settings {
    /// `known` lists every key the command accepts; anything else in the
    /// config file is rejected.
    pub fn new(
        command: &'static str,
        config: Option<&Path>,
        flags: Vec<(&str, Option<String>)>,
        known: &[&str],
    ) -> Result<Self, CliError> {
        let (mut file, origin) = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                (parse_key_values(&text, &p.display().to_string())?, p.display().to_string())
            }
            None => (BTreeMap::new(), String::new()),
        };
        if let Some(c) = file.remove("command") {
            if c != command {
                return Err(CliError::usage(format!("{origin} is a `{c}` manifest, not `{command}`")));
            }
        }
        if let Some(v) = file.remove("version") {
            if v != VERSION {
                log::warn!("{origin} was written by version {v}, this is {VERSION}");
            }
        }
        if let Some(k) = file.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(CliError::usage(format!("{origin}: unknown key `{k}` for `{command}`")));
        }
        let flags = flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect();
        Ok(Self { flags, file, origin })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.flags.get(key).or_else(|| self.file.get(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e| {
                let from = if self.flags.contains_key(key) { "flag".to_string() } else { self.origin.clone() };
                CliError::usage(format!("bad value `{s}` for `{key}` ({from}): {e}"))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| CliError::missing(key))
    }
}

/// Fully resolved inputs of one run, written next to its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self { command: command.to_string(), entries: Vec::new() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn set_path(&mut self, key: &str, path: &Path) -> &mut Self {
        self.set(key, path.display())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# lumina run manifest; replay with `lumina <command> --config <this file>`\n");
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "version={VERSION}");
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.manifest", self.command));
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}
