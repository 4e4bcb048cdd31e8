//! Run configuration: one defaults table, then a `key = value` file, then
//! command-line flags (flags win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every tunable with its default. `auto` resolves per degree.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("degree", "2"),
    ("region", "auto"),
    ("res", "auto"),
    ("tol", "1e-10"),
    ("budget", "auto"),
    ("seed", "0"),
    ("threads", "0"),
    ("out", "out"),
    ("cache", ""),
    ("m", "3"),
    ("n", "0"),
    ("w", "0"),
    ("c", ""),
    ("a", "0"),
    ("period", "1"),
    ("qmax", "8"),
    ("mode", "symbolic"),
    ("steps", "16"),
    ("smoothing", "auto"),
    ("depth", "5"),
    ("slice", "false"),
    ("schedule", "centers:6..9"),
    ("classify_tol", "1e-7"),
];

/// Keys that only steer where and how a run executes, not what it computes.
const NON_SEMANTIC: &[&str] = &["out", "cache", "threads"];

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key = value", lineno + 1)))?;
        let k = k.trim().replace('-', "_");
        if !DEFAULTS.iter().any(|(d, _)| *d == k) {
            return Err(CliError::config(format!("config line {}: unknown key '{k}'", lineno + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    pub fn build(command: &str, file: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            values.extend(parse_config_file(&text)?);
        }
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), v.clone());
            }
        }
        let mut cfg = RunConfig { command: command.to_string(), values };
        cfg.resolve_auto()?;
        Ok(cfg)
    }

    fn resolve_auto(&mut self) -> Result<(), CliError> {
        let d = self.degree()?;
        let cmd = self.command.as_str();
        let full_d3 = d == 3 && cmd == "measure-bif" && !self.flag("slice")?;
        let pick = |key: &str| -> &'static str {
            match key {
                "region" if full_d3 => "4,2",
                "region" => "2.5",
                "res" if full_d3 => "20",
                "res" if cmd == "equidist" => "1024",
                "res" => "256",
                "budget" if cmd == "angles" => "50000000",
                "budget" if cmd == "multiplier-curve" || cmd == "continue" => "20000",
                "budget" => "5000",
                "smoothing" if full_d3 => "0.3",
                "smoothing" => "0",
                _ => "",
            }
        };
        for key in ["region", "res", "budget", "smoothing"] {
            if self.values[key] == "auto" {
                self.values.insert(key.into(), pick(key).into());
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.raw(key)
            .parse()
            .map_err(|_| CliError::config(format!("{key}: cannot parse '{}'", self.raw(key))))
    }

    pub fn degree(&self) -> Result<usize, CliError> {
        let d: usize = self.parsed("degree")?;
        if d < 2 {
            return Err(CliError::config(format!("degree must be at least 2, got {d}")));
        }
        Ok(d)
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parsed(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let x: f64 = self.parsed(key)?;
        if !x.is_finite() {
            return Err(CliError::config(format!("{key} must be finite")));
        }
        Ok(x)
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        self.parsed(key)
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        split_list(self.raw(key))
            .map(|s| s.parse().map_err(|_| CliError::config(format!("{key}: cannot parse '{s}'"))))
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        split_list(self.raw(key))
            .map(|s| s.parse().map_err(|_| CliError::config(format!("{key}: cannot parse '{s}'"))))
            .collect()
    }

    pub fn complex_list(&self, key: &str) -> Result<Vec<Complex64>, CliError> {
        split_list(self.raw(key)).map(|s| parse_complex(key, s)).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        let c = self.raw("cache");
        (!c.is_empty()).then(|| PathBuf::from(c))
    }

    /// The semantic part of the configuration, as sorted `key=value` lines.
    fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            if !NON_SEMANTIC.contains(&k.as_str()) {
                s.push_str(&format!("{k}={v}\n"));
            }
        }
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

pub fn parse_complex(key: &str, s: &str) -> Result<Complex64, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    Complex64::from_str(&t).map_err(|_| CliError::config(format!("{key}: cannot parse complex number '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# sample\nres = 64\ntol=1e-8  # tight\n").unwrap();
        let cfg = RunConfig::build("green-grid", Some(&path), &[("res", Some("32".into())), ("tol", None)]).unwrap();
        assert_eq!(cfg.raw("res"), "32");
        assert_eq!(cfg.raw("tol"), "1e-8");
        assert_eq!(cfg.raw("region"), "2.5");
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        assert!(parse_config_file("colour = red").is_err());
        assert!(parse_config_file("res 64").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::build("pcf", None, &[("out", Some("x".into()))]).unwrap();
        let b = RunConfig::build("pcf", None, &[("out", Some("y".into()))]).unwrap();
        let c = RunConfig::build("pcf", None, &[("m", Some("4".into()))]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn complex_forms() {
        assert_eq!(parse_complex("w", "0.6+0.2i").unwrap(), Complex64::new(0.6, 0.2));
        assert_eq!(parse_complex("w", "-1.5i").unwrap(), Complex64::new(0.0, -1.5));
        assert_eq!(parse_complex("w", "2").unwrap(), Complex64::new(2.0, 0.0));
        assert!(parse_complex("w", "two").is_err());
    }
}
