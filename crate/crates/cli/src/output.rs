//! Output bundles: data files, graymaps with sidecars, manifests and the
//! solution cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{sha256_hex, RunConfig};
use crate::CliError;

/// How graymap intensities are derived from values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrayScale {
    Linear,
    /// `log(1 + v / vmax · 1e4)`, for strongly peaked measures.
    Log,
}

/// Writes into one output directory and remembers what it wrote.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
    pub notes: Vec<String>,
    pub failures: Vec<String>,
    pub cached: bool,
    /// Explicit constants the run relied on, recorded in the manifest.
    pub constants: serde_json::Map<String, Value>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
            notes: Vec::new(),
            failures: Vec::new(),
            cached: false,
            constants: serde_json::Map::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// A binary graymap of a `width × height` raster (row 0 at the top)
    /// plus `<name>.pgm.json` recording the value range and scale.
    pub fn graymap(&mut self, name: &str, width: usize, height: usize, values: &[f64], scale: GrayScale, extra: Value) -> Result<(), CliError> {
        let (bytes, lo, hi) = encode_pgm(width, height, values, scale);
        self.write(&format!("{name}.pgm"), &bytes)?;
        let sidecar = json!({
            "width": width,
            "height": height,
            "min": lo,
            "max": hi,
            "scale": scale,
            "orientation": "row 0 is the largest imaginary part",
            "grid": extra,
        });
        self.json(&format!("{name}.pgm.json"), &sidecar)
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Writes `manifest.json`; the data files come first so the manifest
    /// lists them all.
    pub fn finish(mut self, cfg: &RunConfig) -> Result<bool, CliError> {
        let manifest = json!({
            "command": cfg.command,
            "config": cfg.values,
            "config_hash": cfg.hash(),
            "versions": {
                "pcfdyn": env!("CARGO_PKG_VERSION"),
                "solver": pcf_core::pcf_solver::SOLVER_VERSION,
            },
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "cached": self.cached,
            "status": if self.is_partial() { "partial" } else { "ok" },
            "failures": self.failures,
            "notes": self.notes,
            "constants": self.constants,
            "files": self.files,
        });
        let partial = self.is_partial();
        self.json("manifest.json", &manifest)?;
        Ok(partial)
    }
}

/// `P5` graymap bytes with the value range used for scaling. Non-finite
/// values map to black.
pub fn encode_pgm(width: usize, height: usize, values: &[f64], scale: GrayScale) -> (Vec<u8>, f64, f64) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let level = |v: f64| -> u8 {
        if !v.is_finite() || hi <= lo {
            return 0;
        }
        let t = match scale {
            GrayScale::Linear => (v - lo) / (hi - lo),
            GrayScale::Log => (1.0 + (v - lo) / (hi - lo) * 1e4).ln() / (1.0 + 1e4f64).ln(),
        };
        (t.clamp(0.0, 1.0) * 255.0).round() as u8
    };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| level(*v)));
    (out, lo, hi)
}

/// A raster of a planar grid stored first-axis fastest, flipped so that
/// row 0 is the top (largest second coordinate).
pub fn raster_rows(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for row in (0..height).rev() {
        out.extend_from_slice(&values[row * width..(row + 1) * width]);
    }
    out
}

/// Content-addressed cache of serialized results.
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Cache { dir: dir.to_path_buf() })
    }

    pub fn key(parts: &[&str]) -> String {
        sha256_hex(parts.join("\u{1f}").as_bytes())
    }

    pub fn load(&self, key: &str) -> Option<String> {
        fs::read_to_string(self.dir.join(format!("{key}.json"))).ok()
    }

    pub fn store(&self, key: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(format!("{key}.json"));
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
