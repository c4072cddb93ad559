//! Artifact writers. Every output file embeds the effective config hash and
//! seed (as a `#` header line in CSV, as fields in JSON), so identical runs
//! produce byte-identical files.

use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::CliError;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x1_0000_0000_01b3);
    }
    hash
}

/// Fingerprint of the effective configuration plus the command name. Output
/// location and already-resolved file paths are not part of the experiment,
/// so they are excluded: the same run into a different directory carries the
/// same hash.
pub fn config_hash(command: &str, config: &RunConfig) -> String {
    let mut normalized = config.clone();
    normalized.out_dir = PathBuf::new();
    normalized.devices_path = None;
    let mut bytes = command.as_bytes().to_vec();
    bytes.extend(serde_json::to_vec(&normalized).expect("config serializes"));
    format!("{:016x}", fnv1a64(&bytes))
}

pub struct OutputDir {
    dir: PathBuf,
    pub hash: String,
    pub seed: u64,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: String, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::config(format!("cannot create output dir {}: {e}", dir.display()))
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
            seed,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// CSV with the provenance header comment and a column header row.
    pub fn write_csv(
        &self,
        name: &str,
        columns: &str,
        rows: impl IntoIterator<Item = String>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut out = String::new();
        out.push_str(&format!("# config_hash={} seed={}\n", self.hash, self.seed));
        out.push_str(columns);
        out.push('\n');
        for row in rows {
            out.push_str(&row);
            out.push('\n');
        }
        fs::write(&path, out)
            .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Pretty JSON with `config_hash` and `seed` injected at the top level.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut doc = serde_json::to_value(value)
            .map_err(|e| CliError::internal(format!("serialization failed: {e}")))?;
        if let serde_json::Value::Object(map) = &mut doc {
            map.insert(
                "config_hash".to_string(),
                serde_json::Value::String(self.hash.clone()),
            );
            map.insert("seed".to_string(), serde_json::Value::from(self.seed));
        }
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::internal(format!("serialization failed: {e}")))?;
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Render an optional metric in nanoseconds with fixed precision.
pub fn opt_ns(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.6}", v * 1e9),
        None => String::new(),
    }
}

pub fn opt_num(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => String::new(),
    }
}

/// Write a waveform as `time_ns,<label>` CSV rows.
pub fn waveform_rows(
    w: &wavetune_core::signal::SampledWaveform,
) -> impl Iterator<Item = String> + '_ {
    (0..w.len()).map(move |k| format!("{:.5},{:.9e}", w.time_at(k) * 1e9, w.samples[k]))
}
