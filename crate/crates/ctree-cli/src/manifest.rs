//! Run manifests: a small key,value CSV written next to every output,
//! recording the command, tool version, inputs with sizes, configuration,
//! and wall time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::CliResult;

pub struct ManifestBuilder {
    entries: Vec<(String, String)>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        let entries = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ];
        Self {
            entries,
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        let bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        self.entries.push((
            format!("input:{}", path.display()),
            format!("{bytes} bytes"),
        ));
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.entries
            .push(("output".to_string(), path.display().to_string()));
        self
    }

    /// Write `<output>.manifest.csv`.
    pub fn write_for(&self, output: &Path) -> CliResult {
        let mut path = PathBuf::from(output);
        let name = format!(
            "{}.manifest.csv",
            path.file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_else(|| "out".to_string())
        );
        path.set_file_name(name);
        self.write_to(&path)
    }

    /// Write to an explicit path (used for directory-level runs).
    pub fn write_to(&self, path: &Path) -> CliResult {
        let mut out = String::from("key,value\n");
        for (k, v) in &self.entries {
            out.push_str(&format!("{k},{v}\n"));
        }
        out.push_str(&format!(
            "duration_ms,{}\n",
            self.started.elapsed().as_millis()
        ));
        std::fs::write(path, out)?;
        Ok(())
    }
}
