//! Output files: each CSV starts with a `# tfconc <version> config=<hash>`
//! comment and each JSON document carries the same data under `meta`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// First 16 hex digits of the SHA-256 of the canonical configuration.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
}

impl OutputDir {
    pub fn create(dir: &Path, canonical: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), hash: config_hash(canonical) })
    }

    pub fn header(&self) -> String {
        format!("# tfconc {VERSION} config={}", self.hash)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.path(name);
        let run = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "{}", self.header())?;
            body(&mut w)?;
            w.flush()
        };
        run().map_err(|e| CliError::io(&path, e))
    }

    pub fn binary(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.path(name);
        let run = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            body(&mut w)?;
            w.flush()
        };
        run().map_err(|e| CliError::io(&path, e))
    }

    pub fn json(&self, name: &str, mut value: Value) -> Result<(), CliError> {
        if let Value::Object(map) = &mut value {
            map.insert("meta".into(), json!({ "tool": "tfconc", "version": VERSION, "config": self.hash }));
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&value).expect("json values serialize");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_prefix() {
        let h = config_hash("command=spectrum\n");
        assert_eq!(h.len(), 16);
        assert_eq!(h, config_hash("command=spectrum\n"));
        assert_ne!(h, config_hash("command=decay\n"));
    }
}
