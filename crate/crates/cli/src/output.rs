use std::cell::RefCell;
use std::path::{Path, PathBuf};

use growfrag::config::RunConfig;
use serde_json::{json, Value};

use crate::CliError;

/// Output directory that remembers what was written to it.
pub struct OutDir {
    path: PathBuf,
    files: RefCell<Vec<String>>,
}

/// Shortest round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

impl OutDir {
    pub fn create(path: &str) -> Result<OutDir, CliError> {
        let path = PathBuf::from(path);
        std::fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        Ok(OutDir { path, files: RefCell::new(Vec::new()) })
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path.join(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        self.files.borrow_mut().push(name.to_string());
        Ok(())
    }

    pub fn write_json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        self.write_text(name, &(text + "\n"))
    }

    pub fn write_csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let p = self.path.join(name);
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| io_err(&p, e))?;
        self.files.borrow_mut().push(name.to_string());
        Ok(())
    }

    /// Writes the resolved configuration and the manifest of this run.
    pub fn finish(&self, command: &str, cfg: &RunConfig, passed: Option<bool>, extra: Value) -> Result<(), CliError> {
        self.write_text("config.resolved.toml", &cfg.to_toml())?;
        let manifest = json!({
            "command": command,
            "seed": cfg.seed,
            "passed": passed,
            "files": *self.files.borrow(),
            "details": extra,
        });
        self.write_json("manifest.json", &manifest)
    }
}
