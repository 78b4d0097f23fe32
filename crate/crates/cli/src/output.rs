use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use mutind::sampler::CacheStats;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_step_secs: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_chain_secs: Vec<f64>,
}

/// Everything needed to re-run a command; timings are informational.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub timings: Timings,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cache: Option<CacheStats>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        RunManifest {
            tool: "mutind".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            cwd: std::env::current_dir().map(|p| p.display().to_string()).unwrap_or_default(),
            seed: None,
            config: serde_json::Value::Null,
            timings: Timings::default(),
            cache: None,
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Routes outputs to files in `--out-dir` or to stdout.
pub struct Sink {
    out_dir: Option<PathBuf>,
    pub written: Vec<String>,
}

impl Sink {
    pub fn new(out_dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &out_dir {
            fs::create_dir_all(d).map_err(|e| CliError::input(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Sink { out_dir, written: Vec::new() })
    }

    pub fn to_files(&self) -> bool {
        self.out_dir.is_some()
    }

    /// Writes `name` in the output directory; without one, `to_stdout`
    /// outputs go to stdout and the rest are dropped.
    pub fn emit(&mut self, name: &str, content: &str, to_stdout: bool) -> Result<(), CliError> {
        match &self.out_dir {
            Some(dir) => {
                let path = dir.join(name);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, content).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
                self.written.push(name.to_string());
            }
            None if to_stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(content.as_bytes())?;
                out.flush()?;
            }
            None => {}
        }
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.outputs = self.written.clone();
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        match &self.out_dir {
            Some(dir) => fs::write(dir.join("manifest.json"), text)?,
            None => eprint!("{text}"),
        }
        Ok(())
    }
}
