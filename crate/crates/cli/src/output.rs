use std::path::{Path, PathBuf};

use covergllvm::io::write_atomic_with;
use covergllvm::Result;
use serde::Serialize;

use crate::args::Cli;

/// Resolved configuration written next to every run's outputs.
#[derive(Serialize)]
pub struct RunConfig<'a> {
    pub tool_version: &'static str,
    pub cli: &'a Cli,
    /// Option records passed to the library, after defaults.
    pub resolved: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
}

/// Output directory that remembers what it wrote.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic_with(&path, f)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    /// Write `run_config.json` listing every output so far.
    pub fn finish(mut self, cli: &Cli, resolved: serde_json::Value, inputs: Vec<PathBuf>) -> Result<()> {
        let config = RunConfig {
            tool_version: env!("CARGO_PKG_VERSION"),
            cli,
            resolved,
            inputs,
            outputs: self.written.clone(),
        };
        self.write_json("run_config.json", &config)?;
        Ok(())
    }
}
