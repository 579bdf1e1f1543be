use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Category, CliResult, Context};

pub const FILE: &str = "manifest.json";

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Records every artifact a command writes; saved last so its presence marks completion.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub artifacts: Vec<String>,
}

pub struct Artifacts {
    manifest: RunManifest,
}

impl Artifacts {
    pub fn start(command: &str, config: Option<&Path>, seed: u64, out: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(out).context(Category::Io, format!("cannot create {}", out.display()))?;
        let stale = out.join(FILE);
        if stale.exists() {
            std::fs::remove_file(&stale).context(Category::Io, format!("cannot remove {}", stale.display()))?;
        }
        Ok(Self {
            manifest: RunManifest {
                command: command.into(),
                config: config.map(Path::to_path_buf),
                seed,
                out: out.to_path_buf(),
                started_unix: now(),
                finished_unix: 0.0,
                artifacts: Vec::new(),
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.manifest.out.join(name)
    }

    pub fn record(&mut self, name: impl Into<String>) {
        self.manifest.artifacts.push(name.into());
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).context(Category::Io, format!("cannot create {}", dir.display()))?;
        }
        std::fs::write(&path, contents).context(Category::Io, format!("cannot write {}", path.display()))?;
        self.record(name);
        Ok(())
    }

    /// Lists files written into `dir` by the library, relative to the output directory.
    pub fn record_dir(&mut self, dir: &str) -> CliResult<()> {
        let path = self.path(dir);
        let mut names: Vec<String> = std::fs::read_dir(&path)
            .context(Category::Io, format!("cannot list {}", path.display()))?
            .filter_map(|e| e.ok())
            .map(|e| format!("{dir}/{}", e.file_name().to_string_lossy()))
            .collect();
        names.sort();
        self.manifest.artifacts.extend(names);
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest.artifacts.sort();
        self.manifest.finished_unix = now();
        let path = self.path(FILE);
        let json = serde_json::to_vec_pretty(&self.manifest).context(Category::Io, "cannot serialize manifest")?;
        std::fs::write(&path, json).context(Category::Io, format!("cannot write {}", path.display()))?;
        Ok(self.manifest)
    }
}
