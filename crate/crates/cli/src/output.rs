use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use sbd_core::io::write_comment;
use sbd_core::Result;

/// An output directory whose CSV files all start with the same
/// `# config_hash=... seed=...` line.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Artifacts {
    pub fn create(dir: &Path, hash: String, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hash, seed })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv<F>(&self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        write_comment(&mut w, &[("config_hash", self.hash.clone()), ("seed", self.seed.to_string())])?;
        body(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    /// JSON artifacts carry the hash and seed as fields instead of a comment.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}
