use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fail::{Failure, Result};

/// Output directory. Every file is written to a temporary name first and
/// renamed into place, so readers never see a partial file.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)
            .map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn dir(&self, name: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::create_dir_all(&p)
            .map_err(|e| Failure::internal(format!("cannot create {}: {e}", p.display())))
    }

    pub fn bytes(&self, name: &str, data: &[u8]) -> Result<()> {
        let target = self.dir.join(name);
        let file = target.file_name().expect("named output").to_string_lossy();
        let tmp = target.with_file_name(format!(".{file}.tmp"));
        fs::write(&tmp, data)
            .and_then(|()| fs::rename(&tmp, &target))
            .map_err(|e| Failure::internal(format!("cannot write {}: {e}", target.display())))
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::internal(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }
}
