//! Output directory bookkeeping: every file an experiment writes is
//! tracked, digested for the run record, and removed if the run fails.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub struct Outputs {
    dir: PathBuf,
    created: Vec<PathBuf>,
    created_dir: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            context: format!("creating {}", dir.display()),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created: Vec::new(),
            created_dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` inside the output directory through `fill`.
    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        debug_assert!(!name.contains('/') && !name.contains(".."));
        let path = self.dir.join(name);
        self.created.push(path.clone());
        let file = File::create(&path).map_err(|source| CliError::Io {
            context: format!("creating {}", path.display()),
            source,
        })?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(|source| CliError::Io {
            context: format!("writing {}", path.display()),
            source,
        })
    }

    /// SHA-256 of every written file, keyed by file name.
    pub fn digests(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for path in &self.created {
            let bytes = std::fs::read(path).map_err(|source| CliError::Io {
                context: format!("reading {}", path.display()),
                source,
            })?;
            let name = path.file_name().expect("file name").to_string_lossy().into_owned();
            out.insert(name, hex::encode(Sha256::digest(&bytes)));
        }
        Ok(out)
    }

    /// Removes everything this run wrote.
    pub fn discard(self) {
        for path in &self.created {
            let _ = std::fs::remove_file(path);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}
