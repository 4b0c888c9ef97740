use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use curvature_game::field::fmt_f64;

use crate::CliError;

/// Writes named artifacts into a directory created on first use, so a
/// command that fails validation leaves nothing behind.
pub(crate) struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub(crate) fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }

    pub(crate) fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub(crate) fn write_with<F>(&self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let io = |e: std::io::Error| CliError::Usage(format!("cannot write {name}: {e}"));
        fs::create_dir_all(&self.dir).map_err(io)?;
        let path = self.path(name);
        let mut file = std::io::BufWriter::new(fs::File::create(&path).map_err(io)?);
        f(&mut file).map_err(io)?;
        file.flush().map_err(io)?;
        Ok(path)
    }

    pub(crate) fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        })
    }
}

/// CSV cell for a real: 17 significant digits, `inf`/`nan` spelled out.
pub(crate) fn cell(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
