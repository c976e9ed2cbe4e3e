//! File formats, synthetic data, reports and the command-line front end
//! around [`fxlstm_core`].

pub mod cli;
pub mod dataset;
pub mod error;
pub mod model_io;
pub mod parallel;
pub mod reports;
pub mod synth;

pub use error::{Error, Result};

use std::path::Path;

/// Write a whole file, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
