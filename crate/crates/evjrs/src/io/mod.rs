//! On-disk formats. Text formats carry a `format` name and a `version`;
//! binary formats start with a magic string and a little-endian `u32`
//! version.

mod checkpoint;
mod dataset;
mod instance;
mod lp;
mod network;
mod solution;
mod tensor;

use std::fs;
use std::path::Path;

use evjrs_core::hash::content_hash;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use dataset::{dataset_hash, read_dataset, write_dataset, Dataset, MANIFEST, TIMINGS};
pub use instance::{
    parse_instance, read_instance, render_instance, write_instance, INSTANCE_VERSION,
};
pub use lp::render_lp;
pub use network::{parse_network, read_network, render_network, write_network};
pub use solution::{read_solution, write_solution, SolutionFile, SOLUTION_VERSION};
pub use tensor::{
    decode_tensor, encode_tensor, read_tensor, write_tensor, TENSOR_MAGIC, TENSOR_VERSION,
};

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Content hash of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&read_bytes(path)?))
}

/// Hash over the sorted `(relative name, content hash)` list of the regular
/// files directly inside `dir`, skipping names in `exclude`.
pub fn dir_hash(dir: &Path, exclude: &[&str]) -> Result<String> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_file() && !exclude.contains(&name.as_str()) {
            entries.push(format!("{name} {}\n", file_hash(&path)?));
        }
    }
    entries.sort();
    Ok(content_hash(entries.concat().as_bytes()))
}

/// Byte offset of a 1-based line/column position in `text`.
pub(crate) fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

pub(crate) fn json_error(path: &Path, text: &str, e: &serde_json::Error) -> Error {
    let offset = if e.line() == 0 {
        None
    } else {
        Some(offset_of(text, e.line(), e.column()))
    };
    Error::format(path, offset, e.to_string())
}

/// Checks the `format`/`version` envelope before the payload is decoded, so
/// a wrong file type or version gets a direct message.
pub(crate) fn check_envelope(path: &Path, text: &str, format: &str, version: u32) -> Result<()> {
    #[derive(serde::Deserialize)]
    struct Envelope {
        format: Option<String>,
        version: Option<u64>,
    }
    let env: Envelope = serde_json::from_str(text).map_err(|e| json_error(path, text, &e))?;
    match (env.format.as_deref(), env.version) {
        (Some(f), _) if f != format => Err(Error::format(
            path,
            None,
            format!("expected a {format} file, found {f}"),
        )),
        (None, _) => Err(Error::format(
            path,
            None,
            format!("missing format field (expected {format})"),
        )),
        (_, Some(v)) if v != u64::from(version) => Err(Error::format(
            path,
            None,
            format!("unsupported {format} version {v} (supported: {version})"),
        )),
        (_, None) => Err(Error::format(path, None, "missing version field")),
        _ => Ok(()),
    }
}
