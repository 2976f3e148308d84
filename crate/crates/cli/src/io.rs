//! JSON-lines files with a versioned header line, and atomic writes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pickopt::FORMAT_VERSION;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// First line of every JSON-lines file the CLI writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header<M> {
    pub format_version: u32,
    pub kind: String,
    pub seed: u64,
    pub count: u64,
    #[serde(flatten)]
    pub meta: M,
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))
}

/// Rejects files from another format version or of another kind.
pub fn check_version(found: u32, kind: &str, want_kind: &str, path: &Path) -> Result<(), CliError> {
    if found != FORMAT_VERSION {
        return Err(CliError::Format(format!(
            "{}: format version {found} is not supported (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    if kind != want_kind {
        return Err(CliError::Format(format!("{}: expected a {want_kind} file, found {kind}", path.display())));
    }
    Ok(())
}

pub fn read_jsonl<M: DeserializeOwned, T: DeserializeOwned>(path: &Path, want_kind: &str) -> Result<(Header<M>, Vec<T>), CliError> {
    let mut lines = open(path)?.lines();
    let bad = |n: usize, e: &dyn std::fmt::Display| CliError::Format(format!("{} line {n}: {e}", path.display()));
    let first = lines
        .next()
        .ok_or_else(|| CliError::Format(format!("{}: empty file", path.display())))?
        .map_err(|e| bad(1, &e))?;
    #[derive(Deserialize)]
    struct Probe {
        format_version: u32,
        kind: String,
    }
    let probe: Probe = serde_json::from_str(&first).map_err(|e| bad(1, &e))?;
    check_version(probe.format_version, &probe.kind, want_kind, path)?;
    let header: Header<M> = serde_json::from_str(&first).map_err(|e| bad(1, &e))?;
    let mut items = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(i + 2, &e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, &e))?);
    }
    if items.len() as u64 != header.count {
        return Err(CliError::Format(format!(
            "{}: header promises {} records, found {}",
            path.display(),
            header.count,
            items.len()
        )));
    }
    Ok((header, items))
}

pub fn write_jsonl<M: Serialize, T: Serialize>(w: &mut dyn Write, header: &Header<M>, items: &[T]) -> Result<(), CliError> {
    let fail = |e: serde_json::Error| CliError::Runtime(e.to_string());
    serde_json::to_writer(&mut *w, header).map_err(fail)?;
    w.write_all(b"\n").map_err(io_err)?;
    for item in items {
        serde_json::to_writer(&mut *w, item).map_err(fail)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a sibling temporary file renamed into place on success, so
/// a failed command leaves no partial output behind.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}
