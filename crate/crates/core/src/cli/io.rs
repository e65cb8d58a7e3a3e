use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance record written as the first line of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub version: String,
    pub config_hash: String,
    pub library_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::MissingFile { path: path.display().to_string(), source })
}

/// JSONL file whose first line is a [`Header`].
pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path, header: &Header) -> Result<Self> {
        let mut out = create(path)?;
        serde_json::to_writer(&mut out, &HeaderLine { header: header.clone() })?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn inner(&mut self) -> &mut BufWriter<File> {
        &mut self.out
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads the header and every following record. `expect_kind` and
/// `library_hash` are checked against the header.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, expect_kind: &str, library_hash: &str) -> Result<(Header, Vec<T>)> {
    let mut lines = open(path)?.lines();
    let first = lines.next().ok_or_else(|| Error::Format(format!("{} is empty", path.display())))??;
    let header = read_header_line(&first, path, expect_kind, library_hash)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 2)))?,
        );
    }
    Ok((header, out))
}

fn read_header_line(line: &str, path: &Path, expect_kind: &str, library_hash: &str) -> Result<Header> {
    let h: HeaderLine = serde_json::from_str(line)
        .map_err(|e| Error::Format(format!("{}: missing provenance header ({e})", path.display())))?;
    if h.header.kind != expect_kind {
        return Err(Error::Format(format!("{} holds `{}`, expected `{expect_kind}`", path.display(), h.header.kind)));
    }
    if h.header.library_hash != library_hash {
        return Err(Error::Format(format!("{} was built with a different synthon library", path.display())));
    }
    Ok(h.header)
}

/// Reads only the header of a JSONL artifact.
pub fn read_header(path: &Path, expect_kind: &str, library_hash: &str) -> Result<Header> {
    let mut first = String::new();
    open(path)?.read_line(&mut first)?;
    read_header_line(first.trim_end(), path, expect_kind, library_hash)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
