//! JSON and JSON-Lines artifacts stamped with the producing config digest.
//!
//! JSON-Lines files start with a `{"meta": {...}}` line followed by one
//! object per line; JSON files carry the same block under a `meta` key.
//! Readers accept files without the meta block (hand-written inputs).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub kind: String,
    pub config_digest: String,
    #[serde(default)]
    pub count: usize,
}

impl Meta {
    pub fn new(kind: &str, config_digest: &str, count: usize) -> Self {
        Self {
            kind: kind.to_owned(),
            config_digest: config_digest.to_owned(),
            count,
        }
    }
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a value's compact JSON form (struct fields serialise in
/// declaration order, so the form is canonical for a given type).
pub fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serialisable value"))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RunError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: Meta,
}

pub fn write_jsonl<T: Serialize>(path: &Path, kind: &str, digest: &str, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e: std::io::Error| RunError::io(path, e);
    let meta = MetaLine {
        meta: Meta::new(kind, digest, items.len()),
    };
    serde_json::to_writer(&mut w, &meta).map_err(|e| RunError::data(path, e))?;
    w.write_all(b"\n").map_err(io)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| RunError::data(path, e))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<Meta>, Vec<T>)> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut meta = None;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if n == 0 && line.starts_with("{\"meta\"") {
            let m: MetaLine = serde_json::from_str(&line)
                .map_err(|e| RunError::data(path, format!("line 1: {e}")))?;
            meta = Some(m.meta);
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| RunError::data(path, format!("line {}: {e}", n + 1)))?;
        items.push(item);
    }
    if let Some(m) = &meta {
        if m.count != items.len() {
            return Err(RunError::data(
                path,
                format!(
                    "meta announces {} items, file holds {}",
                    m.count,
                    items.len()
                ),
            ));
        }
    }
    Ok((meta, items))
}

#[derive(Serialize)]
struct WithMetaRef<'a, T> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct WithMeta<T> {
    meta: Option<Meta>,
    #[serde(flatten)]
    body: T,
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &WithMetaRef { meta, body })
        .map_err(|e| RunError::data(path, e))?;
    w.write_all(b"\n").map_err(|e| RunError::io(path, e))?;
    w.flush().map_err(|e| RunError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(Option<Meta>, T)> {
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    let parsed: WithMeta<T> =
        serde_json::from_slice(&bytes).map_err(|e| RunError::data(path, e))?;
    Ok((parsed.meta, parsed.body))
}

/// Fails when an artifact's recorded kind differs from `kind`.
pub fn expect_kind(path: &Path, meta: Option<&Meta>, kind: &str) -> Result<()> {
    match meta {
        Some(m) if m.kind != kind => Err(RunError::data(
            path,
            format!("expected a `{kind}` artifact, found `{}`", m.kind),
        )),
        _ => Ok(()),
    }
}
