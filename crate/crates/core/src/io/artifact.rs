use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::TraceRecord;

/// Provenance carried by every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub manifest_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    #[serde(flatten)]
    pub stamp: Stamp,
    pub body: T,
}

impl<T> Artifact<T> {
    pub fn new(kind: &str, stamp: &Stamp, body: T) -> Self {
        Self {
            kind: kind.to_string(),
            stamp: stamp.clone(),
            body,
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_artifact<T: Serialize>(path: &Path, artifact: &Artifact<T>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(artifact)?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads an artifact and checks its kind.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Artifact<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let a: Artifact<T> =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    if a.kind != kind {
        return Err(Error::Manifest(format!(
            "{}: expected a `{kind}` artifact, found `{}`",
            path.display(),
            a.kind
        )));
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceHeader {
    kind: String,
    #[serde(flatten)]
    stamp: Stamp,
    victim: u64,
}

/// Line-delimited trace: a header line, then one record per epoch.
pub fn write_trace(path: &Path, stamp: &Stamp, victim: u64, trace: &[TraceRecord]) -> Result<()> {
    let header = TraceHeader {
        kind: "trace".into(),
        stamp: stamp.clone(),
        victim,
    };
    let mut text = serde_json::to_string(&header)?;
    text.push('\n');
    for r in trace {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_trace(path: &Path) -> Result<(Stamp, u64, Vec<TraceRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: TraceHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Manifest(format!("{}: empty trace", path.display())))?,
    )?;
    let records = lines.map(serde_json::from_str).collect::<Result<Vec<_>, _>>()?;
    Ok((header.stamp, header.victim, records))
}

/// Plain-text file with a leading provenance comment.
pub fn write_stamped_text(path: &Path, stamp: &Stamp, body: &str) -> Result<()> {
    write_text(
        path,
        &format!("# manifest {} seed {}\n{body}", stamp.manifest_hash, stamp.seed),
    )
}
