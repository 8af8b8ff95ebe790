//! Demonstration files and dataset directories.
//!
//! An episode file starts with the magic bytes `TAPD` and a little-endian
//! `u16` format version, followed by records. Each record is a one-byte
//! kind, a little-endian `u32` payload length and a CBOR payload:
//!
//! | kind | payload |
//! |------|---------|
//! | 1    | header: task config and metadata |
//! | 2    | one frame |
//! | 3    | footer: frame count and outcome |
//!
//! Frames can be appended as they are recorded. A file without a footer is
//! a truncated recording. A directory holds one file per episode plus a
//! `manifest.json` listing task, seeds and success flags.

use crate::error::{Error, Result};
use crate::sim::{TaskConfig, TaskKind};
use crate::teleop::{record_scripted, Demonstration, Frame, Metadata, Outcome};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"TAPD";
pub const VERSION: u16 = 1;
pub const EPISODE_EXTENSION: &str = "tapd";
pub const MANIFEST_FILE: &str = "manifest.json";

const KIND_HEADER: u8 = 1;
const KIND_FRAME: u8 = 2;
const KIND_FOOTER: u8 = 3;

#[derive(Serialize, Deserialize)]
struct Header {
    task: TaskConfig,
    metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
struct Footer {
    frame_count: u64,
    outcome: Outcome,
}

fn cbor<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    ciborium::into_writer(value, &mut out).expect("CBOR encoding into memory");
    out
}

fn from_cbor<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    ciborium::from_reader(bytes).map_err(|e| Error::Format(format!("CBOR payload: {e}")))
}

fn write_record<W: Write>(w: &mut W, kind: u8, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| Error::Format("record larger than 4 GiB".into()))?;
    w.write_all(&[kind])?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

/// Streams an episode to a writer record by record.
pub struct DemoWriter<W: Write> {
    inner: W,
    frames: u64,
}

impl<W: Write> DemoWriter<W> {
    pub fn new(mut inner: W, task: &TaskConfig, metadata: &Metadata) -> Result<Self> {
        inner.write_all(MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        let header = Header {
            task: task.clone(),
            metadata: metadata.clone(),
        };
        write_record(&mut inner, KIND_HEADER, &cbor(&header))?;
        Ok(Self { inner, frames: 0 })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        write_record(&mut self.inner, KIND_FRAME, &cbor(frame))?;
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self, outcome: &Outcome) -> Result<W> {
        let footer = Footer {
            frame_count: self.frames,
            outcome: outcome.clone(),
        };
        write_record(&mut self.inner, KIND_FOOTER, &cbor(&footer))?;
        self.inner.flush()?;
        Ok(self.inner)
    }

    /// Stops without a footer, leaving a truncated recording.
    pub fn abandon(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn encode(demo: &Demonstration) -> Vec<u8> {
    let mut w = DemoWriter::new(Vec::new(), &demo.task, &demo.metadata).expect("in-memory write");
    for f in &demo.frames {
        w.push(f).expect("in-memory write");
    }
    match &demo.outcome {
        Some(o) => w.finish(o).expect("in-memory write"),
        None => w.abandon().expect("in-memory write"),
    }
}

/// Decodes an episode. A missing footer, or a final record cut short,
/// yields a demonstration without outcome.
pub fn decode(bytes: &[u8]) -> Result<Demonstration> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a demonstration file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported demonstration format version {version} (expected {VERSION})"
        )));
    }
    let mut rest = &bytes[6..];
    let mut header: Option<Header> = None;
    let mut frames = Vec::new();
    let mut outcome = None;
    while !rest.is_empty() {
        if rest.len() < 5 {
            break;
        }
        let kind = rest[0];
        let len = u32::from_le_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
        if rest.len() < 5 + len {
            break;
        }
        let payload = &rest[5..5 + len];
        rest = &rest[5 + len..];
        match kind {
            KIND_HEADER if header.is_none() => header = Some(from_cbor(payload)?),
            KIND_FRAME if header.is_some() && outcome.is_none() => frames.push(from_cbor(payload)?),
            KIND_FOOTER if header.is_some() && outcome.is_none() => {
                let footer: Footer = from_cbor(payload)?;
                if footer.frame_count != frames.len() as u64 {
                    return Err(Error::Format(format!(
                        "footer lists {} frames, file holds {}",
                        footer.frame_count,
                        frames.len()
                    )));
                }
                outcome = Some(footer.outcome);
            }
            other => {
                return Err(Error::Format(format!("unexpected record kind {other}")));
            }
        }
    }
    let header = header.ok_or_else(|| Error::Format("missing header record".into()))?;
    Ok(Demonstration {
        task: header.task,
        metadata: header.metadata,
        frames,
        outcome,
    })
}

pub fn write_demonstration(path: &Path, demo: &Demonstration) -> Result<()> {
    fs::write(path, encode(demo))?;
    Ok(())
}

pub fn read_demonstration(path: &Path) -> Result<Demonstration> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Lossless human-readable form.
pub fn to_json(demo: &Demonstration) -> String {
    serde_json::to_string_pretty(demo).expect("demonstration serializes")
}

pub fn from_json(text: &str) -> Result<Demonstration> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("demonstration JSON: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub frames: usize,
    pub complete: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: TaskKind,
    pub format_version: u16,
    pub episodes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            format_version: VERSION,
            episodes: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn success_count(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }
}

pub fn episode_file_name(index: usize) -> String {
    format!("episode_{index:05}.{EPISODE_EXTENSION}")
}

/// Adds a demonstration file to `dir` and its manifest entry.
pub fn append_episode(dir: &Path, manifest: &mut Manifest, demo: &Demonstration) -> Result<PathBuf> {
    let file = episode_file_name(manifest.episodes.len());
    let path = dir.join(&file);
    write_demonstration(&path, demo)?;
    manifest.episodes.push(ManifestEntry {
        file,
        seed: demo.task.seed,
        noise_seed: demo.metadata.noise_seed,
        frames: demo.frames.len(),
        complete: demo.is_complete(),
        success: demo.success(),
    });
    Ok(path)
}

/// Records `episodes` scripted demonstrations with consecutive seeds
/// starting at `seed` and writes them with a manifest.
pub fn generate_scripted(cfg: &TaskConfig, dir: &Path, episodes: usize, seed: u64) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest::new(cfg.task);
    for i in 0..episodes as u64 {
        let demo = record_scripted(&cfg.with_seed(seed + i), seed + i)?;
        append_episode(dir, &mut manifest, &demo)?;
    }
    manifest.save(dir)?;
    Ok(manifest)
}

/// Loads every episode listed in the directory manifest, in order.
pub fn load_dir(dir: &Path) -> Result<(Manifest, Vec<Demonstration>)> {
    let manifest = Manifest::load(dir)?;
    let demos = manifest
        .episodes
        .iter()
        .map(|e| read_demonstration(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, demos))
}

/// Complete, successful demonstrations: the ones fit for training.
pub fn usable(demos: &[Demonstration]) -> Vec<&Demonstration> {
    demos.iter().filter(|d| d.is_complete() && d.success()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Demonstration {
        let cfg = TaskKind::LiquidTransfer.default_config().with_seed(2);
        record_scripted(&cfg, 2).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let d = demo();
        let bytes = encode(&d);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let d = demo();
        let back = from_json(&to_json(&d)).unwrap();
        assert_eq!(encode(&back), encode(&d));
    }

    #[test]
    fn missing_footer_is_truncated() {
        let d = demo();
        let mut bytes = encode(&d);
        let full = bytes.len();
        // Drop the footer record entirely, then also cut into a frame.
        let footer_len = 5 + cbor(&Footer {
            frame_count: d.frames.len() as u64,
            outcome: d.outcome.clone().unwrap(),
        })
        .len();
        bytes.truncate(full - footer_len);
        let t = decode(&bytes).unwrap();
        assert!(!t.is_complete());
        assert_eq!(t.frames.len(), d.frames.len());
        bytes.truncate(bytes.len() - 3);
        assert_eq!(decode(&bytes).unwrap().frames.len(), d.frames.len() - 1);
    }

    #[test]
    fn bad_magic_is_format_error() {
        assert!(matches!(decode(b"NOPE\x01\x00"), Err(Error::Format(_))));
    }
}
