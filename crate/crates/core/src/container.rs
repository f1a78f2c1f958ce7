//! APK container ingestion.
//!
//! An APK is a plain ZIP archive. Only the pieces of the format that real
//! packages use are supported: stored and deflated entries, no ZIP64, no
//! encryption. Entries are decompressed eagerly and checked against the CRC
//! recorded in the central directory.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::DeflateDecoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const ZIP64_EOCD_LOCATOR_SIG: u32 = 0x0706_4b50;
const EOCD_MIN_LEN: usize = 22;
const MAX_COMMENT_LEN: usize = 0xFFFF;

const METHOD_STORED: u16 = 0;
const METHOD_DEFLATE: u16 = 8;

pub const MANIFEST_NAME: &str = "AndroidManifest.xml";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainerError {
    #[error("i/o error reading {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("not a ZIP container: {0}")]
    NotAZip(String),
    #[error("archive has no AndroidManifest.xml entry")]
    MissingManifest,
    #[error("archive has {0} AndroidManifest.xml entries")]
    DuplicateManifest(usize),
    #[error("archive has no classes.dex entry")]
    NoDexFound,
    #[error("truncated archive: {0}")]
    TruncatedArchive(String),
    #[error("entry {entry}: unsupported compression method {method}")]
    UnsupportedCompression { entry: String, method: u16 },
    #[error("ZIP64 archives are not supported")]
    Zip64Unsupported,
    #[error("entry {entry}: CRC mismatch (expected {expected:08x}, got {actual:08x})")]
    CrcMismatch {
        entry: String,
        expected: u32,
        actual: u32,
    },
}

/// Analysis-relevant classification of an archive entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    Manifest,
    Dex,
    LayoutXml,
    ResourceTable,
    Other,
}

impl EntryKind {
    /// Classifies an entry purely from its name inside the archive.
    pub fn classify(name: &str) -> EntryKind {
        if name == MANIFEST_NAME {
            EntryKind::Manifest
        } else if is_root_dex_name(name) {
            EntryKind::Dex
        } else if name.starts_with("res/layout") && name.ends_with(".xml") {
            EntryKind::LayoutXml
        } else if name == "resources.arsc" {
            EntryKind::ResourceTable
        } else {
            EntryKind::Other
        }
    }
}

/// `classes(\d*)\.dex` at the archive root.
fn is_root_dex_name(name: &str) -> bool {
    name.strip_prefix("classes")
        .and_then(|rest| rest.strip_suffix(".dex"))
        .is_some_and(|digits| digits.bytes().all(|b| b.is_ascii_digit()))
}

#[derive(Clone, PartialEq, Eq)]
pub struct ApkEntry {
    pub name: String,
    pub kind: EntryKind,
    pub data: Vec<u8>,
}

impl fmt::Debug for ApkEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ApkEntry")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("len", &self.data.len())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct ApkArchive {
    pub path: PathBuf,
    pub entries: Vec<ApkEntry>,
    pub sha256: [u8; 32],
}

impl PartialEq for ApkArchive {
    /// Structural equality ignores where the archive was read from.
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.sha256 == other.sha256
    }
}

impl ApkArchive {
    pub fn sha256_hex(&self) -> String {
        hex::encode(self.sha256)
    }

    pub fn entries_of_kind(&self, kind: EntryKind) -> Vec<&ApkEntry> {
        self.entries.iter().filter(|e| e.kind == kind).collect()
    }

    pub fn manifest(&self) -> &ApkEntry {
        self.entries
            .iter()
            .find(|e| e.kind == EntryKind::Manifest)
            .expect("ApkArchive invariant: manifest present")
    }

    pub fn entry(&self, name: &str) -> Option<&ApkEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub fn open_apk(path: impl AsRef<Path>) -> Result<ApkArchive, ContainerError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ContainerError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut archive = parse_apk_bytes(&bytes)?;
    archive.path = path.to_path_buf();
    Ok(archive)
}

/// Parses an in-memory APK. The returned archive has an empty `path`.
pub fn parse_apk_bytes(bytes: &[u8]) -> Result<ApkArchive, ContainerError> {
    if bytes.len() < 4 {
        return Err(ContainerError::NotAZip(format!(
            "{} bytes is too short for a ZIP header",
            bytes.len()
        )));
    }
    let magic = le_u32(bytes, 0);
    if magic != LOCAL_HEADER_SIG && magic != EOCD_SIG {
        return Err(ContainerError::NotAZip(format!("bad magic {magic:08x}")));
    }

    let eocd = find_eocd(bytes)?;
    let entries = read_central_directory(bytes, &eocd)?;

    let manifests = entries
        .iter()
        .filter(|e| e.kind == EntryKind::Manifest)
        .count();
    match manifests {
        0 => return Err(ContainerError::MissingManifest),
        1 => {}
        n => return Err(ContainerError::DuplicateManifest(n)),
    }
    if !entries.iter().any(|e| e.kind == EntryKind::Dex) {
        return Err(ContainerError::NoDexFound);
    }

    Ok(ApkArchive {
        path: PathBuf::new(),
        entries,
        sha256: Sha256::digest(bytes).into(),
    })
}

struct EndOfCentralDirectory {
    entry_count: usize,
    cd_size: usize,
    cd_offset: usize,
}

fn find_eocd(bytes: &[u8]) -> Result<EndOfCentralDirectory, ContainerError> {
    if bytes.len() < EOCD_MIN_LEN {
        return Err(ContainerError::TruncatedArchive(
            "no end-of-central-directory record".into(),
        ));
    }
    let lowest = bytes.len().saturating_sub(EOCD_MIN_LEN + MAX_COMMENT_LEN);
    let mut pos = bytes.len() - EOCD_MIN_LEN;
    loop {
        if le_u32(bytes, pos) == EOCD_SIG {
            let comment_len = le_u16(bytes, pos + 20) as usize;
            if pos + EOCD_MIN_LEN + comment_len == bytes.len() {
                break;
            }
        }
        if pos == lowest {
            return Err(ContainerError::TruncatedArchive(
                "no end-of-central-directory record".into(),
            ));
        }
        pos -= 1;
    }

    if pos >= 20 && le_u32(bytes, pos - 20) == ZIP64_EOCD_LOCATOR_SIG {
        return Err(ContainerError::Zip64Unsupported);
    }
    let disk = le_u16(bytes, pos + 4);
    let cd_disk = le_u16(bytes, pos + 6);
    if disk != 0 || cd_disk != 0 {
        return Err(ContainerError::NotAZip("multi-volume archive".into()));
    }
    let entry_count = le_u16(bytes, pos + 10);
    let cd_size = le_u32(bytes, pos + 12);
    let cd_offset = le_u32(bytes, pos + 16);
    if entry_count == 0xFFFF || cd_size == 0xFFFF_FFFF || cd_offset == 0xFFFF_FFFF {
        return Err(ContainerError::Zip64Unsupported);
    }
    let (cd_size, cd_offset) = (cd_size as usize, cd_offset as usize);
    if cd_offset.checked_add(cd_size).is_none_or(|end| end > pos) {
        return Err(ContainerError::TruncatedArchive(format!(
            "central directory [{cd_offset}, +{cd_size}) extends past its end record"
        )));
    }
    Ok(EndOfCentralDirectory {
        entry_count: entry_count as usize,
        cd_size,
        cd_offset,
    })
}

fn read_central_directory(
    bytes: &[u8],
    eocd: &EndOfCentralDirectory,
) -> Result<Vec<ApkEntry>, ContainerError> {
    let cd_end = eocd.cd_offset + eocd.cd_size;
    let mut pos = eocd.cd_offset;
    let mut entries = Vec::with_capacity(eocd.entry_count);
    for index in 0..eocd.entry_count {
        if pos + 46 > cd_end {
            return Err(ContainerError::TruncatedArchive(format!(
                "central directory record {index} is cut short"
            )));
        }
        if le_u32(bytes, pos) != CENTRAL_HEADER_SIG {
            return Err(ContainerError::TruncatedArchive(format!(
                "bad central directory signature at offset {pos}"
            )));
        }
        let flags = le_u16(bytes, pos + 8);
        let method = le_u16(bytes, pos + 10);
        let crc = le_u32(bytes, pos + 16);
        let compressed = le_u32(bytes, pos + 20);
        let uncompressed = le_u32(bytes, pos + 24);
        let name_len = le_u16(bytes, pos + 28) as usize;
        let extra_len = le_u16(bytes, pos + 30) as usize;
        let comment_len = le_u16(bytes, pos + 32) as usize;
        let local_offset = le_u32(bytes, pos + 42);
        let record_end = pos + 46 + name_len + extra_len + comment_len;
        if record_end > cd_end {
            return Err(ContainerError::TruncatedArchive(format!(
                "central directory record {index} is cut short"
            )));
        }
        let name = String::from_utf8_lossy(&bytes[pos + 46..pos + 46 + name_len]).into_owned();
        if compressed == 0xFFFF_FFFF || uncompressed == 0xFFFF_FFFF || local_offset == 0xFFFF_FFFF
        {
            return Err(ContainerError::Zip64Unsupported);
        }
        if flags & 0x1 != 0 {
            return Err(ContainerError::UnsupportedCompression {
                entry: name,
                method,
            });
        }

        let data = read_entry_data(
            bytes,
            &name,
            local_offset as usize,
            method,
            compressed as usize,
            uncompressed as usize,
        )?;
        let actual = crc32fast::hash(&data);
        if actual != crc {
            return Err(ContainerError::CrcMismatch {
                entry: name,
                expected: crc,
                actual,
            });
        }

        // Directory placeholders carry no payload.
        if !name.ends_with('/') {
            entries.push(ApkEntry {
                kind: EntryKind::classify(&name),
                name,
                data,
            });
        }
        pos = record_end;
    }
    Ok(entries)
}

fn read_entry_data(
    bytes: &[u8],
    name: &str,
    local_offset: usize,
    method: u16,
    compressed: usize,
    uncompressed: usize,
) -> Result<Vec<u8>, ContainerError> {
    let truncated = || {
        ContainerError::TruncatedArchive(format!(
            "entry {name}: local header at {local_offset} runs past end of file"
        ))
    };
    if local_offset.checked_add(30).is_none_or(|end| end > bytes.len()) {
        return Err(truncated());
    }
    if le_u32(bytes, local_offset) != LOCAL_HEADER_SIG {
        return Err(ContainerError::TruncatedArchive(format!(
            "entry {name}: bad local header signature at {local_offset}"
        )));
    }
    let name_len = le_u16(bytes, local_offset + 26) as usize;
    let extra_len = le_u16(bytes, local_offset + 28) as usize;
    let start = local_offset + 30 + name_len + extra_len;
    let end = start.checked_add(compressed).ok_or_else(truncated)?;
    if end > bytes.len() {
        return Err(truncated());
    }
    let raw = &bytes[start..end];

    match method {
        METHOD_STORED => {
            if raw.len() != uncompressed {
                return Err(ContainerError::TruncatedArchive(format!(
                    "entry {name}: stored size {} differs from declared {uncompressed}",
                    raw.len()
                )));
            }
            Ok(raw.to_vec())
        }
        METHOD_DEFLATE => {
            let mut out = Vec::with_capacity(uncompressed);
            DeflateDecoder::new(raw)
                .read_to_end(&mut out)
                .map_err(|e| ContainerError::TruncatedArchive(format!("entry {name}: {e}")))?;
            if out.len() != uncompressed {
                return Err(ContainerError::TruncatedArchive(format!(
                    "entry {name}: inflated {} bytes, expected {uncompressed}",
                    out.len()
                )));
            }
            Ok(out)
        }
        other => Err(ContainerError::UnsupportedCompression {
            entry: name.to_string(),
            method: other,
        }),
    }
}

fn le_u16(bytes: &[u8], at: usize) -> u16 {
    match bytes.get(at..at + 2) {
        Some(b) => u16::from_le_bytes([b[0], b[1]]),
        None => 0,
    }
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    match bytes.get(at..at + 4) {
        Some(b) => u32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        None => 0,
    }
}
