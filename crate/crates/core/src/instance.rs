// SPDX-License-Identifier: Apache-2.0

//! Instance packages: the catalogued subset of a guest filesystem, extracted
//! and serialized into a single deterministic VSIP archive.
//!
//! VSIP v1 layout, all integers little-endian:
//!
//! ```text
//! "VSIP"  version:u16=1  flags:u16=0  entry_count:u32
//! label_len:u16 label                        (empty when unlabelled)
//! entry_count x { path_len:u16 path kind:u8 mode:u32 size:u64 blob_offset:u64 sha256:[u8;32] }
//! missing_count:u32
//! missing_count x { path_len:u16 path }
//! blobs: file and symlink contents, concatenated in entry order
//! ```
//!
//! `blob_offset` is an absolute offset into the archive. Directories and
//! special files carry no blob: offset 0, size 0, zero hash. Timestamps and
//! ownership are deliberately absent so the archive is a pure function of
//! file content and catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{closure_expand, Catalog, Label};
use crate::ext2::{FileKind, FsError, FsVolume, Inode};
use crate::source::ByteSource;

pub const VSIP_MAGIC: [u8; 4] = *b"VSIP";
pub const VSIP_VERSION: u16 = 1;
/// Magic, version, flags and entry count.
pub const VSIP_HEADER_SIZE: u64 = 12;
const ENTRY_FIXED_SIZE: u64 = 2 + 1 + 4 + 8 + 8 + 32;

/// Set to `1` to force serial extraction.
pub const NO_PARALLEL_ENV: &str = "VMSLIM_NO_PARALLEL";

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("bad magic {0:02x?}: not a VSIP package")]
    BadMagic([u8; 4]),
    #[error("unsupported VSIP version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated package: {0}")]
    Truncated(String),
    #[error("content hash mismatch for {path}")]
    HashMismatch { path: String },
    #[error("malformed package: {0}")]
    Malformed(String),
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntryKind {
    File,
    Dir,
    Symlink,
    Other,
}

impl EntryKind {
    pub fn code(self) -> u8 {
        match self {
            EntryKind::File => 0,
            EntryKind::Dir => 1,
            EntryKind::Symlink => 2,
            EntryKind::Other => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => EntryKind::File,
            1 => EntryKind::Dir,
            2 => EntryKind::Symlink,
            3 => EntryKind::Other,
            _ => return None,
        })
    }

    /// Whether entries of this kind carry content in the blob section.
    pub fn has_blob(self) -> bool {
        matches!(self, EntryKind::File | EntryKind::Symlink)
    }
}

impl From<FileKind> for EntryKind {
    fn from(kind: FileKind) -> Self {
        match kind {
            FileKind::Regular => EntryKind::File,
            FileKind::Directory => EntryKind::Dir,
            FileKind::Symlink => EntryKind::Symlink,
            FileKind::Other => EntryKind::Other,
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::File => "file",
            EntryKind::Dir => "dir",
            EntryKind::Symlink => "symlink",
            EntryKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: EntryKind,
    /// Permission bits (`mode & 0o7777`).
    pub mode: u32,
    pub size: u64,
    pub content_hash: [u8; 32],
    pub blob_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceManifest {
    pub format_version: u16,
    pub label: Option<Label>,
    pub entries: Vec<ManifestEntry>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstancePackage {
    pub manifest: InstanceManifest,
    blobs: Vec<u8>,
}

/// Content for one package entry before layout.
#[derive(Debug, Clone)]
pub struct EntrySource {
    pub path: String,
    pub kind: EntryKind,
    pub mode: u32,
    pub content: Vec<u8>,
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl InstancePackage {
    /// Lays out entries in path byte order and assigns blob offsets.
    /// Content of dirs and special files is dropped.
    pub fn build(label: Option<Label>, sources: Vec<EntrySource>, missing: Vec<String>) -> Self {
        let sources: BTreeMap<String, EntrySource> = sources.into_iter().map(|s| (s.path.clone(), s)).collect();
        let missing: Vec<String> = missing.into_iter().collect::<BTreeSet<_>>().into_iter().collect();

        let header_len = VSIP_HEADER_SIZE
            + label_len(label.as_ref())
            + sources.keys().map(|p| ENTRY_FIXED_SIZE + p.len() as u64).sum::<u64>()
            + 4
            + missing.iter().map(|p| 2 + p.len() as u64).sum::<u64>();

        let mut blobs = Vec::new();
        let mut entries = Vec::with_capacity(sources.len());
        for (path, src) in sources {
            let entry = if src.kind.has_blob() {
                let offset = header_len + blobs.len() as u64;
                blobs.extend_from_slice(&src.content);
                ManifestEntry {
                    path,
                    kind: src.kind,
                    mode: src.mode,
                    size: src.content.len() as u64,
                    content_hash: sha256(&src.content),
                    blob_offset: offset,
                }
            } else {
                ManifestEntry { path, kind: src.kind, mode: src.mode, size: 0, content_hash: [0; 32], blob_offset: 0 }
            };
            entries.push(entry);
        }
        InstancePackage {
            manifest: InstanceManifest { format_version: VSIP_VERSION, label, entries, missing },
            blobs,
        }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.manifest.entries
    }

    pub fn missing(&self) -> &[String] {
        &self.manifest.missing
    }

    pub fn entry(&self, path: &str) -> Option<&ManifestEntry> {
        self.manifest
            .entries
            .binary_search_by(|e| e.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.manifest.entries[i])
    }

    /// Byte offset where the blob section starts.
    pub fn blob_section_offset(&self) -> u64 {
        VSIP_HEADER_SIZE
            + label_len(self.manifest.label.as_ref())
            + self.manifest.entries.iter().map(|e| ENTRY_FIXED_SIZE + e.path.len() as u64).sum::<u64>()
            + 4
            + self.manifest.missing.iter().map(|p| 2 + p.len() as u64).sum::<u64>()
    }

    /// Content of a file or symlink entry.
    pub fn blob(&self, entry: &ManifestEntry) -> &[u8] {
        if !entry.kind.has_blob() {
            return &[];
        }
        let start = (entry.blob_offset - self.blob_section_offset()) as usize;
        &self.blobs[start..start + entry.size as usize]
    }

    /// Total blob bytes (sum of file and symlink sizes).
    pub fn content_bytes(&self) -> u64 {
        self.blobs.len() as u64
    }

    /// Serialized size in bytes.
    pub fn packed_size(&self) -> u64 {
        self.blob_section_offset() + self.blobs.len() as u64
    }

    /// Writes the VSIP encoding and returns the number of bytes written.
    pub fn pack<W: Write>(&self, sink: &mut W) -> io::Result<u64> {
        let m = &self.manifest;
        let mut head = Vec::with_capacity(self.blob_section_offset() as usize);
        head.extend_from_slice(&VSIP_MAGIC);
        head.extend_from_slice(&m.format_version.to_le_bytes());
        head.extend_from_slice(&0u16.to_le_bytes());
        head.extend_from_slice(&(m.entries.len() as u32).to_le_bytes());
        put_str(&mut head, m.label.as_ref().map(Label::as_str).unwrap_or(""))?;
        for e in &m.entries {
            put_path(&mut head, &e.path)?;
            head.push(e.kind.code());
            head.extend_from_slice(&e.mode.to_le_bytes());
            head.extend_from_slice(&e.size.to_le_bytes());
            head.extend_from_slice(&e.blob_offset.to_le_bytes());
            head.extend_from_slice(&e.content_hash);
        }
        head.extend_from_slice(&(m.missing.len() as u32).to_le_bytes());
        for p in &m.missing {
            put_path(&mut head, p)?;
        }
        sink.write_all(&head)?;
        sink.write_all(&self.blobs)?;
        sink.flush()?;
        Ok(head.len() as u64 + self.blobs.len() as u64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.packed_size() as usize);
        self.pack(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

fn label_len(label: Option<&Label>) -> u64 {
    2 + label.map_or(0, |l| l.as_str().len() as u64)
}

fn put_str(out: &mut Vec<u8>, text: &str) -> io::Result<()> {
    let len = u16::try_from(text.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, format!("string too long: {text}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

fn put_path(out: &mut Vec<u8>, path: &str) -> io::Result<()> {
    put_str(out, path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], InstanceError> {
        if self.bytes.len() - self.pos < n {
            return Err(InstanceError::Truncated(format!("{what} at offset {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, InstanceError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, InstanceError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, InstanceError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<&'a str, InstanceError> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        std::str::from_utf8(raw).map_err(|_| InstanceError::Malformed(format!("{what}: not UTF-8")))
    }

    fn path(&mut self, what: &str) -> Result<String, InstanceError> {
        let path = self.string(what)?;
        if !path.starts_with('/') {
            return Err(InstanceError::Malformed(format!("{what}: path {path:?} is not absolute")));
        }
        Ok(path.to_string())
    }
}

/// Decodes a VSIP archive, checking its structure and every content hash.
pub fn unpack(bytes: &[u8]) -> Result<InstancePackage, InstanceError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != VSIP_MAGIC {
        return Err(InstanceError::BadMagic(magic));
    }
    let version = r.u16("version")?;
    if version != VSIP_VERSION {
        return Err(InstanceError::UnsupportedVersion(version));
    }
    let flags = r.u16("flags")?;
    if flags != 0 {
        return Err(InstanceError::Malformed(format!("flags {flags:#x}")));
    }
    let count = r.u32("entry count")? as usize;
    let label = match r.string("label")? {
        "" => None,
        text => Some(text.parse::<Label>().expect("label parsing is infallible")),
    };
    let mut entries: Vec<ManifestEntry> = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let what = format!("entry {i}");
        let path = r.path(&what)?;
        let code = r.take(1, &what)?[0];
        let kind = EntryKind::from_code(code).ok_or_else(|| InstanceError::Malformed(format!("{path}: kind {code}")))?;
        let mode = r.u32(&what)?;
        let size = r.u64(&what)?;
        let blob_offset = r.u64(&what)?;
        let content_hash: [u8; 32] = r.take(32, &what)?.try_into().unwrap();
        if let Some(prev) = entries.last() {
            if prev.path.as_bytes() >= path.as_bytes() {
                return Err(InstanceError::Malformed(format!("entries out of order at {path}")));
            }
        }
        entries.push(ManifestEntry { path, kind, mode, size, content_hash, blob_offset });
    }
    let missing_count = r.u32("missing count")? as usize;
    let mut missing: Vec<String> = Vec::with_capacity(missing_count.min(1 << 16));
    for i in 0..missing_count {
        let path = r.path(&format!("missing path {i}"))?;
        if missing.last().is_some_and(|prev| prev.as_bytes() >= path.as_bytes()) {
            return Err(InstanceError::Malformed(format!("missing paths out of order at {path}")));
        }
        missing.push(path);
    }

    let blob_start = r.pos as u64;
    let mut expected = blob_start;
    for e in &entries {
        if !e.kind.has_blob() {
            if e.blob_offset != 0 || e.size != 0 || e.content_hash != [0; 32] {
                return Err(InstanceError::Malformed(format!("{}: {} entry carries content", e.path, e.kind)));
            }
            continue;
        }
        if e.blob_offset != expected {
            return Err(InstanceError::Malformed(format!(
                "{}: blob offset {} (expected {expected})",
                e.path, e.blob_offset
            )));
        }
        let end = e.blob_offset.checked_add(e.size).filter(|&end| end <= bytes.len() as u64);
        let Some(end) = end else {
            return Err(InstanceError::Truncated(format!("blob of {}", e.path)));
        };
        if sha256(&bytes[e.blob_offset as usize..end as usize]) != e.content_hash {
            return Err(InstanceError::HashMismatch { path: e.path.clone() });
        }
        expected = end;
    }
    if expected != bytes.len() as u64 {
        return Err(InstanceError::Malformed(format!(
            "{} trailing bytes after the last blob",
            bytes.len() as u64 - expected
        )));
    }
    Ok(InstancePackage {
        manifest: InstanceManifest { format_version: version, label, entries, missing },
        blobs: bytes[blob_start as usize..].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractOptions {
    /// Worker threads for file reads: 1 is serial, 0 uses the global pool.
    pub threads: usize,
}

impl ExtractOptions {
    pub fn serial() -> Self {
        Self { threads: 1 }
    }

    /// Serial when `VMSLIM_NO_PARALLEL=1`, otherwise the global pool.
    pub fn from_env() -> Self {
        match std::env::var(NO_PARALLEL_ENV) {
            Ok(v) if v == "1" => Self::serial(),
            _ => Self::default(),
        }
    }
}

fn entry_source<S: ByteSource>(fs: &FsVolume<S>, path: &str, inode: &Inode) -> Result<EntrySource, FsError> {
    let kind = EntryKind::from(inode.kind());
    let content = if kind.has_blob() { fs.read_file(inode)? } else { Vec::new() };
    Ok(EntrySource { path: path.to_string(), kind, mode: inode.permissions(), content })
}

fn is_strict_ancestor(ancestor: &str, path: &str) -> bool {
    path.len() > ancestor.len()
        && path.starts_with(ancestor)
        && (ancestor == "/" || path.as_bytes()[ancestor.len()] == b'/')
}

/// Extracts the closure of `catalog` from `fs` into a package.
///
/// Paths that do not resolve are recorded in `missing`: every original
/// catalog entry plus any dangling symlink target. Ancestors that only exist
/// because a missing path implies them are not listed separately.
pub fn extract<S: ByteSource>(fs: &FsVolume<S>, catalog: &Catalog, opts: ExtractOptions) -> Result<InstancePackage, FsError> {
    let expanded = closure_expand(catalog, fs)?;
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for path in expanded.entries() {
        match fs.resolve_path(path) {
            Ok(inode) => found.push((path.clone(), inode)),
            Err(FsError::NotFound { .. } | FsError::NotADirectory { .. } | FsError::SymlinkLoop { .. }) => {
                let implied = expanded.entries().iter().any(|other| is_strict_ancestor(path, other));
                if catalog.contains(path) || !implied {
                    missing.push(path.clone());
                }
            }
            Err(e) => return Err(e),
        }
    }

    let read = |(path, inode): &(String, Inode)| entry_source(fs, path, inode);
    let sources: Vec<EntrySource> = match opts.threads {
        1 => found.iter().map(read).collect::<Result<_, _>>()?,
        0 => found.par_iter().map(read).collect::<Result<_, _>>()?,
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| FsError::Io(io::Error::other(e)))?;
            pool.install(|| found.par_iter().map(read).collect::<Result<_, _>>())?
        }
    };
    Ok(InstancePackage::build(Some(catalog.label.clone()), sources, missing))
}

/// Paths present in both instances and the content bytes they account for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapReport {
    pub paths: Vec<String>,
    pub bytes: u64,
}

pub fn overlap(a: &InstancePackage, b: &InstancePackage) -> OverlapReport {
    let mut report = OverlapReport::default();
    for e in a.entries() {
        if b.entry(&e.path).is_some() {
            report.paths.push(e.path.clone());
            if e.kind.has_blob() {
                report.bytes += e.size;
            }
        }
    }
    report
}

/// Boot and application instances from the same filesystem, plus the paths
/// they share.
pub fn instance_pair<S: ByteSource>(
    fs: &FsVolume<S>,
    boot: &Catalog,
    app: &Catalog,
    opts: ExtractOptions,
) -> Result<(InstancePackage, InstancePackage, OverlapReport), FsError> {
    let boot_pkg = extract(fs, boot, opts)?;
    let app_pkg = extract(fs, app, opts)?;
    let report = overlap(&boot_pkg, &app_pkg);
    Ok((boot_pkg, app_pkg, report))
}
