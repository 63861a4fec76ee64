// SPDX-License-Identifier: Apache-2.0

//! File-access catalogs: the lists of guest paths touched during boot or
//! during an application session.
//!
//! The canonical on-disk form is UTF-8, one absolute path per line, `#`
//! comment lines. Raw tracer output can be fed through
//! [`ParseMode::TokenScan`], which keeps every whitespace-free token that
//! starts with `/`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ext2::{FileKind, FsError, FsVolume};
use crate::source::ByteSource;
use crate::units::{percent_of_fs, round2, KIB};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("line {line}: path {path:?} is not absolute")]
    NonAbsolutePath { line: usize, path: String },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("catalog has no entries")]
    EmptyCatalog,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Boot-time catalog.
    Boot,
    /// Application-session catalog.
    App,
    Custom(String),
}

impl Label {
    pub fn as_str(&self) -> &str {
        match self {
            Label::Boot => "boot",
            Label::App => "app",
            Label::Custom(name) => name,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "boot" => Label::Boot,
            "app" => Label::App,
            other => Label::Custom(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// One absolute path per line.
    StrictList,
    /// Every maximal whitespace-free token beginning with `/`.
    TokenScan,
}

/// A sorted, duplicate-free set of normalized absolute paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    pub label: Label,
    pub provenance: String,
    entries: Vec<String>,
}

/// Collapses `.`, `..` and repeated separators without consulting any
/// filesystem. `..` at the root stays at the root.
pub fn normalize_path(path: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for c in path.split('/') {
        match c {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            other => parts.push(other),
        }
    }
    if parts.is_empty() {
        "/".to_string()
    } else {
        parts.iter().fold(String::new(), |acc, p| acc + "/" + p)
    }
}

/// Parent directory of a normalized path; `None` for the root.
pub fn parent_path(path: &str) -> Option<String> {
    if path == "/" {
        return None;
    }
    match path.rfind('/') {
        Some(0) => Some("/".to_string()),
        Some(i) => Some(path[..i].to_string()),
        None => None,
    }
}

impl Catalog {
    /// Builds a catalog from absolute paths, normalizing, sorting and
    /// deduplicating them.
    pub fn new<I, P>(label: Label, provenance: impl Into<String>, paths: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: AsRef<str>,
    {
        let set: BTreeSet<String> = paths.into_iter().map(|p| normalize_path(p.as_ref())).collect();
        Catalog { label, provenance: provenance.into(), entries: set.into_iter().collect() }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.binary_search_by(|e| e.as_str().cmp(path)).is_ok()
    }

    /// Zero entries is legal but usually a mistake upstream; callers decide
    /// whether to warn.
    pub fn check_nonempty(&self) -> Result<(), CatalogError> {
        if self.is_empty() {
            Err(CatalogError::EmptyCatalog)
        } else {
            Ok(())
        }
    }

    /// Canonical text form: one path per line, LF-terminated.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }
}

pub fn parse_catalog(text: &[u8], mode: ParseMode, label: Label, provenance: &str) -> Result<Catalog, CatalogError> {
    let paths = match mode {
        ParseMode::StrictList => strict_paths(text)?,
        ParseMode::TokenScan => scan_tokens(text),
    };
    Ok(Catalog::new(label, provenance, paths))
}

fn strict_paths(text: &[u8]) -> Result<Vec<String>, CatalogError> {
    let mut paths = Vec::new();
    for (i, raw) in text.split(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let line = std::str::from_utf8(raw).map_err(|_| CatalogError::InvalidUtf8 { line: line_no })?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !line.starts_with('/') {
            return Err(CatalogError::NonAbsolutePath { line: line_no, path: line.to_string() });
        }
        paths.push(line.to_string());
    }
    Ok(paths)
}

fn scan_tokens(text: &[u8]) -> Vec<String> {
    let mut paths = Vec::new();
    for chunk in text.utf8_chunks() {
        for token in chunk.valid().split(char::is_whitespace) {
            if token.starts_with('/') {
                paths.push(token.to_string());
            }
        }
    }
    paths
}

pub fn merge_union(a: &Catalog, b: &Catalog) -> Catalog {
    let label = if a.label == b.label { a.label.clone() } else { Label::Custom(format!("{}+{}", a.label, b.label)) };
    let provenance = format!("{}+{}", a.provenance, b.provenance);
    Catalog::new(label, provenance, a.entries.iter().chain(&b.entries))
}

/// Adds every ancestor directory of each entry and, transitively, the target
/// of every symlink entry. Unresolvable entries are kept as they are.
pub fn closure_expand<S: ByteSource>(c: &Catalog, fs: &FsVolume<S>) -> Result<Catalog, FsError> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut work: Vec<String> = c.entries.clone();
    while let Some(path) = work.pop() {
        if !seen.insert(path.clone()) {
            continue;
        }
        if let Some(parent) = parent_path(&path) {
            work.push(parent);
        }
        let inode = match fs.resolve_path(&path) {
            Ok(inode) => inode,
            Err(FsError::NotFound { .. } | FsError::NotADirectory { .. } | FsError::SymlinkLoop { .. }) => continue,
            Err(e) => return Err(e),
        };
        if inode.kind() == FileKind::Symlink {
            let target = fs.read_link(&inode)?;
            let absolute = if target.starts_with('/') {
                target
            } else {
                format!("{}/{target}", parent_path(&path).unwrap_or_else(|| "/".into()))
            };
            work.push(normalize_path(&absolute));
        }
    }
    Ok(Catalog::new(c.label.clone(), c.provenance.clone(), seen))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogStats {
    /// Found entries that are not directories.
    pub file_count: u64,
    pub total_bytes: u64,
    pub total_kib: f64,
    /// Share of the filesystem's used bytes, two decimals.
    pub pct_of_fs: f64,
    pub fs_used_bytes: u64,
    pub missing: Vec<String>,
}

/// Sizes of the catalogued regular files and symlinks against the
/// filesystem's used space. Missing paths are listed and left out of the sums.
pub fn catalog_stats<S: ByteSource>(c: &Catalog, fs: &FsVolume<S>) -> Result<CatalogStats, FsError> {
    let fs_used_bytes = fs.fs_stats()?.used_bytes;
    let mut stats = CatalogStats {
        file_count: 0,
        total_bytes: 0,
        total_kib: 0.0,
        pct_of_fs: 0.0,
        fs_used_bytes,
        missing: Vec::new(),
    };
    for path in &c.entries {
        let inode = match fs.resolve_path(path) {
            Ok(inode) => inode,
            Err(FsError::NotFound { .. } | FsError::NotADirectory { .. } | FsError::SymlinkLoop { .. }) => {
                stats.missing.push(path.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        match inode.kind() {
            FileKind::Directory => {}
            FileKind::Regular | FileKind::Symlink => {
                stats.file_count += 1;
                stats.total_bytes += inode.size;
            }
            FileKind::Other => stats.file_count += 1,
        }
    }
    stats.total_kib = stats.total_bytes as f64 / KIB as f64;
    stats.pct_of_fs = round2(percent_of_fs(stats.total_kib, fs_used_bytes as f64));
    Ok(stats)
}
