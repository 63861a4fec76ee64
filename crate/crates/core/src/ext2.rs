// SPDX-License-Identifier: Apache-2.0

//! Read-only ext2/ext3 reader.
//!
//! The volume is read in place through a [`ByteSource`], so the guest
//! filesystem never has to be mounted on the host. ext3 volumes are read as
//! ext2: the journal is never consulted. ext4-only incompatible features are
//! refused with the offending flag named.
//!
//! File data is addressed through the classic block map: 12 direct pointers
//! followed by single, double and triple indirect blocks of `block_size / 4`
//! pointers each. A zero pointer is a hole and reads as zeros.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::io;

use thiserror::Error;

use crate::source::{read_vec, ByteSource};

pub const EXT2_MAGIC: u16 = 0xEF53;
pub const ROOT_INODE: u32 = 2;
const SUPERBLOCK_OFFSET: u64 = 1024;
const SUPERBLOCK_SIZE: usize = 1024;
const GROUP_DESC_SIZE: usize = 32;
const MAX_SYMLINK_HOPS: usize = 40;
const DIRECT_BLOCKS: usize = 12;
const INLINE_SYMLINK_MAX: u64 = 60;

pub const COMPAT_HAS_JOURNAL: u32 = 0x0004;
pub const INCOMPAT_FILETYPE: u32 = 0x0002;
pub const INCOMPAT_EXTENTS: u32 = 0x0040;
const SUPPORTED_INCOMPAT: u32 = INCOMPAT_FILETYPE;

const INCOMPAT_NAMES: &[(u32, &str)] = &[
    (0x0001, "compression"),
    (0x0004, "needs_recovery"),
    (0x0008, "journal_dev"),
    (0x0010, "meta_bg"),
    (INCOMPAT_EXTENTS, "extents"),
    (0x0080, "64bit"),
    (0x0100, "mmp"),
    (0x0200, "flex_bg"),
    (0x0400, "ea_inode"),
    (0x1000, "dirdata"),
    (0x2000, "metadata_csum_seed"),
    (0x4000, "large_dir"),
    (0x8000, "inline_data"),
    (0x10000, "encrypt"),
    (0x20000, "casefold"),
];

#[derive(Debug, Error)]
pub enum FsError {
    #[error("bad superblock magic {found:#06x}: not an ext2/ext3 filesystem")]
    BadMagic { found: u16 },
    #[error("unsupported filesystem feature: {flag} ({mask:#x})")]
    UnsupportedFeature { flag: &'static str, mask: u32 },
    #[error("corrupt filesystem: {0}")]
    Corrupt(String),
    #[error("{path}: not found ({missing} does not exist)")]
    NotFound { path: String, missing: String },
    #[error("{path}: too many levels of symbolic links")]
    SymlinkLoop { path: String },
    #[error("{path}: {component} is not a directory")]
    NotADirectory { path: String, component: String },
    #[error("inode {0} is a directory")]
    IsADirectory(u32),
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

fn corrupt(msg: impl Into<String>) -> FsError {
    FsError::Corrupt(msg.into())
}

fn le_u16(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn le_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superblock {
    pub inodes_count: u32,
    pub blocks_count: u32,
    pub r_blocks_count: u32,
    pub free_blocks_count: u32,
    pub free_inodes_count: u32,
    pub first_data_block: u32,
    pub log_block_size: u32,
    pub blocks_per_group: u32,
    pub inodes_per_group: u32,
    pub magic: u16,
    pub state: u16,
    pub rev_level: u32,
    pub first_ino: u32,
    pub inode_size: u16,
    pub feature_compat: u32,
    pub feature_incompat: u32,
    pub feature_ro_compat: u32,
    pub uuid: [u8; 16],
    pub volume_name: [u8; 16],
}

impl Superblock {
    fn decode(b: &[u8]) -> Self {
        let rev_level = le_u32(b, 76);
        let (first_ino, inode_size) = if rev_level == 0 { (11, 128) } else { (le_u32(b, 84), le_u16(b, 88)) };
        Superblock {
            inodes_count: le_u32(b, 0),
            blocks_count: le_u32(b, 4),
            r_blocks_count: le_u32(b, 8),
            free_blocks_count: le_u32(b, 12),
            free_inodes_count: le_u32(b, 16),
            first_data_block: le_u32(b, 20),
            log_block_size: le_u32(b, 24),
            blocks_per_group: le_u32(b, 32),
            inodes_per_group: le_u32(b, 40),
            magic: le_u16(b, 56),
            state: le_u16(b, 58),
            rev_level,
            first_ino,
            inode_size,
            feature_compat: if rev_level == 0 { 0 } else { le_u32(b, 92) },
            feature_incompat: if rev_level == 0 { 0 } else { le_u32(b, 96) },
            feature_ro_compat: if rev_level == 0 { 0 } else { le_u32(b, 100) },
            uuid: b[104..120].try_into().unwrap(),
            volume_name: b[120..136].try_into().unwrap(),
        }
    }

    pub fn block_size(&self) -> u32 {
        1024 << self.log_block_size
    }

    /// Number of block groups, counted from the first data block.
    pub fn group_count(&self) -> u32 {
        (self.blocks_count - self.first_data_block).div_ceil(self.blocks_per_group)
    }

    pub fn has_journal(&self) -> bool {
        self.feature_compat & COMPAT_HAS_JOURNAL != 0
    }

    pub fn volume_name(&self) -> String {
        let end = self.volume_name.iter().position(|&b| b == 0).unwrap_or(16);
        String::from_utf8_lossy(&self.volume_name[..end]).into_owned()
    }

    fn validate(&self, volume_len: u64) -> Result<(), FsError> {
        if self.magic != EXT2_MAGIC {
            return Err(FsError::BadMagic { found: self.magic });
        }
        if self.rev_level > 1 {
            return Err(corrupt(format!("unknown revision level {}", self.rev_level)));
        }
        if self.log_block_size > 2 {
            return Err(corrupt(format!("block size 1024 << {} not in 1024/2048/4096", self.log_block_size)));
        }
        let unsupported = self.feature_incompat & !SUPPORTED_INCOMPAT;
        if unsupported != 0 {
            let mask = 1 << unsupported.trailing_zeros();
            let flag = INCOMPAT_NAMES
                .iter()
                .find(|(bit, _)| *bit == mask)
                .map_or("unknown incompat flag", |(_, name)| name);
            return Err(FsError::UnsupportedFeature { flag, mask });
        }
        if self.free_blocks_count > self.blocks_count {
            return Err(corrupt(format!(
                "free_blocks_count {} exceeds blocks_count {}",
                self.free_blocks_count, self.blocks_count
            )));
        }
        let expected_first = if self.block_size() == 1024 { 1 } else { 0 };
        if self.first_data_block != expected_first {
            return Err(corrupt(format!("first_data_block {} for {}-byte blocks", self.first_data_block, self.block_size())));
        }
        if self.blocks_count <= self.first_data_block {
            return Err(corrupt(format!("blocks_count {}", self.blocks_count)));
        }
        if self.blocks_per_group == 0 || self.inodes_per_group == 0 {
            return Err(corrupt("zero blocks or inodes per group"));
        }
        let size = self.inode_size as u32;
        if size < 128 || !size.is_power_of_two() || size > self.block_size() {
            return Err(corrupt(format!("inode size {size}")));
        }
        if self.inodes_count < ROOT_INODE || self.inodes_count as u64 > self.group_count() as u64 * self.inodes_per_group as u64 {
            return Err(corrupt(format!("inodes_count {}", self.inodes_count)));
        }
        let needed = self.blocks_count as u64 * self.block_size() as u64;
        if needed > volume_len {
            return Err(corrupt(format!("filesystem needs {needed} bytes but the volume has {volume_len}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupDescriptor {
    pub block_bitmap: u32,
    pub inode_bitmap: u32,
    pub inode_table: u32,
    pub free_blocks_count: u16,
    pub free_inodes_count: u16,
    pub used_dirs_count: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FileKind {
    Regular,
    Directory,
    Symlink,
    /// Devices, fifos and sockets.
    Other,
}

impl FileKind {
    fn from_mode(mode: u16) -> Self {
        match mode & 0xF000 {
            0x8000 => FileKind::Regular,
            0x4000 => FileKind::Directory,
            0xA000 => FileKind::Symlink,
            _ => FileKind::Other,
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileKind::Regular => "file",
            FileKind::Directory => "dir",
            FileKind::Symlink => "symlink",
            FileKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inode {
    pub number: u32,
    pub mode: u16,
    pub size: u64,
    pub links_count: u16,
    /// Allocated 512-byte units, including indirect and xattr blocks.
    pub blocks_512: u32,
    pub flags: u32,
    pub block: [u32; 15],
    pub file_acl: u32,
}

impl Inode {
    pub fn kind(&self) -> FileKind {
        FileKind::from_mode(self.mode)
    }

    pub fn permissions(&self) -> u32 {
        (self.mode & 0o7777) as u32
    }

    pub fn disk_usage(&self) -> u64 {
        self.blocks_512 as u64 * 512
    }

    fn is_fast_symlink(&self, block_size: u32) -> bool {
        let xattr_sectors = if self.file_acl != 0 { block_size / 512 } else { 0 };
        self.kind() == FileKind::Symlink
            && self.size < INLINE_SYMLINK_MAX
            && self.blocks_512.saturating_sub(xattr_sectors) == 0
    }

    fn inline_bytes(&self) -> Vec<u8> {
        self.block.iter().flat_map(|p| p.to_le_bytes()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirEntry {
    pub name: Vec<u8>,
    pub inode: u32,
}

/// One node of a tree walk. Hardlinked inodes appear once per path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkEntry {
    pub path: String,
    pub inode: u32,
    pub kind: FileKind,
    pub size: u64,
    pub disk_usage: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FsStats {
    /// Allocated blocks by superblock accounting, in bytes.
    pub used_bytes: u64,
    pub total_bytes: u64,
    pub file_count: u64,
    pub dir_count: u64,
    pub symlink_count: u64,
    pub other_count: u64,
    /// Sum of regular file and symlink sizes, each inode counted once.
    pub content_bytes: u64,
    /// Sum of per-inode allocations seen by the tree walk, each inode counted once.
    pub disk_usage_bytes: u64,
}

/// An open ext2/ext3 volume. Immutable; safe to share across threads.
#[derive(Debug)]
pub struct FsVolume<S> {
    volume: S,
    superblock: Superblock,
    groups: Vec<GroupDescriptor>,
}

/// Opens the filesystem whose superblock sits at byte 1024 of `volume`.
pub fn open_fs<S: ByteSource>(volume: S) -> Result<FsVolume<S>, FsError> {
    let len = volume.size();
    if len < SUPERBLOCK_OFFSET + SUPERBLOCK_SIZE as u64 {
        return Err(corrupt(format!("volume of {len} bytes is too small for a superblock")));
    }
    let superblock = Superblock::decode(&read_vec(&volume, SUPERBLOCK_OFFSET, SUPERBLOCK_SIZE)?);
    superblock.validate(len)?;

    let block_size = superblock.block_size() as u64;
    let group_count = superblock.group_count() as usize;
    let table = read_vec(&volume, (superblock.first_data_block as u64 + 1) * block_size, group_count * GROUP_DESC_SIZE)?;
    let mut groups = Vec::with_capacity(group_count);
    for (i, d) in table.chunks_exact(GROUP_DESC_SIZE).enumerate() {
        let desc = GroupDescriptor {
            block_bitmap: le_u32(d, 0),
            inode_bitmap: le_u32(d, 4),
            inode_table: le_u32(d, 8),
            free_blocks_count: le_u16(d, 12),
            free_inodes_count: le_u16(d, 14),
            used_dirs_count: le_u16(d, 16),
        };
        let table_blocks = (superblock.inodes_per_group as u64 * superblock.inode_size as u64).div_ceil(block_size);
        if desc.inode_table as u64 + table_blocks > superblock.blocks_count as u64 || desc.inode_table == 0 {
            return Err(corrupt(format!("group {i}: inode table at block {} out of volume", desc.inode_table)));
        }
        groups.push(desc);
    }

    let fs = FsVolume { volume, superblock, groups };
    if fs.read_inode(ROOT_INODE)?.kind() != FileKind::Directory {
        return Err(corrupt("root inode is not a directory"));
    }
    Ok(fs)
}

/// Per-read cache of the most recently loaded pointer block at each level.
#[derive(Default)]
struct PointerCache {
    levels: [Option<(u32, Vec<u32>)>; 3],
}

impl<S: ByteSource> FsVolume<S> {
    pub fn superblock(&self) -> &Superblock {
        &self.superblock
    }

    pub fn groups(&self) -> &[GroupDescriptor] {
        &self.groups
    }

    pub fn block_size(&self) -> u32 {
        self.superblock.block_size()
    }

    pub fn volume(&self) -> &S {
        &self.volume
    }

    pub fn read_inode(&self, number: u32) -> Result<Inode, FsError> {
        let sb = &self.superblock;
        if number == 0 || number > sb.inodes_count {
            return Err(corrupt(format!("inode number {number} out of range 1..={}", sb.inodes_count)));
        }
        let group = ((number - 1) / sb.inodes_per_group) as usize;
        let index = ((number - 1) % sb.inodes_per_group) as u64;
        let offset = self.groups[group].inode_table as u64 * sb.block_size() as u64 + index * sb.inode_size as u64;
        let b = read_vec(&self.volume, offset, 128)?;
        let mode = le_u16(&b, 0);
        let mut size = le_u32(&b, 4) as u64;
        if FileKind::from_mode(mode) == FileKind::Regular && sb.rev_level > 0 {
            size |= (le_u32(&b, 108) as u64) << 32;
        }
        let mut block = [0u32; 15];
        for (i, p) in block.iter_mut().enumerate() {
            *p = le_u32(&b, 40 + 4 * i);
        }
        Ok(Inode {
            number,
            mode,
            size,
            links_count: le_u16(&b, 26),
            blocks_512: le_u32(&b, 28),
            flags: le_u32(&b, 32),
            block,
            file_acl: le_u32(&b, 104),
        })
    }

    fn pointers_per_block(&self) -> u64 {
        self.block_size() as u64 / 4
    }

    /// Largest byte size addressable through the block map.
    fn max_file_size(&self) -> u64 {
        let p = self.pointers_per_block();
        (DIRECT_BLOCKS as u64 + p + p * p + p * p * p) * self.block_size() as u64
    }

    fn check_block(&self, block: u32, inode: &Inode) -> Result<(), FsError> {
        if block >= self.superblock.blocks_count {
            return Err(corrupt(format!(
                "inode {}: block pointer {block} out of volume ({} blocks)",
                inode.number, self.superblock.blocks_count
            )));
        }
        Ok(())
    }

    fn pointer_at(&self, inode: &Inode, cache: &mut PointerCache, level: usize, block: u32, index: u64) -> Result<u32, FsError> {
        if block == 0 {
            return Ok(0);
        }
        self.check_block(block, inode)?;
        let slot = &mut cache.levels[level];
        if slot.as_ref().map(|(b, _)| *b) != Some(block) {
            let raw = read_vec(&self.volume, block as u64 * self.block_size() as u64, self.block_size() as usize)?;
            *slot = Some((block, raw.chunks_exact(4).map(|c| le_u32(c, 0)).collect()));
        }
        Ok(slot.as_ref().unwrap().1[index as usize])
    }

    /// Physical block holding logical block `n` of `inode`; 0 for a hole.
    fn map_block(&self, inode: &Inode, cache: &mut PointerCache, n: u64) -> Result<u32, FsError> {
        let p = self.pointers_per_block();
        let direct = DIRECT_BLOCKS as u64;
        let phys = if n < direct {
            inode.block[n as usize]
        } else if n < direct + p {
            self.pointer_at(inode, cache, 0, inode.block[12], n - direct)?
        } else if n < direct + p + p * p {
            let rel = n - direct - p;
            let l1 = self.pointer_at(inode, cache, 1, inode.block[13], rel / p)?;
            self.pointer_at(inode, cache, 0, l1, rel % p)?
        } else if n < direct + p + p * p + p * p * p {
            let rel = n - direct - p - p * p;
            let l2 = self.pointer_at(inode, cache, 2, inode.block[14], rel / (p * p))?;
            let l1 = self.pointer_at(inode, cache, 1, l2, (rel / p) % p)?;
            self.pointer_at(inode, cache, 0, l1, rel % p)?
        } else {
            return Err(corrupt(format!("inode {}: logical block {n} beyond triple indirect range", inode.number)));
        };
        if phys != 0 {
            self.check_block(phys, inode)?;
        }
        Ok(phys)
    }

    /// Reads `buf.len()` bytes of inode data starting at `offset`.
    pub fn read_range(&self, inode: &Inode, offset: u64, buf: &mut [u8]) -> Result<(), FsError> {
        if offset.checked_add(buf.len() as u64).is_none_or(|end| end > inode.size) {
            return Err(corrupt(format!(
                "inode {}: read of {} bytes at {offset} past size {}",
                inode.number,
                buf.len(),
                inode.size
            )));
        }
        if inode.is_fast_symlink(self.block_size()) {
            let inline = inode.inline_bytes();
            buf.copy_from_slice(&inline[offset as usize..offset as usize + buf.len()]);
            return Ok(());
        }
        let bs = self.block_size() as u64;
        let mut cache = PointerCache::default();
        let mut done = 0usize;
        while done < buf.len() {
            let pos = offset + done as u64;
            let within = pos % bs;
            let n = ((bs - within) as usize).min(buf.len() - done);
            let chunk = &mut buf[done..done + n];
            match self.map_block(inode, &mut cache, pos / bs)? {
                0 => chunk.fill(0),
                phys => self.volume.read_at(phys as u64 * bs + within, chunk)?,
            }
            done += n;
        }
        Ok(())
    }

    /// Full contents of a regular file, or the target bytes of a symlink.
    /// Special files read as empty.
    pub fn read_file(&self, inode: &Inode) -> Result<Vec<u8>, FsError> {
        match inode.kind() {
            FileKind::Directory => return Err(FsError::IsADirectory(inode.number)),
            FileKind::Other => return Ok(Vec::new()),
            FileKind::Regular | FileKind::Symlink => {}
        }
        if inode.size > self.max_file_size() {
            return Err(corrupt(format!("inode {}: size {} exceeds the block map", inode.number, inode.size)));
        }
        let len = usize::try_from(inode.size).map_err(|_| corrupt("file too large for memory"))?;
        let mut buf = vec![0u8; len];
        self.read_range(inode, 0, &mut buf)?;
        Ok(buf)
    }

    pub fn read_link(&self, inode: &Inode) -> Result<String, FsError> {
        let bytes = self.read_file(inode)?;
        String::from_utf8(bytes).map_err(|_| corrupt(format!("inode {}: symlink target is not UTF-8", inode.number)))
    }

    pub fn read_dir(&self, dir: &Inode) -> Result<Vec<DirEntry>, FsError> {
        if dir.kind() != FileKind::Directory {
            return Err(corrupt(format!("inode {} is not a directory", dir.number)));
        }
        let bs = self.block_size() as usize;
        let size = dir.size as usize;
        if !size.is_multiple_of(bs) || dir.size > self.superblock.blocks_count as u64 * bs as u64 {
            return Err(corrupt(format!("directory inode {} has size {}", dir.number, dir.size)));
        }
        let filetype = self.superblock.feature_incompat & INCOMPAT_FILETYPE != 0;
        let mut data = vec![0u8; size];
        self.read_range(dir, 0, &mut data)?;
        let mut entries = Vec::new();
        for block in data.chunks_exact(bs) {
            let mut pos = 0usize;
            while pos < bs {
                if pos + 8 > bs {
                    return Err(corrupt(format!("directory inode {}: truncated entry", dir.number)));
                }
                let inode = le_u32(block, pos);
                let rec_len = le_u16(block, pos + 4) as usize;
                let name_len = if filetype { block[pos + 6] as usize } else { le_u16(block, pos + 6) as usize };
                if rec_len < 8 || !rec_len.is_multiple_of(4) || pos + rec_len > bs || 8 + name_len > rec_len {
                    return Err(corrupt(format!(
                        "directory inode {}: bad entry (rec_len {rec_len}, name_len {name_len})",
                        dir.number
                    )));
                }
                if inode != 0 {
                    entries.push(DirEntry { name: block[pos + 8..pos + 8 + name_len].to_vec(), inode });
                }
                pos += rec_len;
            }
        }
        Ok(entries)
    }

    fn lookup(&self, dir: &Inode, name: &[u8]) -> Result<Option<u32>, FsError> {
        Ok(self.read_dir(dir)?.into_iter().find(|e| e.name == name).map(|e| e.inode))
    }

    /// Resolves an absolute path. Symlinks in intermediate components are
    /// followed; a symlink in the final component is returned as itself.
    pub fn resolve_path(&self, path: &str) -> Result<Inode, FsError> {
        if !path.starts_with('/') {
            return Err(FsError::NotFound { path: path.to_string(), missing: path.to_string() });
        }
        let mut pending: VecDeque<String> = components(path).map(str::to_string).collect();
        // Directories from the root down to the current position.
        let mut stack = vec![self.read_inode(ROOT_INODE)?];
        let mut names: Vec<String> = Vec::new();
        let mut hops = 0usize;
        while let Some(name) = pending.pop_front() {
            if name == ".." {
                if stack.len() > 1 {
                    stack.pop();
                    names.pop();
                }
                continue;
            }
            let current = stack.last().unwrap();
            let here = display_path(&names);
            if current.kind() != FileKind::Directory {
                return Err(FsError::NotADirectory { path: path.to_string(), component: here });
            }
            let Some(number) = self.lookup(current, name.as_bytes())? else {
                let missing = if names.is_empty() { format!("/{name}") } else { format!("{here}/{name}") };
                return Err(FsError::NotFound { path: path.to_string(), missing });
            };
            let child = self.read_inode(number)?;
            if child.kind() == FileKind::Symlink && !pending.is_empty() {
                hops += 1;
                if hops > MAX_SYMLINK_HOPS {
                    return Err(FsError::SymlinkLoop { path: path.to_string() });
                }
                let target = self.read_link(&child)?;
                if target.starts_with('/') {
                    stack.truncate(1);
                    names.clear();
                }
                for c in components(&target).rev() {
                    pending.push_front(c.to_string());
                }
                continue;
            }
            stack.push(child);
            names.push(name);
        }
        Ok(stack.pop().unwrap())
    }

    /// Depth-first walk from the root, siblings in byte order of their names.
    pub fn walk_tree(&self) -> Walk<'_, S> {
        Walk { fs: self, stack: vec![("/".to_string(), ROOT_INODE)], visited_dirs: HashSet::new() }
    }

    pub fn fs_stats(&self) -> Result<FsStats, FsError> {
        let sb = &self.superblock;
        let bs = sb.block_size() as u64;
        let mut stats = FsStats {
            used_bytes: (sb.blocks_count - sb.free_blocks_count) as u64 * bs,
            total_bytes: sb.blocks_count as u64 * bs,
            ..FsStats::default()
        };
        let mut seen = HashSet::new();
        for entry in self.walk_tree() {
            let entry = entry?;
            if !seen.insert(entry.inode) {
                continue;
            }
            match entry.kind {
                FileKind::Regular => stats.file_count += 1,
                FileKind::Directory => stats.dir_count += 1,
                FileKind::Symlink => stats.symlink_count += 1,
                FileKind::Other => stats.other_count += 1,
            }
            if matches!(entry.kind, FileKind::Regular | FileKind::Symlink) {
                stats.content_bytes += entry.size;
            }
            stats.disk_usage_bytes += entry.disk_usage;
        }
        Ok(stats)
    }
}

fn components(path: &str) -> impl DoubleEndedIterator<Item = &str> {
    path.split('/').filter(|c| !c.is_empty() && *c != ".")
}

fn display_path(names: &[String]) -> String {
    if names.is_empty() {
        "/".to_string()
    } else {
        names.iter().fold(String::new(), |acc, n| acc + "/" + n)
    }
}

fn join(parent: &str, name: &str) -> String {
    if parent == "/" {
        format!("/{name}")
    } else {
        format!("{parent}/{name}")
    }
}

/// Lazy depth-first iterator returned by [`FsVolume::walk_tree`].
pub struct Walk<'a, S> {
    fs: &'a FsVolume<S>,
    stack: Vec<(String, u32)>,
    visited_dirs: HashSet<u32>,
}

impl<S: ByteSource> Walk<'_, S> {
    fn visit(&mut self, path: String, number: u32) -> Result<WalkEntry, FsError> {
        let inode = self.fs.read_inode(number)?;
        let kind = inode.kind();
        if kind == FileKind::Directory {
            if !self.visited_dirs.insert(number) {
                return Err(corrupt(format!("{path}: directory inode {number} reachable twice")));
            }
            let mut children: Vec<_> = self
                .fs
                .read_dir(&inode)?
                .into_iter()
                .filter(|e| e.name != b"." && e.name != b"..")
                .collect();
            children.sort_by(|a, b| b.name.cmp(&a.name));
            for child in children {
                let name = String::from_utf8_lossy(&child.name).into_owned();
                self.stack.push((join(&path, &name), child.inode));
            }
        }
        Ok(WalkEntry { path, inode: number, kind, size: inode.size, disk_usage: inode.disk_usage() })
    }
}

impl<S: ByteSource> Iterator for Walk<'_, S> {
    type Item = Result<WalkEntry, FsError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (path, number) = self.stack.pop()?;
        let result = self.visit(path, number);
        if result.is_err() {
            self.stack.clear();
        }
        Some(result)
    }
}
