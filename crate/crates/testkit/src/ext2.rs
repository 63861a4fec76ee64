// SPDX-License-Identifier: Apache-2.0

//! A small ext2 image writer used to produce reader fixtures.
//!
//! Written from the on-disk format description, independently of the
//! reader under test. Produces rev 1 images (or rev 0 on request) with
//! sparse_super, filetype directory entries, multi-group layouts, indirect
//! blocks up to triple, fast and slow symlinks, hardlinks, holes and
//! special files. Images built here mount with the kernel's ext2 driver.

use std::collections::{BTreeMap, HashMap};

pub const COMPAT_HAS_JOURNAL: u32 = 0x4;
pub const INCOMPAT_FILETYPE: u32 = 0x2;
pub const INCOMPAT_EXTENTS: u32 = 0x40;
const RO_COMPAT_SPARSE_SUPER: u32 = 0x1;
const RO_COMPAT_LARGE_FILE: u32 = 0x2;
const TIMESTAMP: u32 = 1_300_000_000;

/// File contents as a size plus the byte runs that are actually stored.
/// Blocks not touched by any run are holes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileData {
    pub size: u64,
    pub runs: Vec<(u64, Vec<u8>)>,
}

impl FileData {
    pub fn dense(bytes: Vec<u8>) -> Self {
        FileData { size: bytes.len() as u64, runs: vec![(0, bytes)] }
    }

    /// Every byte of the file, holes as zeros.
    pub fn materialize(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.size as usize];
        for (off, run) in &self.runs {
            out[*off as usize..*off as usize + run.len()].copy_from_slice(run);
        }
        out
    }

    /// Bytes of the range `[start, start + len)`.
    pub fn range(&self, start: u64, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        let end = start + len as u64;
        for (off, run) in &self.runs {
            let run_end = off + run.len() as u64;
            let lo = start.max(*off);
            let hi = end.min(run_end);
            if lo < hi {
                out[(lo - start) as usize..(hi - start) as usize]
                    .copy_from_slice(&run[(lo - off) as usize..(hi - off) as usize]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Dir { mode: u16 },
    File { mode: u16, data: FileData },
    Symlink { target: String },
    /// Another name for an existing regular file.
    HardLink { target: String },
    /// Character device (`mode` includes the type bits) or fifo.
    Special { mode: u16, rdev: u32 },
}

/// What the reader should observe at a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expected {
    pub inode: u32,
    pub kind: ExpectedKind,
    pub mode: u16,
    pub size: u64,
    pub disk_usage: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpectedKind {
    Dir,
    File(FileData),
    Symlink(String),
    Special,
}

impl Expected {
    /// Full content for files, target bytes for symlinks, empty otherwise.
    pub fn content(&self) -> Vec<u8> {
        match &self.kind {
            ExpectedKind::File(data) => data.materialize(),
            ExpectedKind::Symlink(t) => t.as_bytes().to_vec(),
            _ => Vec::new(),
        }
    }
}

pub struct BuiltImage {
    pub bytes: Vec<u8>,
    pub block_size: u32,
    pub blocks_count: u32,
    /// Counted from the block bitmaps written.
    pub used_blocks: u32,
    pub free_blocks: u32,
    /// Every path, including `/` and `/lost+found`.
    pub tree: BTreeMap<String, Expected>,
}

impl BuiltImage {
    pub fn used_bytes(&self) -> u64 {
        self.used_blocks as u64 * self.block_size as u64
    }
}

#[derive(Debug, Clone)]
pub struct Ext2Builder {
    block_size: u32,
    blocks_count: u32,
    inodes_wanted: u32,
    inode_size: u16,
    rev0: bool,
    compat: u32,
    incompat: u32,
    journal_blocks: u32,
    nodes: BTreeMap<String, Node>,
}

fn parent_of(path: &str) -> &str {
    match path.rfind('/') {
        Some(0) => "/",
        Some(i) => &path[..i],
        None => "/",
    }
}

fn name_of(path: &str) -> &str {
    &path[path.rfind('/').map_or(0, |i| i + 1)..]
}

impl Ext2Builder {
    pub fn new(block_size: u32, blocks_count: u32) -> Self {
        assert!(matches!(block_size, 1024 | 2048 | 4096));
        let mut nodes = BTreeMap::new();
        nodes.insert("/".to_string(), Node::Dir { mode: 0o755 });
        nodes.insert("/lost+found".to_string(), Node::Dir { mode: 0o700 });
        Ext2Builder {
            block_size,
            blocks_count,
            inodes_wanted: (blocks_count / 8).max(64),
            inode_size: 256,
            rev0: false,
            compat: 0,
            incompat: INCOMPAT_FILETYPE,
            journal_blocks: 0,
            nodes,
        }
    }

    pub fn inodes(mut self, n: u32) -> Self {
        self.inodes_wanted = n;
        self
    }

    pub fn inode_size(mut self, size: u16) -> Self {
        self.inode_size = size;
        self
    }

    /// Revision 0: 128-byte inodes, no feature flags, 16-bit name lengths.
    pub fn rev0(mut self) -> Self {
        self.rev0 = true;
        self.inode_size = 128;
        self.incompat = 0;
        self
    }

    /// ext3-style: sets has_journal and allocates a journal inode whose
    /// blocks are filled with a marker pattern.
    pub fn with_journal(mut self, blocks: u32) -> Self {
        self.compat |= COMPAT_HAS_JOURNAL;
        self.journal_blocks = blocks;
        self
    }

    pub fn incompat(mut self, mask: u32) -> Self {
        self.incompat |= mask;
        self
    }

    fn ensure_parents(&mut self, path: &str) {
        let parent = parent_of(path).to_string();
        if !self.nodes.contains_key(&parent) {
            self.ensure_parents(&parent);
            self.nodes.insert(parent, Node::Dir { mode: 0o755 });
        }
    }

    fn insert(&mut self, path: &str, node: Node) {
        assert!(path.starts_with('/') && path.len() > 1, "bad path {path}");
        self.ensure_parents(path);
        self.nodes.insert(path.to_string(), node);
    }

    pub fn dir(mut self, path: &str) -> Self {
        self.insert(path, Node::Dir { mode: 0o755 });
        self
    }

    pub fn file(mut self, path: &str, bytes: impl Into<Vec<u8>>) -> Self {
        self.insert(path, Node::File { mode: 0o644, data: FileData::dense(bytes.into()) });
        self
    }

    pub fn file_mode(mut self, path: &str, mode: u16, bytes: impl Into<Vec<u8>>) -> Self {
        self.insert(path, Node::File { mode, data: FileData::dense(bytes.into()) });
        self
    }

    pub fn sparse_file(mut self, path: &str, size: u64, runs: Vec<(u64, Vec<u8>)>) -> Self {
        self.insert(path, Node::File { mode: 0o644, data: FileData { size, runs } });
        self
    }

    pub fn symlink(mut self, path: &str, target: &str) -> Self {
        self.insert(path, Node::Symlink { target: target.to_string() });
        self
    }

    pub fn hardlink(mut self, path: &str, existing: &str) -> Self {
        self.insert(path, Node::HardLink { target: existing.to_string() });
        self
    }

    pub fn char_device(mut self, path: &str, major: u8, minor: u8) -> Self {
        self.insert(path, Node::Special { mode: 0o020666, rdev: (major as u32) << 8 | minor as u32 });
        self
    }

    pub fn fifo(mut self, path: &str) -> Self {
        self.insert(path, Node::Special { mode: 0o010644, rdev: 0 });
        self
    }

    pub fn build(&self) -> BuiltImage {
        Layout::new(self).write(self)
    }
}

fn has_super(group: u32) -> bool {
    if group <= 1 {
        return true;
    }
    [3u32, 5, 7].iter().any(|&base| {
        let mut n = base;
        while n < group {
            n *= base;
        }
        n == group
    })
}

struct Group {
    start: u32,
    len: u32,
    block_bitmap: u32,
    inode_bitmap: u32,
    inode_table: u32,
}

struct Layout {
    bs: u32,
    first_data_block: u32,
    blocks_per_group: u32,
    inodes_per_group: u32,
    inode_size: u32,
    groups: Vec<Group>,
    used: Vec<bool>,
    cursor: u32,
    image: Vec<u8>,
}

/// Inode fields the writer fills in.
#[derive(Default, Clone)]
struct RawInode {
    mode: u16,
    size: u64,
    links: u16,
    blocks_512: u32,
    block: [u32; 15],
}

impl Layout {
    fn new(b: &Ext2Builder) -> Self {
        let bs = b.block_size;
        let first_data_block = u32::from(bs == 1024);
        let blocks_per_group = 8 * bs;
        let group_count = (b.blocks_count - first_data_block).div_ceil(blocks_per_group);
        let per_block = bs / b.inode_size as u32;
        let inodes_per_group = b.inodes_wanted.div_ceil(group_count).next_multiple_of(per_block).max(per_block);
        assert!(inodes_per_group <= 8 * bs);
        let gdt_blocks = (group_count * 32).div_ceil(bs);
        let table_blocks = inodes_per_group * b.inode_size as u32 / bs;
        let mut used = vec![false; b.blocks_count as usize];
        for u in used.iter_mut().take(first_data_block as usize) {
            *u = true;
        }
        let mut groups = Vec::new();
        for g in 0..group_count {
            let start = first_data_block + g * blocks_per_group;
            let len = blocks_per_group.min(b.blocks_count - start);
            let mut next = start;
            if has_super(g) {
                next += 1 + gdt_blocks;
            }
            let group = Group {
                start,
                len,
                block_bitmap: next,
                inode_bitmap: next + 1,
                inode_table: next + 2,
            };
            let meta_end = next + 2 + table_blocks;
            assert!(meta_end <= start + len, "group {g} too small for its metadata");
            for blk in start..meta_end {
                used[blk as usize] = true;
            }
            groups.push(group);
        }
        Layout {
            bs,
            first_data_block,
            blocks_per_group,
            inodes_per_group,
            inode_size: b.inode_size as u32,
            groups,
            used,
            cursor: 0,
            image: vec![0u8; b.blocks_count as usize * bs as usize],
        }
    }

    fn alloc(&mut self) -> u32 {
        while self.used[self.cursor as usize] {
            self.cursor += 1;
            assert!((self.cursor as usize) < self.used.len(), "image full");
        }
        self.used[self.cursor as usize] = true;
        self.cursor
    }

    fn block_mut(&mut self, blk: u32) -> &mut [u8] {
        let bs = self.bs as usize;
        &mut self.image[blk as usize * bs..(blk as usize + 1) * bs]
    }

    /// Stores data blocks (`None` = hole) and builds the pointer tree.
    /// Returns the block array and the number of blocks used.
    fn store(&mut self, blocks: &[Option<Vec<u8>>]) -> ([u32; 15], u32) {
        let p = (self.bs / 4) as u64;
        let mut block = [0u32; 15];
        let mut pointer_blocks: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut count = 0u32;

        fn child(
            layout: &mut Layout,
            tables: &mut HashMap<u32, Vec<u32>>,
            count: &mut u32,
            parent: u32,
            index: usize,
            p: u64,
        ) -> u32 {
            let existing = tables.get(&parent).unwrap()[index];
            if existing != 0 {
                return existing;
            }
            let blk = layout.alloc();
            *count += 1;
            tables.insert(blk, vec![0; p as usize]);
            tables.get_mut(&parent).unwrap()[index] = blk;
            blk
        }

        for (n, data) in blocks.iter().enumerate() {
            let Some(data) = data else { continue };
            let n = n as u64;
            // Indirect blocks are allocated before the data they point to.
            let slot: (u32, usize) = if n < 12 {
                (0, n as usize)
            } else {
                let (root_idx, depth, rel) = if n < 12 + p {
                    (12, 1, n - 12)
                } else if n < 12 + p + p * p {
                    (13, 2, n - 12 - p)
                } else {
                    (14, 3, n - 12 - p - p * p)
                };
                if block[root_idx] == 0 {
                    let blk = self.alloc();
                    count += 1;
                    pointer_blocks.insert(blk, vec![0; p as usize]);
                    block[root_idx] = blk;
                }
                let mut table = block[root_idx];
                for level in (1..depth).rev() {
                    let idx = ((rel / p.pow(level)) % p) as usize;
                    table = child(self, &mut pointer_blocks, &mut count, table, idx, p);
                }
                (table, (rel % p) as usize)
            };
            let phys = self.alloc();
            count += 1;
            self.block_mut(phys)[..data.len()].copy_from_slice(data);
            if slot.0 == 0 {
                block[slot.1] = phys;
            } else {
                pointer_blocks.get_mut(&slot.0).unwrap()[slot.1] = phys;
            }
        }
        for (blk, ptrs) in pointer_blocks {
            let buf = self.block_mut(blk);
            for (i, ptr) in ptrs.iter().enumerate() {
                buf[4 * i..4 * i + 4].copy_from_slice(&ptr.to_le_bytes());
            }
        }
        (block, count)
    }

    fn file_blocks(&self, data: &FileData) -> Vec<Option<Vec<u8>>> {
        let bs = self.bs as u64;
        let n = data.size.div_ceil(bs) as usize;
        let mut touched = vec![false; n];
        for (off, run) in &data.runs {
            if run.is_empty() {
                continue;
            }
            let first = off / bs;
            let last = (off + run.len() as u64 - 1) / bs;
            for b in first..=last {
                touched[b as usize] = true;
            }
        }
        touched
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                t.then(|| {
                    let start = i as u64 * bs;
                    let len = bs.min(data.size - start) as usize;
                    data.range(start, len)
                })
            })
            .collect()
    }

    fn dir_blocks(&self, entries: &[(Vec<u8>, u32, u8)], filetype: bool) -> Vec<Option<Vec<u8>>> {
        let bs = self.bs as usize;
        let mut blocks = Vec::new();
        let mut cur = vec![0u8; bs];
        let mut pos = 0usize;
        let mut last_start: Option<usize> = None;
        for (name, ino, ftype) in entries {
            let rec = (8 + name.len()).next_multiple_of(4);
            if pos + rec > bs {
                let ls = last_start.unwrap();
                let extended = (bs - ls) as u16;
                cur[ls + 4..ls + 6].copy_from_slice(&extended.to_le_bytes());
                blocks.push(Some(std::mem::replace(&mut cur, vec![0u8; bs])));
                pos = 0;
            }
            cur[pos..pos + 4].copy_from_slice(&ino.to_le_bytes());
            cur[pos + 4..pos + 6].copy_from_slice(&(rec as u16).to_le_bytes());
            if filetype {
                cur[pos + 6] = name.len() as u8;
                cur[pos + 7] = *ftype;
            } else {
                cur[pos + 6..pos + 8].copy_from_slice(&(name.len() as u16).to_le_bytes());
            }
            cur[pos + 8..pos + 8 + name.len()].copy_from_slice(name);
            last_start = Some(pos);
            pos += rec;
        }
        let ls = last_start.unwrap();
        cur[ls + 4..ls + 6].copy_from_slice(&((bs - ls) as u16).to_le_bytes());
        blocks.push(Some(cur));
        blocks
    }

    fn write_inode(&mut self, number: u32, raw: &RawInode) {
        let group = ((number - 1) / self.inodes_per_group) as usize;
        let index = (number - 1) % self.inodes_per_group;
        let off = self.groups[group].inode_table as usize * self.bs as usize + (index * self.inode_size) as usize;
        let b = &mut self.image[off..off + 128];
        b[0..2].copy_from_slice(&raw.mode.to_le_bytes());
        b[4..8].copy_from_slice(&(raw.size as u32).to_le_bytes());
        for t in [8, 12, 16] {
            b[t..t + 4].copy_from_slice(&TIMESTAMP.to_le_bytes());
        }
        b[26..28].copy_from_slice(&raw.links.to_le_bytes());
        b[28..32].copy_from_slice(&raw.blocks_512.to_le_bytes());
        for (i, p) in raw.block.iter().enumerate() {
            b[40 + 4 * i..44 + 4 * i].copy_from_slice(&p.to_le_bytes());
        }
        if raw.mode & 0xF000 == 0x8000 {
            b[108..112].copy_from_slice(&((raw.size >> 32) as u32).to_le_bytes());
        }
    }

    fn write(mut self, b: &Ext2Builder) -> BuiltImage {
        let filetype = b.incompat & INCOMPAT_FILETYPE != 0;
        let inodes_count = self.inodes_per_group * self.groups.len() as u32;
        let sectors_per_block = self.bs / 512;

        // Inode numbers: root 2, lost+found 11, the rest in path order.
        let mut numbers: BTreeMap<String, u32> = BTreeMap::new();
        numbers.insert("/".into(), 2);
        numbers.insert("/lost+found".into(), 11);
        let mut next = 12;
        for (path, node) in &b.nodes {
            if numbers.contains_key(path) || matches!(node, Node::HardLink { .. }) {
                continue;
            }
            numbers.insert(path.clone(), next);
            next += 1;
        }
        for (path, node) in &b.nodes {
            if let Node::HardLink { target } = node {
                assert!(matches!(b.nodes.get(target), Some(Node::File { .. })), "hardlink to non-file {target}");
                numbers.insert(path.clone(), numbers[target]);
            }
        }
        assert!(next <= inodes_count + 1, "not enough inodes");

        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for path in b.nodes.keys().filter(|p| p.as_str() != "/") {
            children.entry(parent_of(path)).or_default().push(path);
        }
        let mut link_counts: HashMap<u32, u16> = HashMap::new();
        for (path, node) in &b.nodes {
            match node {
                Node::Dir { .. } => {
                    let subdirs = children
                        .get(path.as_str())
                        .map_or(0, |c| c.iter().filter(|p| matches!(b.nodes[**p], Node::Dir { .. })).count());
                    link_counts.insert(numbers[path], 2 + subdirs as u16);
                }
                _ => *link_counts.entry(numbers[path]).or_insert(0) += 1,
            }
        }

        let ftype = |node: &Node| -> u8 {
            match node {
                Node::File { .. } | Node::HardLink { .. } => 1,
                Node::Dir { .. } => 2,
                Node::Symlink { .. } => 7,
                Node::Special { mode, .. } => {
                    if mode & 0xF000 == 0x2000 {
                        3
                    } else {
                        5
                    }
                }
            }
        };

        let mut inodes: BTreeMap<u32, RawInode> = BTreeMap::new();
        let mut tree = BTreeMap::new();

        if b.journal_blocks > 0 {
            let blocks: Vec<Option<Vec<u8>>> =
                (0..b.journal_blocks).map(|_| Some(vec![0xC3; self.bs as usize])).collect();
            let (block, count) = self.store(&blocks);
            inodes.insert(
                8,
                RawInode {
                    mode: 0o100600,
                    size: b.journal_blocks as u64 * self.bs as u64,
                    links: 1,
                    blocks_512: count * sectors_per_block,
                    block,
                },
            );
        }

        for (path, node) in b.nodes.iter().filter(|(_, n)| !matches!(n, Node::HardLink { .. })) {
            let number = numbers[path];
            let mut raw = RawInode { links: link_counts[&number], ..RawInode::default() };
            match node {
                Node::Dir { mode } => {
                    let parent = numbers[parent_of(path)];
                    let mut entries = vec![(b".".to_vec(), number, 2u8), (b"..".to_vec(), parent, 2u8)];
                    for child in children.get(path.as_str()).into_iter().flatten() {
                        entries.push((name_of(child).as_bytes().to_vec(), numbers[*child], ftype(&b.nodes[*child])));
                    }
                    // lost+found gets spare room the way mkfs leaves it.
                    let mut blocks = self.dir_blocks(&entries, filetype);
                    if path == "/lost+found" {
                        while (blocks.len() as u32) * self.bs < 12288 {
                            let mut empty = vec![0u8; self.bs as usize];
                            empty[4..6].copy_from_slice(&(self.bs as u16).to_le_bytes());
                            blocks.push(Some(empty));
                        }
                    }
                    let (block, count) = self.store(&blocks);
                    raw.mode = 0o040000 | mode;
                    raw.size = blocks.len() as u64 * self.bs as u64;
                    raw.block = block;
                    raw.blocks_512 = count * sectors_per_block;
                }
                Node::File { mode, data } => {
                    let blocks = self.file_blocks(data);
                    let (block, count) = self.store(&blocks);
                    raw.mode = 0o100000 | mode;
                    raw.size = data.size;
                    raw.block = block;
                    raw.blocks_512 = count * sectors_per_block;
                }
                Node::Symlink { target } => {
                    raw.mode = 0o120777;
                    raw.size = target.len() as u64;
                    if target.len() < 60 {
                        let mut inline = [0u8; 60];
                        inline[..target.len()].copy_from_slice(target.as_bytes());
                        for (i, p) in raw.block.iter_mut().enumerate() {
                            *p = u32::from_le_bytes(inline[4 * i..4 * i + 4].try_into().unwrap());
                        }
                    } else {
                        let blocks = self.file_blocks(&FileData::dense(target.as_bytes().to_vec()));
                        let (block, count) = self.store(&blocks);
                        raw.block = block;
                        raw.blocks_512 = count * sectors_per_block;
                    }
                }
                Node::Special { mode, rdev } => {
                    raw.mode = *mode;
                    raw.block[0] = *rdev;
                }
                Node::HardLink { .. } => unreachable!("hardlinks share an inode assigned earlier"),
            }
            tree.insert(path.clone(), tree_entry(number, node, b, &raw));
            inodes.insert(number, raw);
        }
        for (path, node) in b.nodes.iter().filter(|(_, n)| matches!(n, Node::HardLink { .. })) {
            let number = numbers[path];
            tree.insert(path.clone(), tree_entry(number, node, b, &inodes[&number]));
        }
        for (number, raw) in &inodes {
            self.write_inode(*number, raw);
        }

        // Bitmaps and descriptors.
        let bs = self.bs as usize;
        let mut descs = Vec::new();
        let mut free_blocks_total = 0u32;
        let mut free_inodes_total = 0u32;
        for (g, group) in self.groups.iter().enumerate() {
            let mut bitmap = vec![0xFFu8; bs];
            let mut free = 0u32;
            for i in 0..self.blocks_per_group {
                let blk = group.start + i;
                let in_use = i >= group.len || self.used[blk as usize];
                if !in_use {
                    bitmap[(i / 8) as usize] &= !(1 << (i % 8));
                    free += 1;
                }
            }
            let mut ibitmap = vec![0xFFu8; bs];
            let mut free_inodes = 0u32;
            let mut dirs = 0u16;
            for i in 0..self.inodes_per_group {
                let number = g as u32 * self.inodes_per_group + i + 1;
                if number >= 11 && !inodes.contains_key(&number) {
                    ibitmap[(i / 8) as usize] &= !(1 << (i % 8));
                    free_inodes += 1;
                }
                if inodes.get(&number).is_some_and(|r| r.mode & 0xF000 == 0x4000) {
                    dirs += 1;
                }
            }
            descs.push((group.block_bitmap, group.inode_bitmap, group.inode_table, free, free_inodes, dirs));
            free_blocks_total += free;
            free_inodes_total += free_inodes;
            self.image[group.block_bitmap as usize * bs..(group.block_bitmap as usize + 1) * bs].copy_from_slice(&bitmap);
            self.image[group.inode_bitmap as usize * bs..(group.inode_bitmap as usize + 1) * bs].copy_from_slice(&ibitmap);
        }
        let mut gdt = Vec::new();
        for (bb, ib, it, free, free_inodes, dirs) in &descs {
            let mut d = [0u8; 32];
            d[0..4].copy_from_slice(&bb.to_le_bytes());
            d[4..8].copy_from_slice(&ib.to_le_bytes());
            d[8..12].copy_from_slice(&it.to_le_bytes());
            d[12..14].copy_from_slice(&(*free as u16).to_le_bytes());
            d[14..16].copy_from_slice(&(*free_inodes as u16).to_le_bytes());
            d[16..18].copy_from_slice(&dirs.to_le_bytes());
            gdt.extend_from_slice(&d);
        }

        let mut large_file = false;
        for raw in inodes.values() {
            large_file |= raw.size > u32::MAX as u64;
        }
        let blocks_count = self.used.len() as u32;
        let groups: Vec<(usize, u32)> = self.groups.iter().enumerate().map(|(g, gr)| (g, gr.start)).collect();
        for (g, start) in groups {
            if !has_super(g as u32) {
                continue;
            }
            let sb = self.superblock(b, g as u16, inodes_count, blocks_count, free_blocks_total, free_inodes_total, large_file);
            let sb_off = if start == 0 { 1024 } else { start as usize * bs };
            self.image[sb_off..sb_off + 1024].copy_from_slice(&sb);
            let gdt_off = (start as usize + 1) * bs;
            self.image[gdt_off..gdt_off + gdt.len()].copy_from_slice(&gdt);
        }

        BuiltImage {
            bytes: self.image,
            block_size: self.bs,
            blocks_count,
            used_blocks: blocks_count - free_blocks_total,
            free_blocks: free_blocks_total,
            tree,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn superblock(
        &self,
        b: &Ext2Builder,
        group: u16,
        inodes_count: u32,
        blocks_count: u32,
        free_blocks: u32,
        free_inodes: u32,
        large_file: bool,
    ) -> [u8; 1024] {
        let mut s = [0u8; 1024];
        let mut put32 = |off: usize, v: u32| s[off..off + 4].copy_from_slice(&v.to_le_bytes());
        put32(0, inodes_count);
        put32(4, blocks_count);
        put32(8, 0);
        put32(12, free_blocks);
        put32(16, free_inodes);
        put32(20, self.first_data_block);
        put32(24, self.bs.trailing_zeros() - 10);
        put32(28, self.bs.trailing_zeros() - 10);
        put32(32, self.blocks_per_group);
        put32(36, self.blocks_per_group);
        put32(40, self.inodes_per_group);
        put32(44, 0);
        put32(48, TIMESTAMP);
        put32(64, TIMESTAMP);
        put32(76, if b.rev0 { 0 } else { 1 });
        let mut put16 = |off: usize, v: u16| s[off..off + 2].copy_from_slice(&v.to_le_bytes());
        put16(52, 0);
        put16(54, 0xFFFF);
        put16(56, 0xEF53);
        put16(58, 1);
        put16(60, 1);
        if !b.rev0 {
            put16(88, b.inode_size);
            put16(90, group);
            s[84..88].copy_from_slice(&11u32.to_le_bytes());
            s[92..96].copy_from_slice(&b.compat.to_le_bytes());
            s[96..100].copy_from_slice(&b.incompat.to_le_bytes());
            let ro = RO_COMPAT_SPARSE_SUPER | if large_file { RO_COMPAT_LARGE_FILE } else { 0 };
            s[100..104].copy_from_slice(&ro.to_le_bytes());
            s[104..120].copy_from_slice(b"vmslim-fixture!!");
            s[120..127].copy_from_slice(b"fixture");
            if b.journal_blocks > 0 {
                s[224..228].copy_from_slice(&8u32.to_le_bytes());
            }
        }
        s
    }
}

fn tree_entry(number: u32, node: &Node, b: &Ext2Builder, raw: &RawInode) -> Expected {
    let kind = match node {
        Node::Dir { .. } => ExpectedKind::Dir,
        Node::File { data, .. } => ExpectedKind::File(data.clone()),
        Node::HardLink { target } => match &b.nodes[target] {
            Node::File { data, .. } => ExpectedKind::File(data.clone()),
            _ => unreachable!(),
        },
        Node::Symlink { target } => ExpectedKind::Symlink(target.clone()),
        Node::Special { .. } => ExpectedKind::Special,
    };
    Expected {
        inode: number,
        kind,
        mode: raw.mode,
        size: raw.size,
        disk_usage: raw.blocks_512 as u64 * 512,
    }
}
