// SPDX-License-Identifier: Apache-2.0

//! VirtualBox VDI (format 1.1) container reader.
//!
//! A VDI file is laid out as:
//!
//! ```text
//! 0      pre-header: 64-byte info text, signature, version
//! 72     header: sizes, offsets, geometry, UUIDs
//! ...    block map: one u32 per logical block
//! ...    data blocks, in physical (allocation) order
//! ```
//!
//! Only the data zone carries guest bytes; everything before `data_offset` is
//! container control structure and never appears in the flattened disk.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::source::{read_vec, ByteSource};

pub const VDI_SIGNATURE: u32 = 0xBEDA_107F;
pub const VDI_VERSION_MAJOR: u16 = 1;
pub const VDI_VERSION_MINOR: u16 = 1;

/// Block map marker for a block that was never written.
pub const BLOCK_UNALLOCATED: u32 = 0xFFFF_FFFF;
/// Block map marker for a discarded block; reads as zeros.
pub const BLOCK_ZERO: u32 = 0xFFFF_FFFE;

pub const PRE_HEADER_SIZE: usize = 72;
/// Bytes of the 1.1 header that carry fields we interpret (through the UUIDs).
pub const MIN_HEADER_SIZE: u32 = 384;
/// Header size written by VirtualBox for 1.1 images (adds LCHS geometry).
pub const DEFAULT_HEADER_SIZE: u32 = 400;
const MAX_HEADER_SIZE: u32 = 64 * 1024;
const MIN_FILE_SIZE: u64 = 512;

const OFF_SIGNATURE: usize = 64;
const OFF_VERSION: usize = 68;
const OFF_HEADER_SIZE: usize = 72;
const OFF_IMAGE_TYPE: usize = 76;
const OFF_FLAGS: usize = 80;
const OFF_DESCRIPTION: usize = 84;
const OFF_BLOCKS_OFFSET: usize = 340;
const OFF_DATA_OFFSET: usize = 344;
const OFF_GEOMETRY: usize = 348;
const OFF_UNUSED: usize = 364;
const OFF_DISK_SIZE: usize = 368;
const OFF_BLOCK_SIZE: usize = 376;
const OFF_BLOCK_EXTRA: usize = 380;
const OFF_BLOCKS_TOTAL: usize = 384;
const OFF_BLOCKS_ALLOCATED: usize = 388;
const OFF_UUIDS: usize = 392;
const OFF_HEADER_TAIL: usize = 456;

#[derive(Debug, Error)]
pub enum VdiError {
    #[error("bad signature {found:#010x}: not a VDI image")]
    BadSignature { found: u32 },
    #[error("unsupported VDI version {major}.{minor} (only 1.1 is accepted)")]
    UnsupportedVersion { major: u16, minor: u16 },
    #[error("unsupported VDI image type {0} (only dynamic and fixed base images)")]
    UnsupportedImageType(u32),
    #[error("corrupt VDI header: {field}: {reason}")]
    CorruptHeader { field: &'static str, reason: String },
    #[error("corrupt VDI block map: {0}")]
    CorruptBlockMap(String),
    #[error("truncated VDI file: need {needed} bytes, have {actual}")]
    TruncatedFile { needed: u64, actual: u64 },
    #[error("read of {len} bytes at offset {offset} is outside the {disk_size}-byte virtual disk")]
    OutOfRange { offset: u64, len: u64, disk_size: u64 },
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

fn corrupt(field: &'static str, reason: impl Into<String>) -> VdiError {
    VdiError::CorruptHeader { field, reason: reason.into() }
}

fn le_u16(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn le_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

#[derive(Clone, PartialEq, Eq)]
pub struct VdiPreHeader {
    pub info_text: [u8; 64],
    pub signature: u32,
    pub version_major: u16,
    pub version_minor: u16,
}

impl VdiPreHeader {
    /// The info text up to the first NUL, lossily decoded.
    pub fn info(&self) -> String {
        let end = self.info_text.iter().position(|&b| b == 0).unwrap_or(64);
        String::from_utf8_lossy(&self.info_text[..end]).into_owned()
    }

    pub fn encode(&self) -> [u8; PRE_HEADER_SIZE] {
        let mut out = [0u8; PRE_HEADER_SIZE];
        out[..64].copy_from_slice(&self.info_text);
        out[OFF_SIGNATURE..OFF_SIGNATURE + 4].copy_from_slice(&self.signature.to_le_bytes());
        out[OFF_VERSION..OFF_VERSION + 2].copy_from_slice(&self.version_minor.to_le_bytes());
        out[OFF_VERSION + 2..OFF_VERSION + 4].copy_from_slice(&self.version_major.to_le_bytes());
        out
    }
}

impl fmt::Debug for VdiPreHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VdiPreHeader")
            .field("info_text", &self.info())
            .field("signature", &format_args!("{:#010x}", self.signature))
            .field("version_major", &self.version_major)
            .field("version_minor", &self.version_minor)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageType {
    Dynamic,
    Fixed,
}

impl ImageType {
    pub fn code(self) -> u32 {
        match self {
            ImageType::Dynamic => 1,
            ImageType::Fixed => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self, VdiError> {
        match code {
            1 => Ok(ImageType::Dynamic),
            2 => Ok(ImageType::Fixed),
            other => Err(VdiError::UnsupportedImageType(other)),
        }
    }
}

impl fmt::Display for ImageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageType::Dynamic => "dynamic",
            ImageType::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Geometry {
    pub cylinders: u32,
    pub heads: u32,
    pub sectors: u32,
    pub sector_size: u32,
}

/// The 1.1 header, starting at byte 72 of the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VdiHeader {
    /// Size of the header in bytes, counted from byte 72.
    pub header_size: u32,
    pub image_type: ImageType,
    pub flags: u32,
    pub description: Vec<u8>,
    pub blocks_offset: u32,
    pub data_offset: u32,
    pub legacy_geometry: Geometry,
    pub unused: u32,
    pub disk_size: u64,
    pub block_size: u32,
    pub block_extra: u32,
    pub blocks_total: u32,
    pub blocks_allocated: u32,
    /// Create, modify, linkage and parent-modify UUIDs, raw.
    pub uuids: [[u8; 16]; 4],
    /// Header bytes past the UUIDs (LCHS geometry in VirtualBox images).
    pub tail: Vec<u8>,
}

impl VdiHeader {
    /// Serializes the header (`header_size` bytes, to be placed at byte 72).
    pub fn encode(&self) -> Vec<u8> {
        let mut b = vec![0u8; OFF_HEADER_TAIL];
        let put32 = |b: &mut Vec<u8>, off: usize, v: u32| b[off..off + 4].copy_from_slice(&v.to_le_bytes());
        put32(&mut b, OFF_HEADER_SIZE, self.header_size);
        put32(&mut b, OFF_IMAGE_TYPE, self.image_type.code());
        put32(&mut b, OFF_FLAGS, self.flags);
        b[OFF_DESCRIPTION..OFF_DESCRIPTION + 256].copy_from_slice(&self.description);
        put32(&mut b, OFF_BLOCKS_OFFSET, self.blocks_offset);
        put32(&mut b, OFF_DATA_OFFSET, self.data_offset);
        let g = self.legacy_geometry;
        for (i, v) in [g.cylinders, g.heads, g.sectors, g.sector_size].into_iter().enumerate() {
            put32(&mut b, OFF_GEOMETRY + 4 * i, v);
        }
        put32(&mut b, OFF_UNUSED, self.unused);
        b[OFF_DISK_SIZE..OFF_DISK_SIZE + 8].copy_from_slice(&self.disk_size.to_le_bytes());
        put32(&mut b, OFF_BLOCK_SIZE, self.block_size);
        put32(&mut b, OFF_BLOCK_EXTRA, self.block_extra);
        put32(&mut b, OFF_BLOCKS_TOTAL, self.blocks_total);
        put32(&mut b, OFF_BLOCKS_ALLOCATED, self.blocks_allocated);
        for (i, uuid) in self.uuids.iter().enumerate() {
            b[OFF_UUIDS + 16 * i..OFF_UUIDS + 16 * (i + 1)].copy_from_slice(uuid);
        }
        b.extend_from_slice(&self.tail);
        b.split_off(OFF_HEADER_SIZE)
    }

    /// Decodes a header from the first `72 + header_size` bytes of a file.
    /// Field values are not validated here.
    fn decode(b: &[u8]) -> Result<Self, VdiError> {
        let header_size = le_u32(b, OFF_HEADER_SIZE);
        let mut uuids = [[0u8; 16]; 4];
        for (i, uuid) in uuids.iter_mut().enumerate() {
            uuid.copy_from_slice(&b[OFF_UUIDS + 16 * i..OFF_UUIDS + 16 * (i + 1)]);
        }
        Ok(VdiHeader {
            header_size,
            image_type: ImageType::from_code(le_u32(b, OFF_IMAGE_TYPE))?,
            flags: le_u32(b, OFF_FLAGS),
            description: b[OFF_DESCRIPTION..OFF_DESCRIPTION + 256].to_vec(),
            blocks_offset: le_u32(b, OFF_BLOCKS_OFFSET),
            data_offset: le_u32(b, OFF_DATA_OFFSET),
            legacy_geometry: Geometry {
                cylinders: le_u32(b, OFF_GEOMETRY),
                heads: le_u32(b, OFF_GEOMETRY + 4),
                sectors: le_u32(b, OFF_GEOMETRY + 8),
                sector_size: le_u32(b, OFF_GEOMETRY + 12),
            },
            unused: le_u32(b, OFF_UNUSED),
            disk_size: le_u64(b, OFF_DISK_SIZE),
            block_size: le_u32(b, OFF_BLOCK_SIZE),
            block_extra: le_u32(b, OFF_BLOCK_EXTRA),
            blocks_total: le_u32(b, OFF_BLOCKS_TOTAL),
            blocks_allocated: le_u32(b, OFF_BLOCKS_ALLOCATED),
            uuids,
            tail: b[OFF_HEADER_TAIL..PRE_HEADER_SIZE + header_size as usize].to_vec(),
        })
    }

    fn validate(&self) -> Result<(), VdiError> {
        if self.block_size == 0 || !self.block_size.is_multiple_of(512) {
            return Err(corrupt("block_size", format!("{} is not a positive multiple of 512", self.block_size)));
        }
        if self.block_extra != 0 {
            return Err(corrupt("block_extra", format!("{} (per-block extra data is not supported)", self.block_extra)));
        }
        if self.blocks_total as u64 * self.block_size as u64 != self.disk_size {
            return Err(corrupt(
                "disk_size",
                format!(
                    "{} != blocks_total {} x block_size {}",
                    self.disk_size, self.blocks_total, self.block_size
                ),
            ));
        }
        if self.blocks_allocated > self.blocks_total {
            return Err(corrupt(
                "blocks_allocated",
                format!("{} exceeds blocks_total {}", self.blocks_allocated, self.blocks_total),
            ));
        }
        let header_end = PRE_HEADER_SIZE as u64 + self.header_size as u64;
        if (self.blocks_offset as u64) < header_end {
            return Err(corrupt("blocks_offset", format!("{} overlaps the header ending at {header_end}", self.blocks_offset)));
        }
        let map_end = self.blocks_offset as u64 + 4 * self.blocks_total as u64;
        if (self.data_offset as u64) < map_end {
            return Err(corrupt("data_offset", format!("{} overlaps the block map ending at {map_end}", self.data_offset)));
        }
        Ok(())
    }
}

/// Where a logical block lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockState {
    /// Stored at this physical block index in the data zone.
    Allocated(u32),
    Unallocated,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMap {
    entries: Vec<u32>,
}

impl BlockMap {
    pub fn new(entries: Vec<u32>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn state(&self, logical: usize) -> BlockState {
        match self.entries[logical] {
            BLOCK_UNALLOCATED => BlockState::Unallocated,
            BLOCK_ZERO => BlockState::Zero,
            phys => BlockState::Allocated(phys),
        }
    }

    pub fn allocated_count(&self) -> usize {
        self.entries.iter().filter(|&&e| e < BLOCK_ZERO).count()
    }

    pub fn encode(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|e| e.to_le_bytes()).collect()
    }

    fn validate(&self, header: &VdiHeader, file_len: u64) -> Result<(), VdiError> {
        let mut seen = HashSet::with_capacity(header.blocks_allocated as usize);
        let mut highest = None;
        for (logical, &entry) in self.entries.iter().enumerate() {
            if entry >= BLOCK_ZERO {
                continue;
            }
            if !seen.insert(entry) {
                return Err(VdiError::CorruptBlockMap(format!(
                    "physical block {entry} is mapped twice (again at logical block {logical})"
                )));
            }
            highest = highest.max(Some(entry));
        }
        if seen.len() != header.blocks_allocated as usize {
            return Err(VdiError::CorruptBlockMap(format!(
                "{} mapped blocks but header says blocks_allocated = {}",
                seen.len(),
                header.blocks_allocated
            )));
        }
        if let Some(highest) = highest {
            let needed = header.data_offset as u64 + (highest as u64 + 1) * header.block_size as u64;
            if needed > file_len {
                return Err(VdiError::TruncatedFile { needed, actual: file_len });
            }
        }
        Ok(())
    }
}

/// A validated VDI container over a byte source.
///
/// Immutable after [`parse_vdi`]; reads may be issued from any number of
/// threads.
#[derive(Debug)]
pub struct VdiImage<S> {
    pub pre_header: VdiPreHeader,
    pub header: VdiHeader,
    pub block_map: BlockMap,
    source: S,
}

/// Parses and validates a VDI 1.1 container.
pub fn parse_vdi<S: ByteSource>(source: S) -> Result<VdiImage<S>, VdiError> {
    let file_len = source.size();
    if file_len < MIN_FILE_SIZE {
        return Err(VdiError::TruncatedFile { needed: MIN_FILE_SIZE, actual: file_len });
    }
    let head = read_vec(&source, 0, PRE_HEADER_SIZE + 4)?;
    let signature = le_u32(&head, OFF_SIGNATURE);
    if signature != VDI_SIGNATURE {
        return Err(VdiError::BadSignature { found: signature });
    }
    let version_minor = le_u16(&head, OFF_VERSION);
    let version_major = le_u16(&head, OFF_VERSION + 2);
    if (version_major, version_minor) != (VDI_VERSION_MAJOR, VDI_VERSION_MINOR) {
        return Err(VdiError::UnsupportedVersion { major: version_major, minor: version_minor });
    }
    let header_size = le_u32(&head, OFF_HEADER_SIZE);
    if !(MIN_HEADER_SIZE..=MAX_HEADER_SIZE).contains(&header_size) {
        return Err(corrupt(
            "header_size",
            format!("{header_size} outside {MIN_HEADER_SIZE}..={MAX_HEADER_SIZE}"),
        ));
    }
    let header_end = PRE_HEADER_SIZE as u64 + header_size as u64;
    if header_end > file_len {
        return Err(VdiError::TruncatedFile { needed: header_end, actual: file_len });
    }
    let raw = read_vec(&source, 0, header_end as usize)?;
    let mut info_text = [0u8; 64];
    info_text.copy_from_slice(&raw[..64]);
    let pre_header = VdiPreHeader { info_text, signature, version_major, version_minor };
    let header = VdiHeader::decode(&raw)?;
    header.validate()?;
    if (header.data_offset as u64) > file_len {
        return Err(VdiError::TruncatedFile { needed: header.data_offset as u64, actual: file_len });
    }

    let map_bytes = read_vec(&source, header.blocks_offset as u64, 4 * header.blocks_total as usize)?;
    let block_map = BlockMap::new(map_bytes.chunks_exact(4).map(|c| le_u32(c, 0)).collect());
    block_map.validate(&header, file_len)?;

    Ok(VdiImage { pre_header, header, block_map, source })
}

impl<S: ByteSource> VdiImage<S> {
    pub fn disk_size(&self) -> u64 {
        self.header.disk_size
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn into_source(self) -> S {
        self.source
    }

    /// Pre-header plus header, as they would be written at the start of the file.
    pub fn encode_headers(&self) -> Vec<u8> {
        let mut out = self.pre_header.encode().to_vec();
        out.extend(self.header.encode());
        out
    }

    fn physical_offset(&self, phys: u32) -> u64 {
        self.header.data_offset as u64 + phys as u64 * self.header.block_size as u64
    }

    /// Reads guest bytes at a virtual disk offset into `buf`.
    pub fn read_virtual_into(&self, offset: u64, buf: &mut [u8]) -> Result<(), VdiError> {
        let disk_size = self.disk_size();
        let len = buf.len() as u64;
        if offset.checked_add(len).is_none_or(|end| end > disk_size) {
            return Err(VdiError::OutOfRange { offset, len, disk_size });
        }
        let block_size = self.header.block_size as u64;
        let mut done = 0usize;
        while done < buf.len() {
            let pos = offset + done as u64;
            let logical = (pos / block_size) as usize;
            let within = pos % block_size;
            let n = ((block_size - within) as usize).min(buf.len() - done);
            let chunk = &mut buf[done..done + n];
            match self.block_map.state(logical) {
                BlockState::Allocated(phys) => self.source.read_at(self.physical_offset(phys) + within, chunk)?,
                BlockState::Unallocated | BlockState::Zero => chunk.fill(0),
            }
            done += n;
        }
        Ok(())
    }

    /// Returns `len` guest bytes starting at virtual offset `offset`.
    /// Unallocated and discarded blocks read as zeros.
    pub fn read_virtual(&self, offset: u64, len: usize) -> Result<Vec<u8>, VdiError> {
        let mut buf = vec![0u8; len];
        self.read_virtual_into(offset, &mut buf)?;
        Ok(buf)
    }

    /// Streams the flattened disk (exactly `disk_size` bytes) into `sink`.
    pub fn to_raw<W: Write>(&self, sink: &mut W) -> Result<u64, VdiError> {
        const CHUNK: usize = 1 << 20;
        let block_size = self.header.block_size as usize;
        let mut buf = vec![0u8; block_size.min(CHUNK)];
        let mut written = 0u64;
        for logical in 0..self.block_map.len() {
            let state = self.block_map.state(logical);
            let mut within = 0usize;
            while within < block_size {
                let n = buf.len().min(block_size - within);
                let chunk = &mut buf[..n];
                match state {
                    BlockState::Allocated(phys) => {
                        self.source.read_at(self.physical_offset(phys) + within as u64, chunk)?
                    }
                    BlockState::Unallocated | BlockState::Zero => chunk.fill(0),
                }
                sink.write_all(chunk)?;
                within += n;
                written += n as u64;
            }
        }
        sink.flush()?;
        if written != self.disk_size() {
            return Err(VdiError::CorruptBlockMap(format!(
                "flattened {written} bytes, expected {}",
                self.disk_size()
            )));
        }
        Ok(written)
    }
}

impl<S: ByteSource> ByteSource for VdiImage<S> {
    fn size(&self) -> u64 {
        self.disk_size()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        self.read_virtual_into(offset, buf).map_err(|e| match e {
            VdiError::Io(e) => e,
            VdiError::OutOfRange { .. } => io::Error::new(io::ErrorKind::UnexpectedEof, e.to_string()),
            other => io::Error::new(io::ErrorKind::InvalidData, other.to_string()),
        })
    }
}

/// True when `source` starts with a VDI pre-header signature.
pub fn looks_like_vdi<S: ByteSource + ?Sized>(source: &S) -> io::Result<bool> {
    if source.size() < (OFF_SIGNATURE + 4) as u64 {
        return Ok(false);
    }
    let mut sig = [0u8; 4];
    source.read_at(OFF_SIGNATURE as u64, &mut sig)?;
    Ok(u32::from_le_bytes(sig) == VDI_SIGNATURE)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled container; independent of `VdiHeader::encode`.
    fn container(image_type: u32, block_size: u32, map: &[u32], blocks: &[u8]) -> Vec<u8> {
        let blocks_offset = 512u32;
        let data_offset = (blocks_offset + 4 * map.len() as u32).next_multiple_of(512).max(1024);
        let allocated = map.iter().filter(|&&e| e < BLOCK_ZERO).count() as u32;
        let mut f = vec![0u8; data_offset as usize];
        f[..27].copy_from_slice(b"<<< test VDI disk image >>>");
        f[64..68].copy_from_slice(&0xBEDA107Fu32.to_le_bytes());
        f[68..72].copy_from_slice(&0x0001_0001u32.to_le_bytes());
        f[72..76].copy_from_slice(&400u32.to_le_bytes());
        f[76..80].copy_from_slice(&image_type.to_le_bytes());
        f[340..344].copy_from_slice(&blocks_offset.to_le_bytes());
        f[344..348].copy_from_slice(&data_offset.to_le_bytes());
        f[368..376].copy_from_slice(&(map.len() as u64 * block_size as u64).to_le_bytes());
        f[376..380].copy_from_slice(&block_size.to_le_bytes());
        f[384..388].copy_from_slice(&(map.len() as u32).to_le_bytes());
        f[388..392].copy_from_slice(&allocated.to_le_bytes());
        for (i, e) in map.iter().enumerate() {
            let o = blocks_offset as usize + 4 * i;
            f[o..o + 4].copy_from_slice(&e.to_le_bytes());
        }
        f.extend_from_slice(blocks);
        f
    }

    #[test]
    fn parses_minimal_dynamic_image() {
        let img = parse_vdi(container(1, 512, &[0, BLOCK_UNALLOCATED], &[7u8; 512])).unwrap();
        assert_eq!(img.header.image_type, ImageType::Dynamic);
        assert_eq!(img.header.blocks_allocated, 1);
        assert_eq!(img.header.disk_size, 1024);
        assert_eq!(img.pre_header.info(), "<<< test VDI disk image >>>");
    }

    #[test]
    fn zero_signature_is_rejected() {
        let mut f = container(1, 512, &[BLOCK_UNALLOCATED], &[]);
        f[64..68].fill(0);
        assert!(matches!(parse_vdi(f), Err(VdiError::BadSignature { found: 0 })));
    }

    #[test]
    fn other_versions_are_rejected() {
        let mut f = container(1, 512, &[BLOCK_UNALLOCATED], &[]);
        f[68..72].copy_from_slice(&0x0001_0000u32.to_le_bytes());
        assert!(matches!(
            parse_vdi(f),
            Err(VdiError::UnsupportedVersion { major: 1, minor: 0 })
        ));
    }

    #[test]
    fn differencing_images_are_rejected() {
        let f = container(4, 512, &[BLOCK_UNALLOCATED], &[]);
        assert!(matches!(parse_vdi(f), Err(VdiError::UnsupportedImageType(4))));
    }

    #[test]
    fn short_files_are_truncated() {
        assert!(matches!(
            parse_vdi(vec![0u8; 100]),
            Err(VdiError::TruncatedFile { needed: 512, actual: 100 })
        ));
        let f = container(1, 512, &[0, 1], &[1u8; 600]);
        assert!(matches!(parse_vdi(f), Err(VdiError::TruncatedFile { needed: 2048, .. })));
    }

    #[test]
    fn header_invariants_name_the_field() {
        let mut f = container(1, 512, &[BLOCK_UNALLOCATED], &[]);
        f[368..376].copy_from_slice(&4096u64.to_le_bytes());
        match parse_vdi(f) {
            Err(VdiError::CorruptHeader { field, .. }) => assert_eq!(field, "disk_size"),
            other => panic!("unexpected {other:?}"),
        }
        let mut f = container(1, 512, &[BLOCK_UNALLOCATED], &[]);
        f[388..392].copy_from_slice(&2u32.to_le_bytes());
        match parse_vdi(f) {
            Err(VdiError::CorruptHeader { field, .. }) => assert_eq!(field, "blocks_allocated"),
            other => panic!("unexpected {other:?}"),
        }
        let mut f = container(1, 512, &[BLOCK_UNALLOCATED], &[]);
        f[344..348].copy_from_slice(&512u32.to_le_bytes());
        match parse_vdi(f) {
            Err(VdiError::CorruptHeader { field, .. }) => assert_eq!(field, "data_offset"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_physical_blocks_are_corrupt() {
        let f = container(1, 512, &[0, 0], &[0u8; 1024]);
        assert!(matches!(parse_vdi(f), Err(VdiError::CorruptBlockMap(_))));
    }

    #[test]
    fn allocated_count_must_match_header() {
        let mut f = container(1, 512, &[0, BLOCK_UNALLOCATED], &[0u8; 512]);
        f[388..392].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(parse_vdi(f), Err(VdiError::CorruptBlockMap(_))));
    }

    #[test]
    fn reads_mix_allocated_and_unallocated() {
        let img = parse_vdi(container(1, 512, &[0, BLOCK_UNALLOCATED, BLOCK_ZERO], &[0xAB; 512])).unwrap();
        let bytes = img.read_virtual(500, 20).unwrap();
        assert_eq!(&bytes[..12], &[0xAB; 12]);
        assert_eq!(&bytes[12..], &[0; 8]);
        assert!(img.read_virtual(600, 0).unwrap().is_empty());
        assert_eq!(img.read_virtual(1024, 512).unwrap(), vec![0; 512]);
        assert!(matches!(img.read_virtual(1500, 100), Err(VdiError::OutOfRange { .. })));
    }

    #[test]
    fn to_raw_restores_logical_order() {
        let mut blocks = vec![2u8; 512];
        blocks.extend([1u8; 512]);
        let img = parse_vdi(container(1, 512, &[1, 0], &blocks)).unwrap();
        let mut raw = Vec::new();
        assert_eq!(img.to_raw(&mut raw).unwrap(), 1024);
        assert_eq!(&raw[..512], &[1u8; 512]);
        assert_eq!(&raw[512..], &[2u8; 512]);
    }

    #[test]
    fn unallocated_image_flattens_to_zeros() {
        let map = vec![BLOCK_UNALLOCATED; 1024];
        let img = parse_vdi(container(1, 1024, &map, &[])).unwrap();
        let mut raw = Vec::new();
        img.to_raw(&mut raw).unwrap();
        assert_eq!(raw.len(), 1 << 20);
        assert!(raw.iter().all(|&b| b == 0));
    }

    #[test]
    fn fixed_image_flattens_to_its_data_zone() {
        let blocks: Vec<u8> = (0..4 * 512).map(|i| (i % 251) as u8).collect();
        let f = container(2, 512, &[0, 1, 2, 3], &blocks);
        let img = parse_vdi(f.clone()).unwrap();
        assert_eq!(img.header.image_type, ImageType::Fixed);
        assert_eq!(img.header.blocks_allocated, 4);
        let mut raw = Vec::new();
        img.to_raw(&mut raw).unwrap();
        assert_eq!(raw, f[1024..]);
    }

    #[test]
    fn headers_reencode_byte_for_byte() {
        let f = container(1, 512, &[0, BLOCK_UNALLOCATED], &[9u8; 512]);
        let img = parse_vdi(f.clone()).unwrap();
        assert_eq!(img.encode_headers(), f[..472]);
        assert_eq!(img.block_map.encode(), f[512..520]);
    }
}
