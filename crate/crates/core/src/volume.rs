// SPDX-License-Identifier: Apache-2.0

//! Locating the guest filesystem inside a flat disk: classic MBR partition
//! scan or an explicit byte offset.

use std::fmt;
use std::io;

use thiserror::Error;

use crate::source::{out_of_bounds, read_vec, ByteSource};

pub const SECTOR_SIZE: u64 = 512;
pub const LINUX_PARTITION_TYPE: u8 = 0x83;
pub const GPT_PROTECTIVE_TYPE: u8 = 0xEE;

const TABLE_OFFSET: usize = 446;
const ENTRY_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("disk too short for an MBR: {0} bytes")]
    TooShort(u64),
    #[error("no Linux (0x83) partition found")]
    NoLinuxPartition,
    #[error("partition {0} does not exist")]
    PartitionNotFound(usize),
    #[error("GPT partitioned disks are not supported")]
    GptUnsupported,
    #[error("partition {index} (LBA {start_lba} + {sector_count} sectors) extends past the {disk_size}-byte disk")]
    PartitionOutOfRange { index: usize, start_lba: u32, sector_count: u32, disk_size: u64 },
    #[error("offset {offset} is outside the {disk_size}-byte disk")]
    OffsetOutOfRange { offset: u64, disk_size: u64 },
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionEntry {
    /// Slot in the MBR table, 0-3.
    pub index: usize,
    pub bootable: bool,
    pub type_code: u8,
    pub start_lba: u32,
    pub sector_count: u32,
}

impl PartitionEntry {
    pub fn offset(&self) -> u64 {
        self.start_lba as u64 * SECTOR_SIZE
    }

    pub fn length(&self) -> u64 {
        self.sector_count as u64 * SECTOR_SIZE
    }
}

/// Reads the four primary entries of an MBR. Empty slots (type 0 or zero
/// sectors) are skipped; a sector without the 0x55AA signature yields no
/// entries.
pub fn parse_mbr<S: ByteSource + ?Sized>(raw: &S) -> Result<Vec<PartitionEntry>, VolumeError> {
    let disk_size = raw.size();
    if disk_size < SECTOR_SIZE {
        return Err(VolumeError::TooShort(disk_size));
    }
    let sector = read_vec(raw, 0, SECTOR_SIZE as usize)?;
    if sector[510..512] != [0x55, 0xAA] {
        return Ok(Vec::new());
    }
    let mut entries = Vec::new();
    for index in 0..4 {
        let e = &sector[TABLE_OFFSET + index * ENTRY_SIZE..TABLE_OFFSET + (index + 1) * ENTRY_SIZE];
        let entry = PartitionEntry {
            index,
            bootable: e[0] & 0x80 != 0,
            type_code: e[4],
            start_lba: u32::from_le_bytes(e[8..12].try_into().unwrap()),
            sector_count: u32::from_le_bytes(e[12..16].try_into().unwrap()),
        };
        if entry.type_code == 0 || entry.sector_count == 0 {
            continue;
        }
        if entry.offset() + entry.length() > disk_size {
            return Err(VolumeError::PartitionOutOfRange {
                index,
                start_lba: entry.start_lba,
                sector_count: entry.sector_count,
                disk_size,
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeSelector {
    /// First partition with the Linux type code.
    Auto,
    /// MBR slot 0-3.
    Partition(usize),
    /// From this byte to the end of the disk.
    Offset(u64),
}

impl fmt::Display for VolumeSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolumeSelector::Auto => f.write_str("auto"),
            VolumeSelector::Partition(i) => write!(f, "partition {i}"),
            VolumeSelector::Offset(o) => write!(f, "offset {o}"),
        }
    }
}

/// A bounded window onto a byte source.
#[derive(Debug, Clone)]
pub struct VolumeSlice<S> {
    source: S,
    offset: u64,
    length: u64,
}

impl<S: ByteSource> VolumeSlice<S> {
    pub fn new(source: S, offset: u64, length: u64) -> Result<Self, VolumeError> {
        let disk_size = source.size();
        if offset.checked_add(length).is_none_or(|end| end > disk_size) {
            return Err(VolumeError::OffsetOutOfRange { offset, disk_size });
        }
        Ok(Self { source, offset, length })
    }

    /// The entire source.
    pub fn whole(source: S) -> Self {
        let length = source.size();
        Self { source, offset: 0, length }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: ByteSource> ByteSource for VolumeSlice<S> {
    fn size(&self) -> u64 {
        self.length
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        match offset.checked_add(buf.len() as u64) {
            Some(end) if end <= self.length => self.source.read_at(self.offset + offset, buf),
            _ => Err(out_of_bounds(offset, buf.len(), self.length)),
        }
    }
}

/// Resolves `selector` against `raw` and returns the slice holding the
/// filesystem.
pub fn open_volume<S: ByteSource>(raw: S, selector: VolumeSelector) -> Result<VolumeSlice<S>, VolumeError> {
    let disk_size = raw.size();
    match selector {
        VolumeSelector::Offset(offset) => {
            if offset > disk_size {
                return Err(VolumeError::OffsetOutOfRange { offset, disk_size });
            }
            VolumeSlice::new(raw, offset, disk_size - offset)
        }
        VolumeSelector::Partition(index) => {
            let entries = parse_mbr(&raw)?;
            let entry = entries
                .iter()
                .find(|e| e.index == index)
                .copied()
                .ok_or(VolumeError::PartitionNotFound(index))?;
            VolumeSlice::new(raw, entry.offset(), entry.length())
        }
        VolumeSelector::Auto => {
            let entries = parse_mbr(&raw)?;
            if let Some(linux) = entries.iter().find(|e| e.type_code == LINUX_PARTITION_TYPE) {
                let (offset, length) = (linux.offset(), linux.length());
                return VolumeSlice::new(raw, offset, length);
            }
            if entries.iter().any(|e| e.type_code == GPT_PROTECTIVE_TYPE) {
                return Err(VolumeError::GptUnsupported);
            }
            Err(VolumeError::NoLinuxPartition)
        }
    }
}
