// SPDX-License-Identifier: Apache-2.0

//! MBR disks and VDI containers built around known logical contents.

use rand::seq::SliceRandom;
use rand::Rng;

pub const SECTOR: usize = 512;

#[derive(Debug, Clone, Copy)]
pub struct PartitionSpec {
    pub bootable: bool,
    pub type_code: u8,
    pub start_lba: u32,
    pub sector_count: u32,
}

/// A zeroed disk of `total_sectors` with an MBR describing `parts`.
pub fn mbr_disk(total_sectors: u32, parts: &[PartitionSpec]) -> Vec<u8> {
    assert!(parts.len() <= 4);
    let mut disk = vec![0u8; total_sectors as usize * SECTOR];
    for (i, p) in parts.iter().enumerate() {
        let e = &mut disk[446 + 16 * i..446 + 16 * (i + 1)];
        e[0] = if p.bootable { 0x80 } else { 0 };
        e[1..4].copy_from_slice(&[0xFE, 0xFF, 0xFF]);
        e[4] = p.type_code;
        e[5..8].copy_from_slice(&[0xFE, 0xFF, 0xFF]);
        e[8..12].copy_from_slice(&p.start_lba.to_le_bytes());
        e[12..16].copy_from_slice(&p.sector_count.to_le_bytes());
    }
    disk[510] = 0x55;
    disk[511] = 0xAA;
    disk
}

/// Places `fs` in a single Linux partition at `start_lba`, with `tail`
/// spare sectors after it.
pub fn partitioned_disk(fs: &[u8], start_lba: u32, tail: u32) -> Vec<u8> {
    assert_eq!(fs.len() % SECTOR, 0);
    let sectors = (fs.len() / SECTOR) as u32;
    let total = start_lba + sectors + tail;
    let mut disk = mbr_disk(
        total,
        &[PartitionSpec { bootable: true, type_code: 0x83, start_lba, sector_count: sectors }],
    );
    let off = start_lba as usize * SECTOR;
    disk[off..off + fs.len()].copy_from_slice(fs);
    disk
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdiKind {
    Dynamic,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct VdiOptions {
    pub kind: VdiKind,
    pub block_size: u32,
    /// Store allocated blocks in a random physical order.
    pub shuffle: bool,
    /// Chance that an all-zero block is left unallocated or marked discarded.
    pub sparse_zero_blocks: f64,
    /// Chance that a block holding data is dropped from the map anyway
    /// (the expected raw output then has zeros there).
    pub drop_data_blocks: f64,
    /// Extra bytes between the block map and the data zone.
    pub data_slack: u32,
}

impl Default for VdiOptions {
    fn default() -> Self {
        VdiOptions {
            kind: VdiKind::Dynamic,
            block_size: 1 << 20,
            shuffle: false,
            sparse_zero_blocks: 1.0,
            drop_data_blocks: 0.0,
            data_slack: 0,
        }
    }
}

pub struct BuiltVdi {
    pub container: Vec<u8>,
    /// What a correct flattening must produce.
    pub expected_raw: Vec<u8>,
    pub map: Vec<u32>,
    pub allocated: u32,
}

/// Wraps `logical` (a multiple of `block_size` long) in a VDI 1.1 container.
pub fn build_vdi<R: Rng>(logical: &[u8], opts: &VdiOptions, rng: &mut R) -> BuiltVdi {
    let bs = opts.block_size as usize;
    assert!(bs > 0 && logical.len().is_multiple_of(bs));
    let blocks_total = logical.len() / bs;
    let mut expected_raw = logical.to_vec();

    // Decide which logical blocks get stored.
    let mut stored: Vec<usize> = Vec::new();
    let mut map = vec![0xFFFF_FFFFu32; blocks_total];
    for i in 0..blocks_total {
        let block = &logical[i * bs..(i + 1) * bs];
        let keep = match opts.kind {
            VdiKind::Fixed => true,
            VdiKind::Dynamic if block.iter().all(|&b| b == 0) => !rng.gen_bool(opts.sparse_zero_blocks),
            VdiKind::Dynamic => !rng.gen_bool(opts.drop_data_blocks),
        };
        if keep {
            stored.push(i);
        } else {
            map[i] = if rng.gen_bool(0.5) { 0xFFFF_FFFF } else { 0xFFFF_FFFE };
            expected_raw[i * bs..(i + 1) * bs].fill(0);
        }
    }
    let mut physical = stored.clone();
    if opts.shuffle && opts.kind == VdiKind::Dynamic {
        physical.shuffle(rng);
    }
    for (phys, &logical_idx) in physical.iter().enumerate() {
        map[logical_idx] = phys as u32;
    }

    let blocks_offset = 512usize;
    let data_offset = (blocks_offset + 4 * blocks_total).next_multiple_of(512) + opts.data_slack as usize;
    let mut f = vec![0u8; data_offset];
    let info = b"<<< Oracle VM VirtualBox Disk Image >>>\n";
    f[..info.len()].copy_from_slice(info);
    let mut put = |off: usize, bytes: &[u8]| f[off..off + bytes.len()].copy_from_slice(bytes);
    put(64, &0xBEDA_107Fu32.to_le_bytes());
    put(68, &0x0001_0001u32.to_le_bytes());
    put(72, &400u32.to_le_bytes());
    put(76, &(if opts.kind == VdiKind::Dynamic { 1u32 } else { 2 }).to_le_bytes());
    put(84, b"vmslim test fixture");
    put(340, &(blocks_offset as u32).to_le_bytes());
    put(344, &(data_offset as u32).to_le_bytes());
    put(360, &512u32.to_le_bytes());
    put(368, &(logical.len() as u64).to_le_bytes());
    put(376, &opts.block_size.to_le_bytes());
    put(384, &(blocks_total as u32).to_le_bytes());
    put(388, &(stored.len() as u32).to_le_bytes());
    for u in 0..2 {
        let uuid: [u8; 16] = rng.gen();
        put(392 + 16 * u, &uuid);
    }
    for (i, e) in map.iter().enumerate() {
        put(blocks_offset + 4 * i, &e.to_le_bytes());
    }
    for &logical_idx in &physical {
        f.extend_from_slice(&logical[logical_idx * bs..(logical_idx + 1) * bs]);
    }
    BuiltVdi { container: f, expected_raw, map, allocated: stored.len() as u32 }
}
