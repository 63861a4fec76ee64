// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vmslim::source::ByteSource;
use vmslim::vdi::{parse_vdi, ImageType, VdiError, VdiHeader, BLOCK_ZERO};
use vmslim::volume::{open_volume, VolumeSelector};
use vmslim_testkit::{build_vdi, partitioned_disk, random_bytes, Ext2Builder, VdiKind, VdiOptions};

/// Logical disk with a mix of data and all-zero blocks.
fn logical_disk(rng: &mut StdRng, blocks: usize, block_size: usize) -> Vec<u8> {
    let mut disk = vec![0u8; blocks * block_size];
    for b in 0..blocks {
        if rng.gen_bool(0.6) {
            let start = b * block_size + rng.gen_range(0..block_size / 2);
            let len = rng.gen_range(1..block_size / 2);
            let data = random_bytes(rng, len);
            disk[start..start + len].copy_from_slice(&data);
        }
    }
    disk
}

fn flatten<S: ByteSource>(img: &vmslim::VdiImage<S>) -> Vec<u8> {
    let mut raw = Vec::new();
    img.to_raw(&mut raw).unwrap();
    raw
}

#[test]
fn swapped_physical_order_flattens_logically() {
    let mut rng = StdRng::seed_from_u64(1);
    let mut logical = vec![0xAAu8; 512];
    logical.extend([0xBBu8; 512]);
    // Shuffle until the map is [1, 0].
    loop {
        let built = build_vdi(&logical, &VdiOptions { block_size: 512, shuffle: true, ..Default::default() }, &mut rng);
        if built.map == [1, 0] {
            let img = parse_vdi(built.container.clone()).unwrap();
            assert_eq!(flatten(&img), logical);
            assert_eq!(&built.container[built.container.len() - 1024..built.container.len() - 512], &[0xBB; 512]);
            break;
        }
    }
}

#[test]
fn dynamic_image_with_one_allocated_block() {
    let mut rng = StdRng::seed_from_u64(2);
    let mut logical = vec![0u8; 4 * 4096];
    logical[4096 + 10] = 1;
    let built = build_vdi(&logical, &VdiOptions { block_size: 4096, ..Default::default() }, &mut rng);
    let img = parse_vdi(built.container).unwrap();
    assert_eq!(img.header.image_type, ImageType::Dynamic);
    assert_eq!(img.header.blocks_allocated, 1);
    assert_eq!(img.block_map.allocated_count(), 1);
    assert_eq!(flatten(&img), logical);
}

#[test]
fn fixed_image_is_identity_over_data_zone() {
    let mut rng = StdRng::seed_from_u64(3);
    let logical = logical_disk(&mut rng, 4, 1024);
    let built = build_vdi(&logical, &VdiOptions { kind: VdiKind::Fixed, block_size: 1024, ..Default::default() }, &mut rng);
    let img = parse_vdi(built.container.clone()).unwrap();
    assert_eq!(img.header.image_type, ImageType::Fixed);
    assert_eq!(img.header.blocks_allocated, 4);
    assert_eq!(flatten(&img), built.container[img.header.data_offset as usize..]);
}

#[test]
fn discarded_blocks_read_as_zero() {
    let mut rng = StdRng::seed_from_u64(4);
    let logical = vec![0x11u8; 8 * 512];
    let opts = VdiOptions { block_size: 512, drop_data_blocks: 0.5, ..Default::default() };
    let built = build_vdi(&logical, &opts, &mut rng);
    assert!(built.map.iter().any(|&e| e >= BLOCK_ZERO));
    let img = parse_vdi(built.container).unwrap();
    assert_eq!(flatten(&img), built.expected_raw);
}

#[test]
fn fully_unallocated_image() {
    let mut rng = StdRng::seed_from_u64(5);
    let logical = vec![0u8; 1 << 20];
    let built = build_vdi(&logical, &VdiOptions { block_size: 64 * 1024, ..Default::default() }, &mut rng);
    let img = parse_vdi(built.container).unwrap();
    assert_eq!(img.header.blocks_allocated, 0);
    let raw = flatten(&img);
    assert_eq!(raw.len(), 1 << 20);
    assert!(raw.iter().all(|&b| b == 0));
}

#[test]
fn filesystem_reads_straight_through_the_container() {
    let fs_img = Ext2Builder::new(1024, 2048).file("/etc/hostname", "inside\n").build();
    let disk = partitioned_disk(&fs_img.bytes, 2048, 0);
    let disk_len = disk.len().next_multiple_of(64 * 1024);
    let mut logical = disk.clone();
    logical.resize(disk_len, 0);
    let mut rng = StdRng::seed_from_u64(6);
    let built = build_vdi(&logical, &VdiOptions { block_size: 64 * 1024, shuffle: true, ..Default::default() }, &mut rng);
    let img = parse_vdi(built.container).unwrap();
    let slice = open_volume(&img, VolumeSelector::Auto).unwrap();
    assert_eq!(slice.offset(), 2048 * 512);
    let fs = vmslim::open_fs(slice).unwrap();
    let inode = fs.resolve_path("/etc/hostname").unwrap();
    assert_eq!(fs.read_file(&inode).unwrap(), b"inside\n");
}

#[test]
fn file_source_matches_in_memory_source() {
    let mut rng = StdRng::seed_from_u64(7);
    let logical = logical_disk(&mut rng, 16, 512);
    let built = build_vdi(&logical, &VdiOptions { block_size: 512, shuffle: true, ..Default::default() }, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disk.vdi");
    std::fs::write(&path, &built.container).unwrap();
    let img = parse_vdi(vmslim::FileSource::open(&path).unwrap()).unwrap();
    assert_eq!(flatten(&img), built.expected_raw);
}

fn header_strategy() -> impl Strategy<Value = (u32, u32, u32, u64, [u8; 16], u32)> {
    (1u32..=2, 0u32..4, 1u32..64, any::<u64>(), any::<[u8; 16]>(), 0u32..32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reads_equal_flattened_slices(seed in any::<u64>(), blocks in 1usize..24, shift in 9u32..13, shuffle in any::<bool>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let block_size = 1usize << shift;
        let logical = logical_disk(&mut rng, blocks, block_size);
        let opts = VdiOptions {
            block_size: block_size as u32,
            shuffle,
            sparse_zero_blocks: 0.5,
            drop_data_blocks: 0.1,
            data_slack: rng.gen_range(0..4) * 512,
            ..Default::default()
        };
        let built = build_vdi(&logical, &opts, &mut rng);
        let img = parse_vdi(built.container).unwrap();
        let raw = flatten(&img);
        prop_assert_eq!(raw.len() as u64, img.header.disk_size);
        prop_assert_eq!(&raw, &built.expected_raw);
        for _ in 0..50 {
            let offset = rng.gen_range(0..=raw.len());
            let len = rng.gen_range(0..=raw.len() - offset);
            prop_assert_eq!(img.read_virtual(offset as u64, len).unwrap(), raw[offset..offset + len].to_vec());
        }
        let past = img.read_virtual(raw.len() as u64, 1);
        prop_assert!(matches!(past, Err(VdiError::OutOfRange { .. })), "read past end should fail");
    }

    #[test]
    fn header_encoding_is_a_parse_fixed_point(
        (image_type, flags, blocks, disk_seed, uuid, extra) in header_strategy()
    ) {
        let mut rng = StdRng::seed_from_u64(disk_seed);
        let logical = logical_disk(&mut rng, blocks as usize, 512);
        let kind = if image_type == 1 { VdiKind::Dynamic } else { VdiKind::Fixed };
        let built = build_vdi(&logical, &VdiOptions { kind, block_size: 512, shuffle: true, ..Default::default() }, &mut rng);
        let mut container = built.container;
        container[80..84].copy_from_slice(&flags.to_le_bytes());
        container[392 + 48..392 + 64].copy_from_slice(&uuid);
        container[456 + (extra as usize % 16)] = 0x5A;
        let img = parse_vdi(container.clone()).unwrap();

        let encoded = img.encode_headers();
        prop_assert_eq!(&encoded[..], &container[..encoded.len()]);
        let mut rebuilt = container.clone();
        rebuilt[..encoded.len()].copy_from_slice(&encoded);
        let again = parse_vdi(rebuilt).unwrap();
        prop_assert_eq!(&again.pre_header, &img.pre_header);
        prop_assert_eq!(&again.header, &img.header);
        prop_assert_eq!(&again.block_map, &img.block_map);
        let header: &VdiHeader = &img.header;
        prop_assert_eq!(header.encode().len() as u32, header.header_size);
    }
}
