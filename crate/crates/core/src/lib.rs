// SPDX-License-Identifier: Apache-2.0

//! Slim down VM images to the files a guest actually uses.
//!
//! The pipeline reads a VirtualBox VDI container ([`vdi`]), finds the guest
//! filesystem on the flattened disk ([`volume`]), reads it in place
//! ([`ext2`]), resolves boot and application file-access catalogs against it
//! ([`catalog`]), extracts the catalogued files into deterministic instance
//! packages ([`instance`]) and reports the resulting size figures
//! ([`report`]).

pub mod catalog;
pub mod ext2;
pub mod instance;
pub mod report;
pub mod source;
pub mod units;
pub mod vdi;
pub mod volume;

pub use catalog::{closure_expand, merge_union, parse_catalog, Catalog, CatalogError, CatalogStats, Label, ParseMode};
pub use ext2::{open_fs, FileKind, FsError, FsStats, FsVolume, Inode, WalkEntry};
pub use instance::{extract, instance_pair, unpack, ExtractOptions, InstanceError, InstancePackage, OverlapReport};
pub use source::{ByteSource, FileSource};
pub use vdi::{parse_vdi, VdiError, VdiImage};
pub use volume::{open_volume, parse_mbr, PartitionEntry, VolumeError, VolumeSelector, VolumeSlice};
