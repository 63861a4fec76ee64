// SPDX-License-Identifier: Apache-2.0

//! Test fixtures for vmslim: an independent ext2 writer, MBR and VDI
//! builders, and an optional kernel-mount oracle.

pub mod disk;
pub mod ext2;
pub mod mount;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub use disk::{build_vdi, mbr_disk, partitioned_disk, BuiltVdi, PartitionSpec, VdiKind, VdiOptions};
pub use ext2::{BuiltImage, Expected, ExpectedKind, Ext2Builder, FileData};
pub use mount::KernelMount;

pub fn random_bytes(rng: &mut impl Rng, len: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    rng.fill(&mut v[..]);
    v
}

/// Long symlink target (over 60 bytes, so stored in a data block).
pub const LONG_TARGET: &str = "/usr/share/doc/a-package-with-a-rather-long-name/changelog.Debian";

/// A guest-like tree of 250+ entries on a 16 MiB, 1 KiB-block volume with two
/// block groups: files spanning direct, single and double indirect blocks,
/// a sparse file, fast, slow, relative, absolute and dangling symlinks, a
/// symlinked directory, hardlinks and special files.
pub fn sample_fixture(seed: u64) -> Ext2Builder {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut b = Ext2Builder::new(1024, 16 * 1024)
        .inodes(1024)
        .file("/etc/hostname", "vmslim-guest\n")
        .file("/etc/fstab", "/dev/sda1 / ext3 defaults 0 1\n")
        .file("/etc/empty", Vec::new())
        .file_mode("/etc/shadow", 0o640, "root:*:14000:0:99999:7:::\n")
        .symlink("/etc/dangling", "/nonexistent/target")
        .file("/bin/bash", random_bytes(&mut rng, 40 * 1024 + 17))
        .symlink("/bin/sh", "bash")
        .hardlink("/usr/bin/bash.hard", "/bin/bash")
        .file("/usr/lib/libc.so.6", random_bytes(&mut rng, 60 * 1024 + 3))
        .symlink("/usr/lib/libc.so", "libc.so.6")
        .symlink("/lib", "usr/lib")
        .file("/usr/share/big/double.bin", random_bytes(&mut rng, 300 * 1024 + 111))
        .file(LONG_TARGET, "vmslim (0.1) unstable; urgency=low\n")
        .symlink("/usr/share/doc/changelog", LONG_TARGET)
        .sparse_file(
            "/var/sparse.img",
            2 * 1024 * 1024,
            vec![
                (0, b"head".to_vec()),
                (700 * 1024 + 5, vec![0x5A; 5 * 1024]),
                (2 * 1024 * 1024 - 10, b"0123456789".to_vec()),
            ],
        )
        .char_device("/dev/null", 1, 3)
        .fifo("/run/initctl")
        .file("/a/b/c/d/e/f.txt", "deep\n")
        .file("/a.b", "dot\n")
        .file("/a/b.txt", "b\n");
    for pkg in 0..22 {
        for f in 0..10 {
            let len = match rng.gen_range(0..10) {
                0 => 0,
                1..=6 => rng.gen_range(1..4096),
                7 | 8 => rng.gen_range(4096..16 * 1024),
                _ => rng.gen_range(16 * 1024..24 * 1024),
            };
            let path = format!("/usr/share/pkg{pkg:02}/file{f:02}.dat");
            b = b.file(&path, random_bytes(&mut rng, len));
        }
        if pkg % 5 == 0 {
            b = b.hardlink(&format!("/usr/share/pkg{pkg:02}/alias.dat"), &format!("/usr/share/pkg{pkg:02}/file00.dat"));
        }
    }
    b
}
