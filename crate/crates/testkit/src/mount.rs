// SPDX-License-Identifier: Apache-2.0

//! Optional kernel cross-check: loop-mount an image read-only with the
//! kernel's ext2 driver. Returns `None` wherever mounting is not permitted,
//! so callers can fall back to the builder's own tree.

use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

pub struct KernelMount {
    dir: TempDir,
    _image: PathBuf,
}

impl KernelMount {
    /// Mounts `image` with `-t ext2 -o loop,ro,minixdf` so that `statfs`
    /// reports raw superblock accounting.
    pub fn try_mount(image: &Path) -> Option<Self> {
        if std::env::var_os("VMSLIM_SKIP_KERNEL_MOUNT").is_some() {
            return None;
        }
        let dir = tempfile::tempdir().ok()?;
        let status = Command::new("mount")
            .args(["-t", "ext2", "-o", "loop,ro,minixdf"])
            .arg(image)
            .arg(dir.path())
            .stderr(std::process::Stdio::null())
            .status()
            .ok()?;
        status.success().then(|| KernelMount { dir, _image: image.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    /// The guest path `path` under the mount point.
    pub fn host_path(&self, path: &str) -> PathBuf {
        self.dir.path().join(path.trim_start_matches('/'))
    }

    /// `(blocks, free_blocks, block_size)` as reported by `statfs`.
    pub fn statfs(&self) -> Option<(u64, u64, u64)> {
        let out = Command::new("stat").args(["-f", "-c", "%b %f %S"]).arg(self.root()).output().ok()?;
        let text = String::from_utf8(out.stdout).ok()?;
        let v: Vec<u64> = text.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        (v.len() == 3).then(|| (v[0], v[1], v[2]))
    }
}

impl Drop for KernelMount {
    fn drop(&mut self) {
        let _ = Command::new("umount").arg(self.dir.path()).status();
    }
}
