//! Output helpers for commands.

use std::path::Path;

use latentnav::error::{Error, Result};
use latentnav::fsio::write_atomic;
use latentnav::image::Image;
use latentnav::netpbm;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    write_atomic(path, &netpbm::encode(image)?)
}

/// 64-bit FNV-1a over raw bytes, for printed output checksums.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
