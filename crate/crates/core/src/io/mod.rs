//! On-disk formats: the `.rvf` field container, map exports, run configs,
//! and the end-to-end runner.

pub mod config;
pub mod map_io;
pub mod runner;
pub mod rvf;

use std::path::Path;

use crate::error::{Result, RvfError};

/// FNV-1a over the raw bytes, rendered as `fnv1a64:<hex>`. Stable across
/// platforms, good enough to tie a report back to the exact config text.
pub fn fnv1a64_tag(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("fnv1a64:{hash:016x}")
}

/// Write through a temp file in the target's directory, then rename, so a
/// crash mid-write never leaves a half-written file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write as _;
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(parent.unwrap_or(Path::new(".")))
        .map_err(RvfError::Io)?;
    tmp.write_all(bytes).map_err(RvfError::Io)?;
    tmp.flush().map_err(RvfError::Io)?;
    tmp.persist(path)
        .map_err(|e| RvfError::Io(e.error))?;
    Ok(())
}
