//! Small shared helpers: deterministic seed derivation and atomic file
//! writes.

use std::io::Write;
use std::path::Path;

/// SplitMix64 step; used to derive independent per-task seeds from a base
/// seed so that parallel experiment trials are reproducible regardless of
/// scheduling.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stream seed from a base seed and a list of indices
/// (experiment, noise level, trial, ...). Stable across runs and
/// platforms.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &i in indices {
        s = splitmix64(s ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    s
}

/// Writes `bytes` to `path` atomically (temp file + rename) so partially
/// written outputs are never observed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile_path(path);
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            // clean up and retry once with a fresh temp name
            let _ = std::fs::remove_file(&tmp);
            tmp = tempfile_path(path);
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, path).map_err(|_| e)
        }
    }
}

fn tempfile_path(path: &Path) -> std::path::PathBuf {
    let pid = std::process::id();
    let nonce = splitmix64(std::time::UNIX_EPOCH.elapsed().map(|d| d.as_nanos() as u64).unwrap_or(0) ^ (pid as u64));
    path.with_extension(format!("tmp.{pid}.{nonce:x}"))
}
