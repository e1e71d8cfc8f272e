#![allow(dead_code)]

use std::path::PathBuf;

/// Reference solutions shared by every integration test binary.
pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("reference-cache")
}
