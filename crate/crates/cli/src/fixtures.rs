//! Fixture lookup and the on-disk formats for secret tables and keychains.

use std::path::{Path, PathBuf};

use tap_core::algebra::DIGEST_LEN;
use tap_core::keychain::{KeyChain, KeychainError, SecretTable};

/// Directory searched for scenario files given by bare name.
pub const FIXTURE_ENV: &str = "TAP_FIXTURES";

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected {DIGEST_LEN} hex bytes")]
    TableLine { line: usize },
    #[error("secret table is empty")]
    EmptyTable,
    #[error("keychain blob: {0}")]
    Blob(#[from] KeychainError),
}

/// `path` as given if it exists, else the same name under `$TAP_FIXTURES`,
/// else with a `.scenario` suffix there.
pub fn resolve(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(FIXTURE_ENV) {
        let dir = PathBuf::from(dir);
        for cand in [dir.join(path), dir.join(path).with_extension("scenario")] {
            if cand.exists() {
                return cand;
            }
        }
    }
    path.to_path_buf()
}

pub fn read(path: &Path) -> Result<Vec<u8>, FixtureError> {
    std::fs::read(path).map_err(|source| FixtureError::Io { path: path.into(), source })
}

/// One 32-byte entry per line, hex. `#` starts a comment.
pub fn parse_table(text: &str) -> Result<SecretTable, FixtureError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut e = [0u8; DIGEST_LEN];
        hex::decode_to_slice(line, &mut e).map_err(|_| FixtureError::TableLine { line: i + 1 })?;
        entries.push(e);
    }
    if entries.is_empty() {
        return Err(FixtureError::EmptyTable);
    }
    Ok(SecretTable::new(entries))
}

pub fn format_table(t: &SecretTable) -> String {
    t.entries.iter().map(|e| hex::encode(e) + "\n").collect()
}

pub fn load_chain(path: &Path) -> Result<KeyChain, FixtureError> {
    Ok(KeyChain::import(&read(path)?)?)
}

pub fn save_chain(path: &Path, chain: &KeyChain) -> Result<(), FixtureError> {
    std::fs::write(path, chain.export()).map_err(|source| FixtureError::Io { path: path.into(), source })
}
