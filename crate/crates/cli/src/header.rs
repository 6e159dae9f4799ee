use std::fs::File;
use std::io::Read;
use std::path::Path;

use dentalscan::{Error, Result};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Reproducibility header written to stderr before any work starts: tool
/// versions, seed and the digest of every input file.
pub struct Header {
    lines: Vec<String>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        Header {
            lines: vec![
                format!(
                    "# dentalscan {} (cli {})",
                    dentalscan::VERSION,
                    env!("CARGO_PKG_VERSION")
                ),
                format!("# command: {command}"),
            ],
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.lines.push(format!("# seed: {seed}"));
        self
    }

    pub fn note(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.lines.push(format!("# {key}: {value}"));
        self
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        let digest = sha256_file(path)?;
        self.lines.push(format!("# sha256 {}: {digest}", path.display()));
        Ok(self)
    }

    pub fn emit(self) {
        for line in self.lines {
            eprintln!("{line}");
        }
    }
}
