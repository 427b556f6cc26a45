//! Append-only block file: each record is a big-endian u32 length followed by
//! the block's canonical encoding.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;

use super::{Block, LedgerError};

#[derive(Debug)]
pub struct BlockLog {
    file: File,
}

impl BlockLog {
    /// Creates (or truncates) the log at `path`.
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        Ok(BlockLog { file })
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(BlockLog { file })
    }

    pub fn append(&mut self, block: &Block) -> io::Result<()> {
        let bytes = block.encode();
        let mut rec = Vec::with_capacity(4 + bytes.len());
        rec.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        rec.extend_from_slice(&bytes);
        self.file.write_all(&rec)
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.file.sync_data()
    }
}

/// Reads every block in the file. Hash links are not checked here.
pub fn read_log(path: &Path) -> Result<Vec<Block>, LedgerError> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let mut out = Vec::new();
    let mut rest = buf.as_slice();
    while !rest.is_empty() {
        let at = buf.len() - rest.len();
        let corrupt = |what: String| LedgerError::Corrupt(format!("{what} at byte {at}"));
        if rest.len() < 4 {
            return Err(corrupt("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        let body = rest
            .get(4..4 + len)
            .ok_or_else(|| corrupt(format!("record of {len} bytes overruns the file")))?;
        out.push(Block::decode(body).map_err(|e| corrupt(e.to_string()))?);
        rest = &rest[4 + len..];
    }
    Ok(out)
}
