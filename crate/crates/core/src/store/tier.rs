//! Append-only logs backing the disk tiers.
//!
//! Record layout, all integers little-endian:
//! `u32 len, row | u32 len, family | u32 len, column | u64 timestamp | u32 len, value`.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::types::Timestamp;

/// Where a spilled value lives inside its tier log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Extent {
    pub offset: u64,
    pub len: u32,
}

#[derive(Debug)]
enum Backing {
    Memory(Vec<u8>),
    File { file: File, len: u64 },
}

#[derive(Debug)]
pub(crate) struct TierLog {
    backing: Backing,
}

/// One decoded log record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierRecord {
    pub row: Vec<u8>,
    pub family: Vec<u8>,
    pub column: Vec<u8>,
    pub timestamp: Timestamp,
    pub value: Vec<u8>,
}

impl TierLog {
    pub fn in_memory() -> Self {
        Self { backing: Backing::Memory(Vec::new()) }
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        Ok(Self { backing: Backing::File { file, len: 0 } })
    }

    pub fn len(&self) -> u64 {
        match &self.backing {
            Backing::Memory(v) => v.len() as u64,
            Backing::File { len, .. } => *len,
        }
    }

    pub fn append(&mut self, row: &[u8], family: &[u8], column: &[u8], ts: Timestamp, value: &[u8]) -> io::Result<Extent> {
        let mut buf = Vec::with_capacity(24 + row.len() + family.len() + column.len() + value.len());
        for part in [row, family, column] {
            buf.extend_from_slice(&(part.len() as u32).to_le_bytes());
            buf.extend_from_slice(part);
        }
        buf.extend_from_slice(&ts.0.to_le_bytes());
        buf.extend_from_slice(&(value.len() as u32).to_le_bytes());
        let value_offset = self.len() + buf.len() as u64;
        buf.extend_from_slice(value);
        match &mut self.backing {
            Backing::Memory(v) => v.extend_from_slice(&buf),
            Backing::File { file, len } => {
                file.seek(SeekFrom::Start(*len))?;
                file.write_all(&buf)?;
                *len += buf.len() as u64;
            }
        }
        Ok(Extent { offset: value_offset, len: value.len() as u32 })
    }

    pub fn read(&mut self, extent: Extent) -> io::Result<Vec<u8>> {
        match &mut self.backing {
            Backing::Memory(v) => {
                let start = extent.offset as usize;
                v.get(start..start + extent.len as usize)
                    .map(<[u8]>::to_vec)
                    .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "extent past end of tier log"))
            }
            Backing::File { file, .. } => {
                let mut out = vec![0u8; extent.len as usize];
                file.seek(SeekFrom::Start(extent.offset))?;
                file.read_exact(&mut out)?;
                Ok(out)
            }
        }
    }

    pub fn contents(&mut self) -> io::Result<Vec<u8>> {
        match &mut self.backing {
            Backing::Memory(v) => Ok(v.clone()),
            Backing::File { file, .. } => {
                let mut out = Vec::new();
                file.seek(SeekFrom::Start(0))?;
                file.read_to_end(&mut out)?;
                Ok(out)
            }
        }
    }
}

/// Decodes a whole tier log.
pub fn decode_tier_log(mut bytes: &[u8]) -> io::Result<Vec<TierRecord>> {
    fn take<'a>(buf: &mut &'a [u8], n: usize) -> io::Result<&'a [u8]> {
        if buf.len() < n {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated tier record"));
        }
        let (head, tail) = buf.split_at(n);
        *buf = tail;
        Ok(head)
    }
    fn take_lp(buf: &mut &[u8]) -> io::Result<Vec<u8>> {
        let len = u32::from_le_bytes(take(buf, 4)?.try_into().unwrap()) as usize;
        Ok(take(buf, len)?.to_vec())
    }
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let row = take_lp(&mut bytes)?;
        let family = take_lp(&mut bytes)?;
        let column = take_lp(&mut bytes)?;
        let timestamp = Timestamp(u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()));
        let value = take_lp(&mut bytes)?;
        out.push(TierRecord { row, family, column, timestamp, value });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_and_file_logs_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut logs = [TierLog::in_memory(), TierLog::create(&dir.path().join("t.log")).unwrap()];
        for log in &mut logs {
            let a = log.append(b"r1", b"loc", b"rec", Timestamp(5), b"hello").unwrap();
            let b = log.append(b"r2", b"loc", b"rec", Timestamp(9), b"").unwrap();
            assert_eq!(log.read(a).unwrap(), b"hello");
            assert_eq!(log.read(b).unwrap(), b"");
            let recs = decode_tier_log(&log.contents().unwrap()).unwrap();
            assert_eq!(recs.len(), 2);
            assert_eq!(recs[0].row, b"r1");
            assert_eq!(recs[1].timestamp, Timestamp(9));
        }
    }

    #[test]
    fn truncated_log_is_an_error() {
        let mut log = TierLog::in_memory();
        log.append(b"r", b"f", b"c", Timestamp(1), b"abc").unwrap();
        let bytes = log.contents().unwrap();
        assert!(decode_tier_log(&bytes[..bytes.len() - 1]).is_err());
    }
}
