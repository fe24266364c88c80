//! On-disk page format of the archive.
//!
//! A disk file is a sequence of pages. Each page is a header (magic `MOPG`,
//! u32 record count, u64 min and max timestamp, u32 disk id, u64 sequence
//! number) followed by 48-byte records `(u64 id, u64 timestamp, f64 x, f64 y,
//! f64 vx, f64 vy)` sorted by `(id, timestamp)`. Integers are little-endian.

use serde::{Deserialize, Serialize};

use crate::types::{LocationRecord, ObjectId, Timestamp, Vec2};

pub const MAGIC: &[u8; 4] = b"MOPG";
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 8;
pub const RECORD_LEN: usize = 48;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PageError {
    #[error("bad page magic at byte {0}")]
    BadMagic(usize),
    #[error("page at byte {0} is truncated")]
    Truncated(usize),
}

/// One archived location sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchivedRecord {
    pub id: ObjectId,
    pub rec: LocationRecord,
}

impl ArchivedRecord {
    pub fn sort_key(&self) -> (ObjectId, Timestamp) {
        (self.id, self.rec.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivePage {
    pub disk: u32,
    pub seq: u64,
    pub min_t: Timestamp,
    pub max_t: Timestamp,
    pub records: Vec<ArchivedRecord>,
}

impl ArchivePage {
    /// Builds a page, sorting the records by `(id, timestamp)`.
    pub fn new(disk: u32, seq: u64, mut records: Vec<ArchivedRecord>) -> Self {
        records.sort_by_key(ArchivedRecord::sort_key);
        let min_t = records.iter().map(|r| r.rec.t).min().unwrap_or(Timestamp::ZERO);
        let max_t = records.iter().map(|r| r.rec.t).max().unwrap_or(Timestamp::ZERO);
        Self { disk, seq, min_t, max_t, records }
    }

    /// Bytes of record payload, excluding the header.
    pub fn payload_bytes(&self) -> u64 {
        (self.records.len() * RECORD_LEN) as u64
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.len() * RECORD_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.min_t.0.to_le_bytes());
        out.extend_from_slice(&self.max_t.0.to_le_bytes());
        out.extend_from_slice(&self.disk.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.id.to_le_bytes());
            out.extend_from_slice(&r.rec.t.0.to_le_bytes());
            for v in [r.rec.loc.x, r.rec.loc.y, r.rec.vel.x, r.rec.vel.y] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("length checked"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("length checked"))
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_bits(u64_at(b, at))
}

/// Header fields of the page starting at `at`, and its total length.
pub fn read_header(bytes: &[u8], at: usize) -> Result<(u32, Timestamp, Timestamp, u32, u64, usize), PageError> {
    let h = bytes.get(at..at + HEADER_LEN).ok_or(PageError::Truncated(at))?;
    if &h[..4] != MAGIC {
        return Err(PageError::BadMagic(at));
    }
    let count = u32_at(h, 4);
    let total = HEADER_LEN + count as usize * RECORD_LEN;
    if bytes.len() < at + total {
        return Err(PageError::Truncated(at));
    }
    Ok((count, Timestamp(u64_at(h, 8)), Timestamp(u64_at(h, 16)), u32_at(h, 24), u64_at(h, 28), total))
}

/// Decodes the page starting at `at`, returning it with its encoded length.
pub fn decode_page(bytes: &[u8], at: usize) -> Result<(ArchivePage, usize), PageError> {
    let (count, min_t, max_t, disk, seq, total) = read_header(bytes, at)?;
    let mut records = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let b = &bytes[at + HEADER_LEN + i * RECORD_LEN..];
        records.push(ArchivedRecord {
            id: u64_at(b, 0),
            rec: LocationRecord::new(
                Vec2::new(f64_at(b, 16), f64_at(b, 24)),
                Vec2::new(f64_at(b, 32), f64_at(b, 40)),
                Timestamp(u64_at(b, 8)),
            ),
        });
    }
    Ok((ArchivePage { disk, seq, min_t, max_t, records }, total))
}

/// Decodes a whole disk file.
pub fn decode_pages(bytes: &[u8]) -> Result<Vec<ArchivePage>, PageError> {
    let mut at = 0;
    let mut out = Vec::new();
    while at < bytes.len() {
        let (page, len) = decode_page(bytes, at)?;
        out.push(page);
        at += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, t: u64) -> ArchivedRecord {
        ArchivedRecord { id, rec: LocationRecord::new(Vec2::new(t as f64, 1.0), Vec2::new(0.5, -0.5), Timestamp(t)) }
    }

    #[test]
    fn page_round_trip_and_order() {
        let page = ArchivePage::new(3, 7, vec![rec(2, 5), rec(1, 9), rec(1, 4)]);
        assert_eq!(page.records.iter().map(|r| r.sort_key()).collect::<Vec<_>>(), vec![
            (1, Timestamp(4)),
            (1, Timestamp(9)),
            (2, Timestamp(5))
        ]);
        assert_eq!((page.min_t, page.max_t), (Timestamp(4), Timestamp(9)));
        let mut bytes = page.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 3 * RECORD_LEN);
        bytes.extend(ArchivePage::new(3, 8, vec![]).encode());
        let pages = decode_pages(&bytes).unwrap();
        assert_eq!(pages[0], page);
        assert!(pages[1].records.is_empty());
        assert_eq!(decode_pages(&bytes[..bytes.len() - 1]), Err(PageError::Truncated(HEADER_LEN + 3 * RECORD_LEN)));
        assert_eq!(decode_pages(b"XXXX"), Err(PageError::Truncated(0)));
    }
}
