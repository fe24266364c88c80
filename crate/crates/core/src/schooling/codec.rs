//! Byte encodings of the values kept in the engine's tables.

use crate::types::{ObjectId, Vec2};

use super::Status;
use crate::types::{LocationRecord, Timestamp};

pub const RECORD_LEN: usize = 32;

pub fn encode_record(rec: &LocationRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(RECORD_LEN);
    for v in [rec.loc.x, rec.loc.y, rec.vel.x, rec.vel.y] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn f64_at(bytes: &[u8], at: usize) -> Option<f64> {
    Some(f64::from_le_bytes(bytes.get(at..at + 8)?.try_into().ok()?))
}

fn u64_at(bytes: &[u8], at: usize) -> Option<u64> {
    Some(u64::from_le_bytes(bytes.get(at..at + 8)?.try_into().ok()?))
}

pub fn decode_record(bytes: &[u8], t: Timestamp) -> Option<LocationRecord> {
    if bytes.len() != RECORD_LEN {
        return None;
    }
    Some(LocationRecord::new(
        Vec2::new(f64_at(bytes, 0)?, f64_at(bytes, 8)?),
        Vec2::new(f64_at(bytes, 16)?, f64_at(bytes, 24)?),
        t,
    ))
}

pub fn encode_vec(v: Vec2) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(&v.x.to_le_bytes());
    out.extend_from_slice(&v.y.to_le_bytes());
    out
}

pub fn decode_vec(bytes: &[u8]) -> Option<Vec2> {
    if bytes.len() != 16 {
        return None;
    }
    Some(Vec2::new(f64_at(bytes, 0)?, f64_at(bytes, 8)?))
}

const TAG_LEADER: u8 = 0;
const TAG_FOLLOWER: u8 = 1;

/// The status cell's timestamp carries `since`, so only the variant payload is stored.
pub fn encode_status(status: &Status) -> Vec<u8> {
    match status {
        Status::Leader { .. } => vec![TAG_LEADER],
        Status::Follower { leader, disp, .. } => {
            let mut out = vec![TAG_FOLLOWER];
            out.extend_from_slice(&leader.to_le_bytes());
            out.extend_from_slice(&encode_vec(*disp));
            out
        }
    }
}

pub fn decode_status(bytes: &[u8], since: Timestamp) -> Option<Status> {
    match *bytes.first()? {
        TAG_LEADER if bytes.len() == 1 => Some(Status::Leader { since }),
        TAG_FOLLOWER if bytes.len() == 25 => Some(Status::Follower {
            leader: u64_at(bytes, 1)? as ObjectId,
            disp: decode_vec(&bytes[9..])?,
            since,
        }),
        _ => None,
    }
}

pub fn id_column(id: ObjectId) -> [u8; 8] {
    id.to_be_bytes()
}

pub fn column_id(column: &[u8]) -> Option<ObjectId> {
    Some(u64::from_be_bytes(column.try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let rec = LocationRecord::new(Vec2::new(1.5, -2.0), Vec2::new(0.25, 3.0), Timestamp(7));
        assert_eq!(decode_record(&encode_record(&rec), Timestamp(7)), Some(rec));
        for st in [
            Status::Leader { since: Timestamp(3) },
            Status::Follower { leader: 42, disp: Vec2::new(-1.0, 0.5), since: Timestamp(3) },
        ] {
            assert_eq!(decode_status(&encode_status(&st), Timestamp(3)), Some(st));
        }
        assert_eq!(column_id(&id_column(99)), Some(99));
        assert!(decode_status(&[9], Timestamp(0)).is_none());
    }
}
