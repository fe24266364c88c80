use std::fmt;

use crate::types::ObjectId;

/// A row key. Rows are kept in lexicographic byte order; the empty key sorts first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RowKey(Vec<u8>);

impl RowKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    /// Object-id rows use the 8-byte big-endian id so numeric and byte order agree.
    pub fn from_id(id: ObjectId) -> Self {
        Self(id.to_be_bytes().to_vec())
    }

    pub fn to_id(&self) -> Option<ObjectId> {
        let bytes: [u8; 8] = self.0.as_slice().try_into().ok()?;
        Some(ObjectId::from_be_bytes(bytes))
    }

    /// A key greater than every spatial-index key (those only use `'0'..='3'`).
    pub fn after_all_spatial() -> Self {
        Self(vec![b'4'])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u8>> for RowKey {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl From<&str> for RowKey {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl fmt::Debug for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| c.is_ascii_graphic()) => write!(f, "RowKey({s:?})"),
            _ => write!(f, "RowKey(0x{})", self.0.iter().map(|b| format!("{b:02x}")).collect::<String>()),
        }
    }
}
