//! Per-region cache of chosen NN levels.

use std::collections::HashMap;

use parking_lot::RwLock;

use super::flag::{best_level, FlagConfig};
use super::ScanCost;
use crate::schooling::{Engine, SchoolError};
use crate::spatial::SpatialIndex;
use crate::store::RowKey;
use crate::types::{Point, Timestamp};

/// A cached level choice covering the Spatial Index keys of one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheRecord {
    pub level: u8,
    pub left: RowKey,
    pub right: RowKey,
    pub created: Timestamp,
}

/// Outcome of a cached level lookup; `cost` is the probing work on a miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelChoice {
    pub level: u8,
    pub hit: bool,
    pub cost: ScanCost,
}

/// Level cache keyed by the cell whose key interval a record covers.
/// Lookups check every ancestor of the query point's cell and use the
/// freshest live record.
#[derive(Debug, Default)]
pub struct LevelCache {
    records: RwLock<HashMap<SpatialIndex, CacheRecord>>,
}

impl LevelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Freshest record covering `loc` that is younger than `ttl` seconds at `now`.
    pub fn lookup(&self, engine: &Engine, loc: Point, now: Timestamp, ttl: f64) -> Option<CacheRecord> {
        let map = engine.levels().map;
        let finest = map.encode(map.clamp(loc), engine.levels().spatial_level).ok()?;
        let records = self.records.read();
        (0..=finest.level())
            .filter_map(|l| records.get(&finest.ancestor(l)?))
            .filter(|r| now.secs_since(r.created) < ttl)
            .max_by_key(|r| r.created)
            .cloned()
    }

    /// Level for a query at `loc`: a fresh cached choice if one covers
    /// `loc`, otherwise a new [`best_level`] result, which is then cached for
    /// the whole cell it was computed for.
    pub fn cached_level(&self, engine: &Engine, loc: Point, cfg: &FlagConfig, now: Timestamp) -> Result<LevelChoice, SchoolError> {
        if let Some(r) = self.lookup(engine, loc, now, cfg.cache_ttl) {
            return Ok(LevelChoice { level: r.level, hit: true, cost: ScanCost::default() });
        }
        let (level, trace) = best_level(engine, loc, cfg)?;
        let map = engine.levels().map;
        let cell = map.encode(map.clamp(loc), level)?;
        let (left, right) = cell.key_range(engine.levels().spatial_level)?;
        self.records.write().insert(cell, CacheRecord { level, left, right, created: now });
        Ok(LevelChoice { level, hit: false, cost: trace.cost })
    }
}
