//! Exact k-nearest-neighbor queries over the school index.
//!
//! [`nearest_leaders`] walks a frontier of NN cells outward from the query
//! point, batch-reading each cell's leaders with one range scan. [`knn`]
//! expands leaders into their schools and widens the leader search until the
//! answer is provably complete under the engine's location model.
//! [`best_level`] picks the NN level adaptively from local density and
//! [`LevelCache`] remembers that choice per region.

mod cache;
mod flag;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

pub use cache::{CacheRecord, LevelCache, LevelChoice};
pub use flag::{best_level, density_step, initial_level, FlagConfig, FlagTrace, MAX_DOWN_STEP};

use crate::schooling::{codec, Engine, SchoolError};
use crate::spatial::SpatialIndex;
use crate::store::schema::IDS_FAMILY;
use crate::store::TableName;
use crate::types::{ObjectId, Point, Timestamp};

/// One query result entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: ObjectId,
    pub loc: Point,
    pub dist: f64,
}

impl Neighbor {
    fn key(&self) -> (f64, ObjectId) {
        (self.dist, self.id)
    }
}

fn cmp_key(a: (f64, ObjectId), b: (f64, ObjectId)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Results are ordered by distance, then id.
pub fn sort_neighbors(v: &mut [Neighbor]) {
    v.sort_by(|a, b| cmp_key(a.key(), b.key()));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnQuery {
    pub loc: Point,
    pub k: usize,
    pub t: Timestamp,
}

/// Store work done by a query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanCost {
    /// Range scans issued against the Spatial Index Table.
    pub scans: u64,
    /// Index entries returned by those scans.
    pub entries: u64,
}

impl ScanCost {
    /// Rows-scanned cost: entries read plus a fixed per-scan overhead
    /// expressed in rows.
    pub fn rows_scanned(&self, per_scan: f64) -> f64 {
        self.entries as f64 + per_scan * self.scans as f64
    }

    pub fn add(&mut self, other: ScanCost) {
        self.scans += other.scans;
        self.entries += other.entries;
    }
}

/// Ids of the leaders indexed inside `cell`, read with one range scan.
pub fn leaders_in_cell(engine: &Engine, cell: SpatialIndex, cost: &mut ScanCost) -> Result<Vec<ObjectId>, SchoolError> {
    let (lo, hi) = cell.key_range(engine.levels().spatial_level)?;
    let rows = engine.store().scan_columns(TableName::SpatialIndex, &lo, &hi, IDS_FAMILY)?;
    cost.scans += 1;
    let mut ids = Vec::new();
    for (_, cols) in rows {
        for c in cols {
            ids.push(codec::column_id(&c).ok_or_else(|| SchoolError::Inconsistent("bad spatial index column".into()))?);
        }
    }
    cost.entries += ids.len() as u64;
    Ok(ids)
}

struct CellEntry {
    dist: f64,
    cell: SpatialIndex,
}

impl PartialEq for CellEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for CellEntry {}
impl PartialOrd for CellEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CellEntry {
    // Reversed so the max-heap pops the nearest cell.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.cell.cmp(&self.cell))
    }
}

struct ObjEntry(Neighbor);

impl PartialEq for ObjEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ObjEntry {}
impl PartialOrd for ObjEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ObjEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_key(self.0.key(), other.0.key())
    }
}

/// The `count` leaders nearest to `loc` by their latest recorded positions,
/// searching NN cells of level `nn_level`.
pub fn nearest_leaders(
    engine: &Engine,
    loc: Point,
    count: usize,
    nn_level: u8,
    cost: &mut ScanCost,
) -> Result<Vec<Neighbor>, SchoolError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let map = engine.levels().map;
    let level = nn_level.min(engine.levels().spatial_level);
    let seed = map.encode(map.clamp(loc), level)?;
    let mut cells = BinaryHeap::new();
    let mut pushed = HashSet::new();
    cells.push(CellEntry { dist: map.min_dist(loc, seed), cell: seed });
    pushed.insert(seed);
    let mut objs: BinaryHeap<ObjEntry> = BinaryHeap::with_capacity(count + 1);
    while let Some(CellEntry { dist, cell }) = cells.pop() {
        if objs.len() == count && dist > objs.peek().map_or(f64::INFINITY, |o| o.0.dist) {
            break;
        }
        for id in leaders_in_cell(engine, cell, cost)? {
            let Some(rec) = engine.leader_record(id)? else { continue };
            let n = Neighbor { id, loc: rec.loc, dist: rec.loc.dist(loc) };
            if objs.len() < count {
                objs.push(ObjEntry(n));
            } else if cmp_key(n.key(), objs.peek().expect("full heap").0.key()) == Ordering::Less {
                objs.pop();
                objs.push(ObjEntry(n));
            }
        }
        for nb in map.neighbors(cell) {
            if pushed.insert(nb) {
                cells.push(CellEntry { dist: map.min_dist(loc, nb), cell: nb });
            }
        }
    }
    let mut out: Vec<Neighbor> = objs.into_iter().map(|o| o.0).collect();
    sort_neighbors(&mut out);
    Ok(out)
}

/// Outcome details of one [`knn`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnStats {
    pub cost: ScanCost,
    /// Leader searches run, including the first.
    pub rounds: u32,
    /// Leaders requested by the final round.
    pub leaders_requested: usize,
}

/// The `q.k` objects nearest to `q.loc` under the engine's location model:
/// leaders extrapolated to `q.t`, followers at their estimated locations.
pub fn knn(engine: &Engine, q: &NnQuery, nn_level: u8) -> Result<(Vec<Neighbor>, KnnStats), SchoolError> {
    let mut stats = KnnStats::default();
    if q.k == 0 {
        return Ok((Vec::new(), stats));
    }
    let cfg = *engine.config();
    let mut want = ((q.k as f64 / engine.avg_school_size()).ceil() as usize).max(1);
    loop {
        stats.rounds += 1;
        stats.leaders_requested = want;
        let bound = engine.model_offset_bound();
        let leaders = nearest_leaders(engine, q.loc, want, nn_level, &mut stats.cost)?;
        let mut cands = Vec::new();
        for l in &leaders {
            let Some(rec) = engine.leader_record(l.id)? else { continue };
            let base = cfg.extrapolate(&rec, q.t);
            cands.push(Neighbor { id: l.id, loc: base, dist: base.dist(q.loc) });
            for (f, disp) in engine.followers(l.id)? {
                let p = base + disp;
                cands.push(Neighbor { id: f, loc: p, dist: p.dist(q.loc) });
            }
        }
        sort_neighbors(&mut cands);
        let exhausted = leaders.len() < want;
        // Every leader not fetched is recorded at least this far away, so
        // its school members are modeled at least `frontier - bound` away.
        let covered = leaders.last().map_or(f64::INFINITY, |l| l.dist) - bound;
        if exhausted || (cands.len() >= q.k && cands[q.k - 1].dist < covered) {
            cands.truncate(q.k);
            return Ok((cands, stats));
        }
        want = want.saturating_mul(2);
    }
}
