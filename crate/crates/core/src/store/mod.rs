//! Embedded sorted key-value store.
//!
//! Three fixed tables hold rows in lexicographic key order. A row holds
//! columns addressed by `(family, column)`, and each column keeps its cells
//! newest-first by timestamp. Cells start in the in-memory tier and are
//! demoted through the disk tiers by [`Store::age_tick`]; cells leaving the
//! last disk tier are handed to an [`AgedSink`] (the archiver). Disk tiers are
//! append-only logs, either files under a data directory or in-memory buffers.
//!
//! Every operation is atomic per row. There are no cross-row transactions.

mod key;
mod tier;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Bound;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use key::RowKey;
pub use tier::{decode_tier_log, TierRecord};
use tier::{Extent, TierLog};

use crate::types::Timestamp;

/// Column family names are fixed by the table schemas.
pub type Family = &'static str;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("scan range start {start:?} is after end {end:?}")]
    InvalidRange { start: RowKey, end: RowKey },
    #[error("invalid store configuration: {0}")]
    Config(String),
    #[error("tier log i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TableName {
    Location,
    SpatialIndex,
    Affiliation,
}

impl TableName {
    pub const ALL: [TableName; 3] = [TableName::Location, TableName::SpatialIndex, TableName::Affiliation];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TableName::Location => "Location",
            TableName::SpatialIndex => "SpatialIndex",
            TableName::Affiliation => "Affiliation",
        }
    }
}

impl fmt::Display for TableName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableName {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TableName::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| StoreError::UnknownTable(s.to_string()))
    }
}

/// Storage tier of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Memory,
    Disk(u8),
}

impl Tier {
    fn rank(self) -> usize {
        match self {
            Tier::Memory => 0,
            Tier::Disk(i) => i as usize + 1,
        }
    }

    fn from_rank(rank: usize) -> Tier {
        if rank == 0 {
            Tier::Memory
        } else {
            Tier::Disk((rank - 1) as u8)
        }
    }
}

/// A materialized cell as returned by reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub family: Family,
    pub column: Vec<u8>,
    pub timestamp: Timestamp,
    pub value: Vec<u8>,
    pub tier: Tier,
}

/// A column name.
pub type Column = Vec<u8>;

/// Receives cells that age out of the last disk tier, or rows evicted
/// wholesale. Implementations must not call back into the store.
pub trait AgedSink: Send + Sync {
    fn accept(&self, table: TableName, row: &RowKey, cell: Cell);
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Residence time in seconds for each tier: in-memory first, then each disk tier.
    pub tier_ttls: Vec<f64>,
    /// Directory for disk-tier logs; `None` keeps them in memory.
    pub data_dir: Option<PathBuf>,
    /// Number of lock shards per table.
    pub shards: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { tier_ttls: vec![30.0, 120.0, 600.0], data_dir: None, shards: 64 }
    }
}

impl StoreConfig {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.tier_ttls.is_empty() {
            return Err(StoreError::Config("at least one tier is required".into()));
        }
        if self.tier_ttls.iter().any(|t| !(*t > 0.0)) {
            return Err(StoreError::Config("tier TTLs must be positive".into()));
        }
        if self.shards == 0 {
            return Err(StoreError::Config("shard count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Payload {
    Inline(Vec<u8>),
    Spilled(Extent),
}

#[derive(Debug)]
struct StoredCell {
    timestamp: Timestamp,
    tier: Tier,
    payload: Payload,
}

type ColumnKey = (Family, Vec<u8>);

#[derive(Debug, Default)]
struct Row {
    columns: BTreeMap<ColumnKey, Vec<StoredCell>>,
}

enum Partition {
    Hash,
    /// Shard `i > 0` starts at `splits[i - 1]`.
    Range(Vec<RowKey>),
}

impl Partition {
    fn shard_of(&self, key: &RowKey, shards: usize) -> usize {
        match self {
            Partition::Hash => {
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                for b in key.as_bytes() {
                    h ^= u64::from(*b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
                (h % shards as u64) as usize
            }
            Partition::Range(splits) => splits.partition_point(|s| s <= key),
        }
    }
}

type Shard = RwLock<BTreeMap<RowKey, Row>>;

struct Table {
    name: TableName,
    aged_families: &'static [Family],
    shards: Vec<Shard>,
    partition: Partition,
    tiers: Vec<Mutex<TierLog>>,
    writes: AtomicU64,
    reads: AtomicU64,
}

impl Table {
    fn shard(&self, key: &RowKey) -> &Shard {
        &self.shards[self.partition.shard_of(key, self.shards.len())]
    }

    fn shards_for_range(&self, start: &RowKey, end: Option<&RowKey>) -> std::ops::RangeInclusive<usize> {
        match (&self.partition, end) {
            (Partition::Range(_), Some(end)) => {
                let n = self.shards.len();
                self.partition.shard_of(start, n)..=self.partition.shard_of(end, n)
            }
            (Partition::Range(_), None) => self.partition.shard_of(start, self.shards.len())..=self.shards.len() - 1,
            (Partition::Hash, _) => 0..=self.shards.len() - 1,
        }
    }

    fn materialize(&self, family: Family, column: &[u8], cell: &StoredCell) -> Result<Cell, StoreError> {
        let value = match &cell.payload {
            Payload::Inline(v) => v.clone(),
            Payload::Spilled(extent) => self.tiers[cell.tier.rank() - 1].lock().read(*extent)?,
        };
        Ok(Cell { family, column: column.to_vec(), timestamp: cell.timestamp, value, tier: cell.tier })
    }

    fn materialize_row(&self, row: &Row) -> Result<Vec<Cell>, StoreError> {
        let mut out = Vec::new();
        for ((family, column), cells) in &row.columns {
            for cell in cells {
                out.push(self.materialize(family, column, cell)?);
            }
        }
        Ok(out)
    }
}

/// Spatial Index Table shards split on the first three Hilbert digits.
fn spatial_splits(shards: usize) -> Vec<RowKey> {
    let mut all = Vec::with_capacity(64);
    for a in b'0'..=b'3' {
        for b in b'0'..=b'3' {
            for c in b'0'..=b'3' {
                all.push(RowKey::new(vec![a, b, c]));
            }
        }
    }
    let n = shards.clamp(1, 64);
    (1..n).map(|i| all[i * 64 / n].clone()).collect()
}

/// Operation counters for one table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableStats {
    pub writes: u64,
    pub reads: u64,
    pub rows: usize,
    pub cells: usize,
}

pub struct Store {
    tables: [Table; 3],
    cumulative: Vec<u64>,
    sink: RwLock<Option<Arc<dyn AgedSink>>>,
    handed_off: AtomicU64,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("tiers", &self.cumulative.len()).finish_non_exhaustive()
    }
}

impl Store {
    pub fn new(config: StoreConfig) -> Result<Self, StoreError> {
        config.validate()?;
        let disk_tiers = config.tier_ttls.len() - 1;
        if let Some(dir) = &config.data_dir {
            std::fs::create_dir_all(dir)?;
        }
        let mk_table = |name: TableName, aged: &'static [Family], partition: Partition, shards: usize| -> Result<Table, StoreError> {
            let tiers = (0..disk_tiers)
                .map(|i| {
                    Ok(Mutex::new(match &config.data_dir {
                        Some(dir) => TierLog::create(&dir.join(format!("{}.disk{}.log", name.as_str().to_lowercase(), i)))?,
                        None => TierLog::in_memory(),
                    }))
                })
                .collect::<Result<Vec<_>, StoreError>>()?;
            Ok(Table {
                name,
                aged_families: aged,
                shards: (0..shards).map(|_| RwLock::new(BTreeMap::new())).collect(),
                partition,
                tiers,
                writes: AtomicU64::new(0),
                reads: AtomicU64::new(0),
            })
        };
        let spatial_shards = config.shards.clamp(1, 64);
        let tables = [
            mk_table(TableName::Location, &[schema::LOC_FAMILY], Partition::Hash, config.shards)?,
            mk_table(TableName::SpatialIndex, &[], Partition::Range(spatial_splits(spatial_shards)), spatial_shards)?,
            mk_table(TableName::Affiliation, &[schema::LF_FAMILY], Partition::Hash, config.shards)?,
        ];
        let mut acc = 0u64;
        let cumulative = config
            .tier_ttls
            .iter()
            .map(|ttl| {
                acc += (ttl * 1e6).round() as u64;
                acc
            })
            .collect();
        Ok(Self { tables, cumulative, sink: RwLock::new(None), handed_off: AtomicU64::new(0) })
    }

    pub fn in_memory() -> Self {
        Self::new(StoreConfig::default()).expect("default store config is valid")
    }

    pub fn set_sink(&self, sink: Arc<dyn AgedSink>) {
        *self.sink.write() = Some(sink);
    }

    pub fn tier_count(&self) -> usize {
        self.cumulative.len()
    }

    fn table(&self, name: TableName) -> &Table {
        &self.tables[name.slot()]
    }

    pub fn put(&self, table: TableName, row: &RowKey, family: Family, column: &[u8], value: Vec<u8>, t: Timestamp) {
        let table = self.table(table);
        let mut shard = table.shard(row).write();
        let cells = shard
            .entry(row.clone())
            .or_default()
            .columns
            .entry((family, column.to_vec()))
            .or_default();
        let at = cells.partition_point(|c| c.timestamp > t);
        cells.insert(at, StoredCell { timestamp: t, tier: Tier::Memory, payload: Payload::Inline(value) });
        table.writes.fetch_add(1, Ordering::Relaxed);
    }

    /// All cells of a row, grouped by column and newest-first within each.
    pub fn get_row(&self, table: TableName, row: &RowKey) -> Result<Vec<Cell>, StoreError> {
        let table = self.table(table);
        table.reads.fetch_add(1, Ordering::Relaxed);
        let shard = table.shard(row).read();
        match shard.get(row) {
            Some(r) => table.materialize_row(r),
            None => Ok(Vec::new()),
        }
    }

    /// Newest cell of one column.
    pub fn latest(&self, table: TableName, row: &RowKey, family: Family, column: &[u8]) -> Result<Option<Cell>, StoreError> {
        let table = self.table(table);
        table.reads.fetch_add(1, Ordering::Relaxed);
        let shard = table.shard(row).read();
        let Some(r) = shard.get(row) else { return Ok(None) };
        match r.columns.get(&(family, column.to_vec())).and_then(|c| c.first()) {
            Some(cell) => Ok(Some(table.materialize(family, column, cell)?)),
            None => Ok(None),
        }
    }

    /// Newest cell of every column in `family`, in column order.
    pub fn latest_in_family(&self, table: TableName, row: &RowKey, family: Family) -> Result<Vec<Cell>, StoreError> {
        let table = self.table(table);
        table.reads.fetch_add(1, Ordering::Relaxed);
        let shard = table.shard(row).read();
        let Some(r) = shard.get(row) else { return Ok(Vec::new()) };
        r.columns
            .iter()
            .filter(|((f, _), _)| *f == family)
            .filter_map(|((f, col), cells)| cells.first().map(|c| table.materialize(f, col, c)))
            .collect()
    }

    /// Rows with `start <= key < end`, in key order, each read atomically.
    pub fn scan_range(&self, table: TableName, start: &RowKey, end: &RowKey) -> Result<Vec<(RowKey, Vec<Cell>)>, StoreError> {
        if start > end {
            return Err(StoreError::InvalidRange { start: start.clone(), end: end.clone() });
        }
        self.scan_bounds(table, start, Some(end))
    }

    /// Every row of a table, in key order.
    pub fn scan_all(&self, table: TableName) -> Result<Vec<(RowKey, Vec<Cell>)>, StoreError> {
        self.scan_bounds(table, &RowKey::default(), None)
    }

    fn scan_bounds(&self, table_name: TableName, start: &RowKey, end: Option<&RowKey>) -> Result<Vec<(RowKey, Vec<Cell>)>, StoreError> {
        let table = self.table(table_name);
        table.reads.fetch_add(1, Ordering::Relaxed);
        let upper = match end {
            Some(e) => Bound::Excluded(e.clone()),
            None => Bound::Unbounded,
        };
        let mut out = Vec::new();
        for i in table.shards_for_range(start, end) {
            let shard = table.shards[i].read();
            for (k, row) in shard.range((Bound::Included(start.clone()), upper.clone())) {
                out.push((k.clone(), table.materialize_row(row)?));
            }
        }
        if matches!(table.partition, Partition::Hash) {
            out.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Ok(out)
    }

    /// Column names present in `family` for rows in `[start, end)`, in key
    /// order; cheaper than [`Store::scan_range`] when values are not needed.
    pub fn scan_columns(&self, table: TableName, start: &RowKey, end: &RowKey, family: Family) -> Result<Vec<(RowKey, Vec<Column>)>, StoreError> {
        if start > end {
            return Err(StoreError::InvalidRange { start: start.clone(), end: end.clone() });
        }
        let t = self.table(table);
        t.reads.fetch_add(1, Ordering::Relaxed);
        let mut out = Vec::new();
        for i in t.shards_for_range(start, Some(end)) {
            let shard = t.shards[i].read();
            for (k, row) in shard.range(start.clone()..end.clone()) {
                let cols: Vec<Vec<u8>> = row
                    .columns
                    .keys()
                    .filter(|(f, _)| *f == family)
                    .map(|(_, c)| c.clone())
                    .collect();
                if !cols.is_empty() {
                    out.push((k.clone(), cols));
                }
            }
        }
        if matches!(t.partition, Partition::Hash) {
            out.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Ok(out)
    }

    /// Removes every cell of one column. Idempotent.
    pub fn delete(&self, table: TableName, row: &RowKey, family: Family, column: &[u8]) -> bool {
        let t = self.table(table);
        let mut shard = t.shard(row).write();
        let Some(r) = shard.get_mut(row) else { return false };
        let removed = r.columns.remove(&(family, column.to_vec())).is_some();
        if r.columns.is_empty() {
            shard.remove(row);
        }
        if removed {
            t.writes.fetch_add(1, Ordering::Relaxed);
        }
        removed
    }

    /// Removes a whole row, handing cells of aged families to the sink
    /// instead of discarding them. Returns the number of cells removed.
    pub fn evict_row(&self, table: TableName, row: &RowKey) -> Result<usize, StoreError> {
        let t = self.table(table);
        let removed = t.shard(row).write().remove(row);
        let Some(removed) = removed else { return Ok(0) };
        t.writes.fetch_add(1, Ordering::Relaxed);
        let mut handed = Vec::new();
        let mut count = 0;
        for ((family, column), cells) in &removed.columns {
            for cell in cells.iter().rev() {
                count += 1;
                if t.aged_families.contains(family) {
                    handed.push(t.materialize(family, column, cell)?);
                }
            }
        }
        self.hand_off(table, row, handed);
        Ok(count)
    }

    fn hand_off(&self, table: TableName, row: &RowKey, cells: Vec<Cell>) {
        if cells.is_empty() {
            return;
        }
        let sink = self.sink.read().clone();
        if let Some(sink) = sink {
            self.handed_off.fetch_add(cells.len() as u64, Ordering::Relaxed);
            for cell in cells {
                sink.accept(table, row, cell);
            }
        }
    }

    /// Tier a cell of the given age should occupy; `tier_count()` means "archive".
    fn target_rank(&self, now: Timestamp, ts: Timestamp) -> usize {
        let age = now.0.saturating_sub(ts.0);
        self.cumulative.iter().take_while(|c| age > **c).count()
    }

    fn wants_move(&self, now: Timestamp, cell: &StoredCell, pinned: bool, has_sink: bool) -> bool {
        let mut target = self.target_rank(now, cell.timestamp);
        if pinned || !has_sink {
            target = target.min(self.tier_count() - 1);
        }
        target > cell.tier.rank()
    }

    /// Demotes every cell whose age exceeds its tier's residence time. The
    /// newest cell of each column may descend tiers but is never handed off,
    /// so the current value of a column is always readable. Returns the
    /// number of cells moved or handed off.
    pub fn age_tick(&self, now: Timestamp) -> Result<usize, StoreError> {
        let has_sink = self.sink.read().is_some();
        let mut moved = 0;
        for table in &self.tables {
            if table.aged_families.is_empty() {
                continue;
            }
            for shard in &table.shards {
                let candidates: Vec<RowKey> = shard
                    .read()
                    .iter()
                    .filter(|(_, row)| {
                        row.columns.iter().any(|((f, _), cells)| {
                            table.aged_families.contains(f)
                                && cells.iter().enumerate().any(|(i, c)| self.wants_move(now, c, i == 0, has_sink))
                        })
                    })
                    .map(|(k, _)| k.clone())
                    .collect();
                for key in candidates {
                    let mut handed = Vec::new();
                    {
                        let mut guard = shard.write();
                        let Some(row) = guard.get_mut(&key) else { continue };
                        for ((family, column), cells) in row.columns.iter_mut() {
                            if !table.aged_families.contains(family) {
                                continue;
                            }
                            let mut i = 0;
                            while i < cells.len() {
                                let pinned = i == 0;
                                if !self.wants_move(now, &cells[i], pinned, has_sink) {
                                    i += 1;
                                    continue;
                                }
                                let target = self.target_rank(now, cells[i].timestamp);
                                moved += 1;
                                if target >= self.tier_count() && !pinned && has_sink {
                                    let cell = cells.remove(i);
                                    handed.push(table.materialize(family, column, &cell)?);
                                    continue;
                                }
                                let target = target.min(self.tier_count() - 1);
                                let value = match &cells[i].payload {
                                    Payload::Inline(v) => v.clone(),
                                    Payload::Spilled(e) => table.tiers[cells[i].tier.rank() - 1].lock().read(*e)?,
                                };
                                let extent = table.tiers[target - 1].lock().append(
                                    key.as_bytes(),
                                    family.as_bytes(),
                                    column,
                                    cells[i].timestamp,
                                    &value,
                                )?;
                                cells[i].payload = Payload::Spilled(extent);
                                cells[i].tier = Tier::from_rank(target);
                                i += 1;
                            }
                        }
                        row.columns.retain(|_, cells| !cells.is_empty());
                        if row.columns.is_empty() {
                            guard.remove(&key);
                        }
                    }
                    self.hand_off(table.name, &key, handed);
                }
            }
        }
        Ok(moved)
    }

    /// Hands every cell of every aged family to the sink and removes it,
    /// newest cells included. Used at shutdown to drain the engine into the
    /// archive.
    pub fn drain_to_sink(&self) -> Result<usize, StoreError> {
        let mut total = 0;
        for table in &self.tables {
            if table.aged_families.is_empty() {
                continue;
            }
            for shard in &table.shards {
                let keys: Vec<RowKey> = shard.read().keys().cloned().collect();
                for key in keys {
                    let mut handed = Vec::new();
                    {
                        let mut guard = shard.write();
                        let Some(row) = guard.get_mut(&key) else { continue };
                        let aged: Vec<ColumnKey> = row
                            .columns
                            .keys()
                            .filter(|(f, _)| table.aged_families.contains(f))
                            .cloned()
                            .collect();
                        for ck in aged {
                            let cells = row.columns.remove(&ck).unwrap_or_default();
                            // Oldest first so the sink sees each column in time order.
                            for cell in cells.iter().rev() {
                                handed.push(table.materialize(ck.0, &ck.1, cell)?);
                            }
                        }
                        if row.columns.is_empty() {
                            guard.remove(&key);
                        }
                    }
                    total += handed.len();
                    self.hand_off(table.name, &key, handed);
                }
            }
        }
        Ok(total)
    }

    pub fn stats(&self, table: TableName) -> TableStats {
        let t = self.table(table);
        let (mut rows, mut cells) = (0, 0);
        for shard in &t.shards {
            let s = shard.read();
            rows += s.len();
            cells += s.values().flat_map(|r| r.columns.values()).map(Vec::len).sum::<usize>();
        }
        TableStats { writes: t.writes.load(Ordering::Relaxed), reads: t.reads.load(Ordering::Relaxed), rows, cells }
    }

    /// Cell counts per tier (memory first).
    pub fn tier_histogram(&self, table: TableName) -> Vec<usize> {
        let t = self.table(table);
        let mut out = vec![0; self.tier_count()];
        for shard in &t.shards {
            for row in shard.read().values() {
                for cells in row.columns.values() {
                    for c in cells {
                        out[c.tier.rank()] += 1;
                    }
                }
            }
        }
        out
    }

    pub fn handed_off(&self) -> u64 {
        self.handed_off.load(Ordering::Relaxed)
    }

    pub fn writes(&self, table: TableName) -> u64 {
        self.table(table).writes.load(Ordering::Relaxed)
    }

    /// Raw bytes of one disk-tier log.
    pub fn tier_log_bytes(&self, table: TableName, disk_tier: usize) -> Result<Vec<u8>, StoreError> {
        let t = self.table(table);
        let log = t.tiers.get(disk_tier).ok_or_else(|| StoreError::Config(format!("no disk tier {disk_tier}")))?;
        Ok(log.lock().contents()?)
    }
}

/// Families and columns used by the engine's three tables.
pub mod schema {
    use super::Family;

    /// Location Table: `loc:rec` holds the object's location records.
    pub const LOC_FAMILY: Family = "loc";
    pub const LOC_COLUMN: &[u8] = b"rec";
    /// Spatial Index Table: one column per object id in `ids`.
    pub const IDS_FAMILY: Family = "ids";
    /// Affiliation Table: `lf:status` is the leader/follower history,
    /// `fi:<follower id>` the Follower Info of a leader.
    pub const LF_FAMILY: Family = "lf";
    pub const LF_COLUMN: &[u8] = b"status";
    pub const FI_FAMILY: Family = "fi";
}
