//! Archiving of aged location records to simulated parallel disks.
//!
//! Each disk owns two pages: one filling with incoming records, one being
//! flushed. When the filling page reaches capacity the roles swap and the
//! full page is written by a background flusher. Every object is placed on
//! one disk for its whole life, chosen from its id and the clustering cell
//! of its first reported location.
//!
//! Disk timing is simulated: each disk keeps a virtual clock charging
//! `T_rot + T_seek + bytes / R_disk` per flush. A page that fills before the
//! previous flush on its disk has finished counts as a blocked append, which
//! means the configured disks cannot keep up with the update stream.

mod optimizer;
mod page;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use optimizer::{optimize, sweep, DiskModelParams, OptimizeError, OptimizerResult, SweepPoint};
pub use page::{decode_page, decode_pages, ArchivePage, ArchivedRecord, PageError, HEADER_LEN, MAGIC, RECORD_LEN};

use crate::schooling::{codec, RegistrationListener, Status};
use crate::spatial::{MapGeometry, SpatialIndex};
use crate::store::schema::{LF_FAMILY, LOC_FAMILY};
use crate::store::{AgedSink, Cell, RowKey, TableName};
use crate::types::{LocationRecord, ObjectId, Point, Timestamp, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("invalid archive configuration: {0}")]
    Config(String),
    #[error("disk {disk} i/o: {source}")]
    Io { disk: u32, source: io::Error },
    #[error("disk {disk} flush failed: {message}")]
    FlushFailed { disk: u32, message: String },
    #[error("corrupt page on disk {disk}: {source}")]
    Corrupt { disk: u32, source: PageError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskTiming {
    pub t_rot: f64,
    pub t_seek: f64,
    /// Bytes per second.
    pub r_disk: f64,
}

impl Default for DiskTiming {
    fn default() -> Self {
        Self { t_rot: 0.006, t_seek: 0.004, r_disk: 1e8 }
    }
}

/// Simulated duration of one flush of `bytes` record bytes.
pub fn flush_duration(timing: &DiskTiming, bytes: u64) -> f64 {
    timing.t_rot + timing.t_seek + bytes as f64 / timing.r_disk
}

/// Disk holding all archived data of an object, in `1..=disks`.
pub fn placement(id: ObjectId, initial_loc: Point, disks: u32, map: &MapGeometry, level: u8) -> u32 {
    if disks <= 1 {
        return 1;
    }
    let cell = map
        .encode(map.clamp(initial_loc), level)
        .map(|c| c.pos() | (u64::from(c.level()) << 58))
        .unwrap_or(0);
    let h = splitmix64(splitmix64(cell) ^ id);
    (h % u64::from(disks)) as u32 + 1
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct ArchiveConfig {
    pub disks: u32,
    /// Capacity of one disk's page in bytes of records.
    pub page_bytes: u64,
    pub timing: DiskTiming,
    /// Directory for disk files; `None` keeps them in memory.
    pub dir: Option<PathBuf>,
    /// Level of the cells mixed into the placement hash.
    pub placement_level: u8,
    pub map: MapGeometry,
    pub flusher_threads: usize,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        Self {
            disks: 4,
            page_bytes: 48 * 1024,
            timing: DiskTiming::default(),
            dir: None,
            placement_level: 4,
            map: MapGeometry::default(),
            flusher_threads: 2,
        }
    }
}

impl ArchiveConfig {
    pub fn validate(&self) -> Result<(), ArchiveError> {
        if self.disks == 0 {
            return Err(ArchiveError::Config("at least one disk is required".into()));
        }
        if self.page_bytes < RECORD_LEN as u64 {
            return Err(ArchiveError::Config(format!("page size must hold at least one {RECORD_LEN}-byte record")));
        }
        let t = &self.timing;
        if !(t.t_rot >= 0.0 && t.t_seek >= 0.0 && t.r_disk > 0.0) {
            return Err(ArchiveError::Config("disk timing must be non-negative with a positive rate".into()));
        }
        Ok(())
    }

    pub fn page_records(&self) -> usize {
        (self.page_bytes / RECORD_LEN as u64) as usize
    }
}

/// A change of an object's school role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transition {
    BecameLeader,
    BecameFollower { leader: ObjectId, disp: Vec2 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffiliationEvent {
    pub id: ObjectId,
    pub t: Timestamp,
    pub transition: Transition,
}

impl AffiliationEvent {
    pub fn from_status(id: ObjectId, status: &Status) -> Self {
        let transition = match *status {
            Status::Leader { .. } => Transition::BecameLeader,
            Status::Follower { leader, disp, .. } => Transition::BecameFollower { leader, disp },
        };
        Self { id, t: status.since(), transition }
    }
}

/// Simulated clock and counters of one disk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiskClock {
    /// Latest record timestamp seen, seconds.
    pub fill_clock: f64,
    /// Simulated end of the latest flush, seconds.
    pub flush_end: f64,
    pub flushes: u64,
    pub bytes: u64,
    /// Simulated seconds spent positioning.
    pub latency_time: f64,
    /// Simulated seconds spent transferring.
    pub transfer_time: f64,
    pub blocked: u64,
    /// Largest single flush duration, seconds.
    pub max_flush: f64,
}

impl DiskClock {
    /// Write utilization: transfer time per unit of positioning time.
    pub fn utilization(&self) -> f64 {
        if self.latency_time == 0.0 {
            0.0
        } else {
            self.transfer_time / self.latency_time
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PageMeta {
    offset: u64,
    len: u64,
    min_t: Timestamp,
    max_t: Timestamp,
}

enum Backing {
    Memory(Vec<u8>),
    File(File),
}

impl Backing {
    fn append(&mut self, bytes: &[u8]) -> io::Result<u64> {
        match self {
            Backing::Memory(v) => {
                let at = v.len() as u64;
                v.extend_from_slice(bytes);
                Ok(at)
            }
            Backing::File(f) => {
                let at = f.seek(SeekFrom::End(0))?;
                f.write_all(bytes)?;
                Ok(at)
            }
        }
    }

    fn read(&mut self, offset: u64, len: u64) -> io::Result<Vec<u8>> {
        match self {
            Backing::Memory(v) => v
                .get(offset as usize..(offset + len) as usize)
                .map(<[u8]>::to_vec)
                .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "read past end")),
            Backing::File(f) => {
                let mut buf = vec![0; len as usize];
                f.seek(SeekFrom::Start(offset))?;
                f.read_exact(&mut buf)?;
                Ok(buf)
            }
        }
    }

    fn contents(&mut self) -> io::Result<Vec<u8>> {
        match self {
            Backing::Memory(v) => Ok(v.clone()),
            Backing::File(f) => {
                let mut buf = Vec::new();
                f.seek(SeekFrom::Start(0))?;
                f.read_to_end(&mut buf)?;
                Ok(buf)
            }
        }
    }
}

#[derive(Default)]
struct DiskState {
    filling: Vec<ArchivedRecord>,
    in_flight: Option<Arc<ArchivePage>>,
    pages: Vec<PageMeta>,
    retained: Vec<ArchivePage>,
    seq: u64,
    clock: DiskClock,
    error: Option<String>,
    waits: u64,
}

struct Disk {
    id: u32,
    state: Mutex<DiskState>,
    done: Condvar,
    backing: Mutex<Backing>,
}

impl Disk {
    fn wait_idle<'a>(&self, st: &mut parking_lot::MutexGuard<'a, DiskState>) {
        while st.in_flight.is_some() {
            self.done.wait(st);
        }
    }
}

enum Job {
    Flush(Arc<Disk>, Arc<ArchivePage>),
    Stop,
}

fn run_flusher(rx: mpsc::Receiver<Job>) {
    while let Ok(Job::Flush(disk, page)) = rx.recv() {
        let result = disk.backing.lock().append(&page.encode());
        let mut st = disk.state.lock();
        match result {
            Ok(offset) => {
                let len = (HEADER_LEN + page.records.len() * RECORD_LEN) as u64;
                st.pages.push(PageMeta { offset, len, min_t: page.min_t, max_t: page.max_t });
            }
            Err(e) => {
                st.error = Some(e.to_string());
                st.retained.push((*page).clone());
            }
        }
        st.in_flight = None;
        disk.done.notify_all();
    }
}

/// Counters over all disks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveStats {
    pub appended: u64,
    pub events: u64,
    pub pages: u64,
    pub blocked_appends: u64,
    /// Times an append actually waited for a flush thread.
    pub flush_waits: u64,
    pub disks: Vec<DiskClock>,
}

pub struct Archiver {
    cfg: ArchiveConfig,
    capacity: usize,
    disks: Vec<Arc<Disk>>,
    placements: RwLock<HashMap<ObjectId, u32>>,
    events: Mutex<BTreeMap<ObjectId, Vec<AffiliationEvent>>>,
    event_log: Mutex<Backing>,
    senders: Vec<Mutex<mpsc::Sender<Job>>>,
    threads: Mutex<Vec<JoinHandle<()>>>,
    appended: AtomicU64,
}

impl std::fmt::Debug for Archiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Archiver").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Archiver {
    pub fn new(cfg: ArchiveConfig) -> Result<Self, ArchiveError> {
        cfg.validate()?;
        let open = |name: String, disk: u32| -> Result<Backing, ArchiveError> {
            match &cfg.dir {
                None => Ok(Backing::Memory(Vec::new())),
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|source| ArchiveError::Io { disk, source })?;
                    OpenOptions::new()
                        .create(true)
                        .truncate(true)
                        .read(true)
                        .write(true)
                        .open(dir.join(name))
                        .map(Backing::File)
                        .map_err(|source| ArchiveError::Io { disk, source })
                }
            }
        };
        let disks = (1..=cfg.disks)
            .map(|id| {
                Ok(Arc::new(Disk {
                    id,
                    state: Mutex::new(DiskState::default()),
                    done: Condvar::new(),
                    backing: Mutex::new(open(format!("disk-{id:03}.pages"), id)?),
                }))
            })
            .collect::<Result<Vec<_>, ArchiveError>>()?;
        let event_log = Mutex::new(open("affiliation.events".into(), 0)?);
        let n_threads = cfg.flusher_threads.clamp(1, cfg.disks as usize);
        let mut senders = Vec::new();
        let mut threads = Vec::new();
        for _ in 0..n_threads {
            let (tx, rx) = mpsc::channel();
            senders.push(Mutex::new(tx));
            threads.push(std::thread::spawn(move || run_flusher(rx)));
        }
        Ok(Self {
            capacity: cfg.page_records(),
            cfg,
            disks,
            placements: RwLock::new(HashMap::new()),
            events: Mutex::new(BTreeMap::new()),
            event_log,
            senders,
            threads: Mutex::new(threads),
            appended: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ArchiveConfig {
        &self.cfg
    }

    /// Fixes an object's disk from its first location. Later calls are no-ops.
    pub fn register(&self, id: ObjectId, initial_loc: Point) -> u32 {
        if let Some(d) = self.placements.read().get(&id) {
            return *d;
        }
        let d = placement(id, initial_loc, self.cfg.disks, &self.cfg.map, self.cfg.placement_level);
        *self.placements.write().entry(id).or_insert(d)
    }

    /// Disk of a registered object.
    pub fn disk_of(&self, id: ObjectId) -> Option<u32> {
        self.placements.read().get(&id).copied()
    }

    /// Adds one record to the filling page of the object's disk, swapping
    /// pages and starting a flush when the page is full.
    pub fn append(&self, id: ObjectId, rec: LocationRecord) {
        let disk = Arc::clone(&self.disks[self.register(id, rec.loc) as usize - 1]);
        self.appended.fetch_add(1, Ordering::Relaxed);
        let mut st = disk.state.lock();
        st.clock.fill_clock = st.clock.fill_clock.max(rec.t.as_secs_f64());
        st.filling.push(ArchivedRecord { id, rec });
        if st.filling.len() >= self.capacity {
            self.start_flush(&disk, &mut st, true);
        }
    }

    fn start_flush(&self, disk: &Arc<Disk>, st: &mut parking_lot::MutexGuard<'_, DiskState>, full: bool) {
        if st.in_flight.is_some() {
            st.waits += 1;
            disk.wait_idle(st);
        }
        let records = std::mem::take(&mut st.filling);
        let page = ArchivePage::new(disk.id, st.seq, records);
        st.seq += 1;
        let bytes = page.payload_bytes();
        let t = &self.cfg.timing;
        let c = &mut st.clock;
        if full && c.flush_end > c.fill_clock {
            c.blocked += 1;
        }
        let start = c.flush_end.max(c.fill_clock);
        let duration = flush_duration(t, bytes);
        c.flush_end = start + duration;
        c.flushes += 1;
        c.bytes += bytes;
        c.latency_time += t.t_rot + t.t_seek;
        c.transfer_time += bytes as f64 / t.r_disk;
        c.max_flush = c.max_flush.max(duration);
        let page = Arc::new(page);
        st.in_flight = Some(Arc::clone(&page));
        let tx = &self.senders[(disk.id as usize - 1) % self.senders.len()];
        if tx.lock().send(Job::Flush(Arc::clone(disk), page)).is_err() {
            st.error = Some("flusher stopped".into());
            if let Some(p) = st.in_flight.take() {
                st.retained.push((*p).clone());
            }
        }
    }

    /// Records an affiliation change.
    pub fn record_event(&self, ev: AffiliationEvent) {
        let line = match ev.transition {
            Transition::BecameLeader => format!("{} {} L\n", ev.t, ev.id),
            Transition::BecameFollower { leader, disp } => format!("{} {} F {} {} {}\n", ev.t, ev.id, leader, disp.x, disp.y),
        };
        let _ = self.event_log.lock().append(line.as_bytes());
        let mut events = self.events.lock();
        let list = events.entry(ev.id).or_default();
        let at = list.partition_point(|e| e.t <= ev.t);
        list.insert(at, ev);
    }

    /// Affiliation events of one object, in time order.
    pub fn events_of(&self, id: ObjectId) -> Vec<AffiliationEvent> {
        self.events.lock().get(&id).cloned().unwrap_or_default()
    }

    /// Flushes every partially filled page and waits for all flushes.
    pub fn drain(&self) -> Result<(), ArchiveError> {
        for disk in &self.disks {
            let mut st = disk.state.lock();
            disk.wait_idle(&mut st);
            if !st.filling.is_empty() {
                self.start_flush(disk, &mut st, false);
                disk.wait_idle(&mut st);
            }
            if let Some(message) = st.error.clone() {
                return Err(ArchiveError::FlushFailed { disk: disk.id, message });
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> ArchiveStats {
        let mut s = ArchiveStats {
            appended: self.appended.load(Ordering::Relaxed),
            events: self.events.lock().values().map(|v| v.len() as u64).sum(),
            ..ArchiveStats::default()
        };
        for d in &self.disks {
            let st = d.state.lock();
            s.pages += st.pages.len() as u64;
            s.blocked_appends += st.clock.blocked;
            s.flush_waits += st.waits;
            s.disks.push(st.clock);
        }
        s
    }

    /// Pages written to one disk, in write order.
    pub fn pages(&self, disk: u32) -> Result<Vec<ArchivePage>, ArchiveError> {
        let d = self.disk(disk)?;
        let bytes = {
            let mut st = d.state.lock();
            d.wait_idle(&mut st);
            d.backing.lock().contents().map_err(|source| ArchiveError::Io { disk, source })?
        };
        decode_pages(&bytes).map_err(|source| ArchiveError::Corrupt { disk, source })
    }

    fn disk(&self, disk: u32) -> Result<&Arc<Disk>, ArchiveError> {
        self.disks
            .get((disk as usize).wrapping_sub(1))
            .ok_or_else(|| ArchiveError::Config(format!("no disk {disk}")))
    }

    /// Records on one disk with timestamps in `[from, to)`, read after any
    /// in-flight flush of that disk completes. Pages whose header range
    /// misses the window are skipped. Records not yet flushed are included.
    pub fn disk_records(&self, disk: u32, from: Timestamp, to: Timestamp) -> Result<Vec<ArchivedRecord>, ArchiveError> {
        let d = self.disk(disk)?;
        let (metas, mut out) = {
            let mut st = d.state.lock();
            d.wait_idle(&mut st);
            let pending: Vec<ArchivedRecord> =
                st.filling.iter().chain(st.retained.iter().flat_map(|p| p.records.iter())).copied().collect();
            (st.pages.clone(), pending)
        };
        out.retain(|r| r.rec.t >= from && r.rec.t < to);
        let mut backing = d.backing.lock();
        for m in metas.iter().filter(|m| m.max_t >= from && m.min_t < to) {
            let bytes = backing.read(m.offset, m.len).map_err(|source| ArchiveError::Io { disk, source })?;
            let (page, _) = decode_page(&bytes, 0).map_err(|source| ArchiveError::Corrupt { disk, source })?;
            out.extend(page.records.into_iter().filter(|r| r.rec.t >= from && r.rec.t < to));
        }
        Ok(out)
    }

    /// Role intervals `[start, end)` of an object derived from its events.
    fn intervals(&self, id: ObjectId) -> Vec<(Timestamp, Timestamp, Transition)> {
        let evs = self.events_of(id);
        evs.iter()
            .enumerate()
            .map(|(i, e)| (e.t, evs.get(i + 1).map_or(Timestamp::MAX, |n| n.t), e.transition))
            .collect()
    }

    /// An object's archived trajectory in `[from, to)`, in time order. Its
    /// own records come from its disk; while it was a follower, positions
    /// are its leader's archived records shifted by the displacement.
    pub fn query_history_by_object(&self, id: ObjectId, from: Timestamp, to: Timestamp) -> Result<Vec<LocationRecord>, ArchiveError> {
        let Some(disk) = self.disk_of(id) else { return Ok(Vec::new()) };
        let mut out: Vec<LocationRecord> =
            self.disk_records(disk, from, to)?.into_iter().filter(|r| r.id == id).map(|r| r.rec).collect();
        for (start, end, tr) in self.intervals(id) {
            let Transition::BecameFollower { leader, disp } = tr else { continue };
            let (lo, hi) = (start.max(from), end.min(to));
            if lo >= hi {
                continue;
            }
            let Some(ld) = self.disk_of(leader) else { continue };
            for r in self.disk_records(ld, lo, hi)? {
                if r.id == leader {
                    out.push(LocationRecord::new(r.rec.loc + disp, r.rec.vel, r.rec.t));
                }
            }
        }
        out.sort_by_key(|r| r.t);
        Ok(out)
    }

    /// Every archived record, including reconstructed follower records,
    /// located in `cell` with a timestamp in `[from, to)`, ordered by
    /// `(timestamp, id)`.
    pub fn query_history_by_region(
        &self,
        cell: SpatialIndex,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<(ObjectId, LocationRecord)>, ArchiveError> {
        if from >= to {
            return Ok(Vec::new());
        }
        let map = self.cfg.map;
        let inside = |p: Point| map.contains(p) && map.encode(p, cell.level()).is_ok_and(|c| c == cell);
        // Follower intervals indexed by leader.
        let mut by_leader: HashMap<ObjectId, Vec<(ObjectId, Timestamp, Timestamp, Vec2)>> = HashMap::new();
        for (&id, evs) in self.events.lock().iter() {
            for (i, e) in evs.iter().enumerate() {
                if let Transition::BecameFollower { leader, disp } = e.transition {
                    let end = evs.get(i + 1).map_or(Timestamp::MAX, |n| n.t);
                    by_leader.entry(leader).or_default().push((id, e.t, end, disp));
                }
            }
        }
        let mut out = Vec::new();
        for disk in 1..=self.cfg.disks {
            for r in self.disk_records(disk, from, to)? {
                if inside(r.rec.loc) {
                    out.push((r.id, r.rec));
                }
                for &(f, start, end, disp) in by_leader.get(&r.id).map(Vec::as_slice).unwrap_or(&[]) {
                    if r.rec.t >= start && r.rec.t < end {
                        let p = r.rec.loc + disp;
                        if inside(p) {
                            out.push((f, LocationRecord::new(p, r.rec.vel, r.rec.t)));
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.t.cmp(&b.1.t).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    /// Raw affiliation event log.
    pub fn event_log_bytes(&self) -> io::Result<Vec<u8>> {
        self.event_log.lock().contents()
    }

    fn shutdown(&self) {
        for tx in &self.senders {
            let _ = tx.lock().send(Job::Stop);
        }
        for h in self.threads.lock().drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for Archiver {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl AgedSink for Archiver {
    fn accept(&self, table: TableName, row: &RowKey, cell: Cell) {
        let Some(id) = row.to_id() else { return };
        match (table, cell.family) {
            (TableName::Location, LOC_FAMILY) => {
                if let Some(rec) = codec::decode_record(&cell.value, cell.timestamp) {
                    self.append(id, rec);
                }
            }
            (TableName::Affiliation, LF_FAMILY) => {
                if let Some(st) = codec::decode_status(&cell.value, cell.timestamp) {
                    self.record_event(AffiliationEvent::from_status(id, &st));
                }
            }
            _ => {}
        }
    }
}

impl RegistrationListener for Archiver {
    fn registered(&self, id: ObjectId, loc: Point, _t: Timestamp) {
        self.register(id, loc);
    }
}

#[cfg(test)]
mod tests;
