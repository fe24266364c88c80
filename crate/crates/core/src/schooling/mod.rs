//! Object schools: the update procedure that sheds follower updates, follower
//! location estimation, and periodic velocity-space reclustering.
//!
//! A school is one leader plus followers whose positions are modeled as the
//! leader's extrapolated position plus a fixed displacement. Only leaders
//! have rows in the Location and Spatial Index tables.

mod cluster;
pub mod codec;
mod hex;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard, RwLock};
use serde::{Deserialize, Serialize};

pub use cluster::{ClusterScheduler, MergeStats};
pub use hex::{hex_center, hex_radius, hexagon_bin, HexBin};

use crate::spatial::{LevelConfig, SpatialError};
use crate::store::schema::{FI_FAMILY, IDS_FAMILY, LF_COLUMN, LF_FAMILY, LOC_COLUMN, LOC_FAMILY};
use crate::store::{RowKey, Store, StoreError, TableName};
use crate::types::{LocationRecord, ObjectId, Point, Timestamp, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum SchoolError {
    #[error("stale update for object {id}: {t} is before {last}")]
    Stale { id: ObjectId, t: Timestamp, last: Timestamp },
    #[error("update for object {id} has a non-finite or out-of-map value")]
    BadUpdate { id: ObjectId },
    #[error("object {0} is unknown")]
    Unknown(ObjectId),
    #[error("object {0} is not a leader")]
    NotLeader(ObjectId),
    #[error("object {0} is not a follower")]
    NotFollower(ObjectId),
    #[error("cannot merge school {0} into itself")]
    SelfMerge(ObjectId),
    #[error("affiliation inconsistency: {0}")]
    Inconsistent(String),
    #[error("invalid schooling configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchoolConfig {
    /// Largest distance between a follower's report and its estimate that is still shed.
    pub epsilon: f64,
    /// Largest velocity difference between two leaders merged into one school.
    pub delta_m: f64,
    /// Seconds between two reclusterings of the same clustering cell; infinite disables clustering.
    pub cluster_interval: f64,
    /// Level of the clustering cells.
    pub clustering_level: u8,
    /// Longest time span, in seconds, over which a recorded velocity is extrapolated.
    pub extrapolation_cap: f64,
}

impl Default for SchoolConfig {
    fn default() -> Self {
        Self { epsilon: 64.0, delta_m: 4.0, cluster_interval: 15.0, clustering_level: 2, extrapolation_cap: 30.0 }
    }
}

impl SchoolConfig {
    pub fn validate(&self, levels: &LevelConfig) -> Result<(), SchoolError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(SchoolError::Config("epsilon must be positive".into()));
        }
        if !(self.delta_m > 0.0) || !self.delta_m.is_finite() {
            return Err(SchoolError::Config("delta_m must be positive".into()));
        }
        if !(self.cluster_interval > 0.0) {
            return Err(SchoolError::Config("cluster interval must be positive".into()));
        }
        if self.clustering_level >= levels.spatial_level {
            return Err(SchoolError::Config(format!(
                "clustering level {} must be below the spatial level {}",
                self.clustering_level, levels.spatial_level
            )));
        }
        if !(self.extrapolation_cap >= 0.0) {
            return Err(SchoolError::Config("extrapolation cap must be non-negative".into()));
        }
        Ok(())
    }

    /// Position of a recorded object at `t` under the engine's motion model.
    pub fn extrapolate(&self, rec: &LocationRecord, t: Timestamp) -> Point {
        let dt = t.secs_since(rec.t).clamp(-self.extrapolation_cap, self.extrapolation_cap);
        rec.loc + rec.vel * dt
    }
}

/// One location report from a client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateMessage {
    pub id: ObjectId,
    pub loc: Point,
    pub vel: Vec2,
    pub t: Timestamp,
}

impl UpdateMessage {
    pub fn new(id: ObjectId, loc: Point, vel: Vec2, t: Timestamp) -> Self {
        Self { id, loc, vel, t }
    }

    pub fn record(&self) -> LocationRecord {
        LocationRecord::new(self.loc, self.vel, self.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    LeaderUpdated,
    Shed,
    PromotedToLeader,
    /// First contact: the object joins as a leader of its own school.
    Registered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub kind: OutcomeKind,
    /// Store writes performed across all tables.
    pub writes: u32,
}

/// Leader/follower status of an object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Status {
    Leader { since: Timestamp },
    Follower { leader: ObjectId, disp: Vec2, since: Timestamp },
}

impl Status {
    pub fn since(&self) -> Timestamp {
        match self {
            Status::Leader { since } | Status::Follower { since, .. } => *since,
        }
    }

    pub fn is_leader(&self) -> bool {
        matches!(self, Status::Leader { .. })
    }

    fn leader_id(&self) -> Option<ObjectId> {
        match self {
            Status::Follower { leader, .. } => Some(*leader),
            Status::Leader { .. } => None,
        }
    }
}

/// Notified when an object is seen for the first time.
pub trait RegistrationListener: Send + Sync {
    fn registered(&self, id: ObjectId, loc: Point, t: Timestamp);
}

/// Snapshot of update outcome counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounts {
    pub received: u64,
    pub shed: u64,
    pub leader_updates: u64,
    pub promotions: u64,
    pub registrations: u64,
    pub rejected: u64,
    pub merges: u64,
    pub clustering_writes: u64,
}

impl UpdateCounts {
    pub fn shed_rate(&self) -> f64 {
        if self.received == 0 {
            0.0
        } else {
            self.shed as f64 / self.received as f64
        }
    }
}

#[derive(Default)]
struct Counters {
    received: AtomicU64,
    shed: AtomicU64,
    leader_updates: AtomicU64,
    promotions: AtomicU64,
    registrations: AtomicU64,
    rejected: AtomicU64,
    merges: AtomicU64,
    clustering_writes: AtomicU64,
}

/// Monotone maximum over non-negative floats.
#[derive(Default)]
struct MaxF64(AtomicU64);

impl MaxF64 {
    fn raise(&self, v: f64) {
        // Non-negative IEEE doubles order the same as their bit patterns.
        self.0.fetch_max(v.max(0.0).to_bits(), Ordering::Relaxed);
    }

    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }
}

const STRIPES: usize = 4096;

type Stripe = Mutex<HashMap<ObjectId, Timestamp>>;

fn stripe_of(id: ObjectId) -> usize {
    (id.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 52) as usize % STRIPES
}

/// Locks held on a set of objects, acquired in stripe order.
struct Held<'a> {
    guards: Vec<(usize, MutexGuard<'a, HashMap<ObjectId, Timestamp>>)>,
}

impl Held<'_> {
    fn map(&mut self, id: ObjectId) -> &mut HashMap<ObjectId, Timestamp> {
        let s = stripe_of(id);
        let (_, g) = self.guards.iter_mut().find(|(i, _)| *i == s).expect("object not locked");
        g
    }

    fn last_seen(&mut self, id: ObjectId) -> Timestamp {
        self.map(id).get(&id).copied().unwrap_or(Timestamp::ZERO)
    }

    fn touch(&mut self, id: ObjectId, t: Timestamp) {
        let e = self.map(id).entry(id).or_insert(t);
        *e = (*e).max(t);
    }
}

/// The schooling engine over one shared store.
pub struct Engine {
    store: Arc<Store>,
    levels: LevelConfig,
    cfg: SchoolConfig,
    stripes: Box<[Stripe]>,
    leaders: AtomicI64,
    objects: AtomicU64,
    clock: AtomicU64,
    max_disp: MaxF64,
    max_speed: MaxF64,
    counters: Counters,
    listener: RwLock<Option<Arc<dyn RegistrationListener>>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("levels", &self.levels)
            .field("cfg", &self.cfg)
            .field("leaders", &self.leader_count())
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(store: Arc<Store>, levels: LevelConfig, cfg: SchoolConfig) -> Result<Self, SchoolError> {
        cfg.validate(&levels)?;
        Ok(Self {
            store,
            levels,
            cfg,
            stripes: (0..STRIPES).map(|_| Mutex::new(HashMap::new())).collect(),
            leaders: AtomicI64::new(0),
            objects: AtomicU64::new(0),
            clock: AtomicU64::new(0),
            max_disp: MaxF64::default(),
            max_speed: MaxF64::default(),
            counters: Counters::default(),
            listener: RwLock::new(None),
        })
    }

    pub fn set_listener(&self, listener: Arc<dyn RegistrationListener>) {
        *self.listener.write() = Some(listener);
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn levels(&self) -> &LevelConfig {
        &self.levels
    }

    pub fn config(&self) -> &SchoolConfig {
        &self.cfg
    }

    pub fn leader_count(&self) -> usize {
        self.leaders.load(Ordering::Relaxed).max(0) as usize
    }

    pub fn object_count(&self) -> usize {
        self.objects.load(Ordering::Relaxed) as usize
    }

    /// Running average of objects per school.
    pub fn avg_school_size(&self) -> f64 {
        let l = self.leader_count();
        if l == 0 {
            1.0
        } else {
            self.object_count() as f64 / l as f64
        }
    }

    /// Latest update time seen.
    pub fn clock(&self) -> Timestamp {
        Timestamp(self.clock.load(Ordering::Relaxed))
    }

    /// Upper bound on the length of any displacement ever stored.
    pub fn max_displacement(&self) -> f64 {
        self.max_disp.get()
    }

    /// Upper bound on the speed of any location record ever stored.
    pub fn max_speed(&self) -> f64 {
        self.max_speed.get()
    }

    /// Upper bound on the distance between an object's modeled position and
    /// the recorded position of its school's leader.
    pub fn model_offset_bound(&self) -> f64 {
        self.max_speed() * self.cfg.extrapolation_cap + self.max_displacement()
    }

    pub fn counts(&self) -> UpdateCounts {
        let c = &self.counters;
        let ld = |a: &AtomicU64| a.load(Ordering::Relaxed);
        UpdateCounts {
            received: ld(&c.received),
            shed: ld(&c.shed),
            leader_updates: ld(&c.leader_updates),
            promotions: ld(&c.promotions),
            registrations: ld(&c.registrations),
            rejected: ld(&c.rejected),
            merges: ld(&c.merges),
            clustering_writes: ld(&c.clustering_writes),
        }
    }

    fn lock(&self, ids: &[ObjectId]) -> Held<'_> {
        let mut idx: Vec<usize> = ids.iter().map(|id| stripe_of(*id)).collect();
        idx.sort_unstable();
        idx.dedup();
        Held { guards: idx.into_iter().map(|i| (i, self.stripes[i].lock())).collect() }
    }

    pub fn status(&self, id: ObjectId) -> Result<Option<Status>, SchoolError> {
        let cell = self.store.latest(TableName::Affiliation, &RowKey::from_id(id), LF_FAMILY, LF_COLUMN)?;
        match cell {
            None => Ok(None),
            Some(c) => codec::decode_status(&c.value, c.timestamp)
                .map(Some)
                .ok_or_else(|| SchoolError::Inconsistent(format!("undecodable status for object {id}"))),
        }
    }

    /// Latest Location Table record of a leader.
    pub fn leader_record(&self, id: ObjectId) -> Result<Option<LocationRecord>, SchoolError> {
        let cell = self.store.latest(TableName::Location, &RowKey::from_id(id), LOC_FAMILY, LOC_COLUMN)?;
        match cell {
            None => Ok(None),
            Some(c) => codec::decode_record(&c.value, c.timestamp)
                .map(Some)
                .ok_or_else(|| SchoolError::Inconsistent(format!("undecodable location for object {id}"))),
        }
    }

    fn require_record(&self, id: ObjectId) -> Result<LocationRecord, SchoolError> {
        self.leader_record(id)?
            .ok_or_else(|| SchoolError::Inconsistent(format!("leader {id} has no location record")))
    }

    /// Follower Info of a leader: follower ids with their displacements.
    pub fn followers(&self, leader: ObjectId) -> Result<Vec<(ObjectId, Vec2)>, SchoolError> {
        self.store
            .latest_in_family(TableName::Affiliation, &RowKey::from_id(leader), FI_FAMILY)?
            .into_iter()
            .map(|c| {
                let id = codec::column_id(&c.column);
                let disp = codec::decode_vec(&c.value);
                id.zip(disp)
                    .ok_or_else(|| SchoolError::Inconsistent(format!("undecodable follower entry under {leader}")))
            })
            .collect()
    }

    /// Leader's latest position extrapolated to `t`, plus the follower's displacement.
    pub fn estimated_location(&self, id: ObjectId, t: Timestamp) -> Result<Point, SchoolError> {
        match self.status(id)? {
            Some(Status::Follower { leader, disp, .. }) => Ok(self.cfg.extrapolate(&self.require_record(leader)?, t) + disp),
            Some(Status::Leader { .. }) => Err(SchoolError::NotFollower(id)),
            None => Err(SchoolError::Unknown(id)),
        }
    }

    /// Position of any known object at `t` under the engine's model.
    pub fn modeled_location(&self, id: ObjectId, t: Timestamp) -> Result<Option<Point>, SchoolError> {
        match self.status(id)? {
            Some(Status::Leader { .. }) => Ok(Some(self.cfg.extrapolate(&self.require_record(id)?, t))),
            Some(Status::Follower { leader, disp, .. }) => Ok(Some(self.cfg.extrapolate(&self.require_record(leader)?, t) + disp)),
            None => Ok(None),
        }
    }

    fn spatial_key(&self, p: Point) -> Result<RowKey, SchoolError> {
        Ok(self.levels.map.encode(p, self.levels.spatial_level)?.to_row_key())
    }

    fn put_status(&self, id: ObjectId, status: &Status) {
        self.store.put(
            TableName::Affiliation,
            &RowKey::from_id(id),
            LF_FAMILY,
            LF_COLUMN,
            codec::encode_status(status),
            status.since(),
        );
    }

    fn put_location(&self, id: ObjectId, rec: &LocationRecord) {
        self.max_speed.raise(rec.vel.norm());
        self.store.put(TableName::Location, &RowKey::from_id(id), LOC_FAMILY, LOC_COLUMN, codec::encode_record(rec), rec.t);
    }

    fn put_spatial(&self, id: ObjectId, key: &RowKey, t: Timestamp) {
        self.store.put(TableName::SpatialIndex, key, IDS_FAMILY, &codec::id_column(id), Vec::new(), t);
    }

    /// The update procedure: leader updates move the leader in the index,
    /// follower updates close to their estimate are shed, and the rest
    /// promote the follower to the leader of a new school.
    pub fn process_update(&self, msg: &UpdateMessage) -> Result<UpdateOutcome, SchoolError> {
        self.counters.received.fetch_add(1, Ordering::Relaxed);
        let result = self.process_inner(msg);
        match &result {
            Ok(o) => {
                let c = match o.kind {
                    OutcomeKind::Shed => &self.counters.shed,
                    OutcomeKind::LeaderUpdated => &self.counters.leader_updates,
                    OutcomeKind::PromotedToLeader => &self.counters.promotions,
                    OutcomeKind::Registered => &self.counters.registrations,
                };
                c.fetch_add(1, Ordering::Relaxed);
                self.clock.fetch_max(msg.t.0, Ordering::Relaxed);
            }
            Err(_) => {
                self.counters.rejected.fetch_add(1, Ordering::Relaxed);
            }
        }
        result
    }

    fn process_inner(&self, msg: &UpdateMessage) -> Result<UpdateOutcome, SchoolError> {
        let id = msg.id;
        if !msg.loc.is_finite() || !msg.vel.is_finite() || !self.levels.map.contains(msg.loc) {
            return Err(SchoolError::BadUpdate { id });
        }
        loop {
            let peek = self.status(id)?;
            let target = peek.and_then(|s| s.leader_id());
            let mut ids = vec![id];
            ids.extend(target);
            let mut held = self.lock(&ids);
            let status = self.status(id)?;
            if status.and_then(|s| s.leader_id()) != target {
                continue;
            }
            let last = held.last_seen(id).max(status.map_or(Timestamp::ZERO, |s| s.since()));
            if msg.t < last {
                return Err(SchoolError::Stale { id, t: msg.t, last });
            }
            let outcome = match status {
                None => self.register(msg)?,
                Some(Status::Leader { .. }) => self.leader_update(msg)?,
                Some(Status::Follower { leader, disp, .. }) => self.follower_update(msg, leader, disp)?,
            };
            held.touch(id, msg.t);
            return Ok(outcome);
        }
    }

    fn register(&self, msg: &UpdateMessage) -> Result<UpdateOutcome, SchoolError> {
        let key = self.spatial_key(msg.loc)?;
        self.put_location(msg.id, &msg.record());
        self.put_spatial(msg.id, &key, msg.t);
        self.put_status(msg.id, &Status::Leader { since: msg.t });
        self.leaders.fetch_add(1, Ordering::Relaxed);
        self.objects.fetch_add(1, Ordering::Relaxed);
        let listener = self.listener.read().clone();
        if let Some(l) = listener {
            l.registered(msg.id, msg.loc, msg.t);
        }
        Ok(UpdateOutcome { kind: OutcomeKind::Registered, writes: 3 })
    }

    fn leader_update(&self, msg: &UpdateMessage) -> Result<UpdateOutcome, SchoolError> {
        let prev = self.require_record(msg.id)?;
        let old_key = self.spatial_key(prev.loc)?;
        let new_key = self.spatial_key(msg.loc)?;
        self.put_location(msg.id, &msg.record());
        let mut writes = 1;
        if old_key != new_key {
            self.store.delete(TableName::SpatialIndex, &old_key, IDS_FAMILY, &codec::id_column(msg.id));
            self.put_spatial(msg.id, &new_key, msg.t);
            writes += 2;
        }
        Ok(UpdateOutcome { kind: OutcomeKind::LeaderUpdated, writes })
    }

    fn follower_update(&self, msg: &UpdateMessage, leader: ObjectId, disp: Vec2) -> Result<UpdateOutcome, SchoolError> {
        let est = self.cfg.extrapolate(&self.require_record(leader)?, msg.t) + disp;
        if est.dist(msg.loc) <= self.cfg.epsilon {
            return Ok(UpdateOutcome { kind: OutcomeKind::Shed, writes: 0 });
        }
        let key = self.spatial_key(msg.loc)?;
        self.store.delete(TableName::Affiliation, &RowKey::from_id(leader), FI_FAMILY, &codec::id_column(msg.id));
        self.put_status(msg.id, &Status::Leader { since: msg.t });
        self.put_location(msg.id, &msg.record());
        self.put_spatial(msg.id, &key, msg.t);
        self.leaders.fetch_add(1, Ordering::Relaxed);
        Ok(UpdateOutcome { kind: OutcomeKind::PromotedToLeader, writes: 4 })
    }

    /// Merges school `absorbed` into school `survivor` at time `now`. The
    /// absorbed leader and its followers keep their modeled positions at
    /// `now`. Returns the number of store writes.
    pub fn merge_schools(&self, survivor: ObjectId, absorbed: ObjectId, now: Timestamp) -> Result<usize, SchoolError> {
        if survivor == absorbed {
            return Err(SchoolError::SelfMerge(survivor));
        }
        let mut held = self.lock(&[survivor, absorbed]);
        for id in [survivor, absorbed] {
            match self.status(id)? {
                Some(Status::Leader { since }) if now < since => {
                    return Err(SchoolError::Stale { id, t: now, last: since });
                }
                Some(Status::Leader { .. }) => {}
                _ => return Err(SchoolError::NotLeader(id)),
            }
        }
        let rec_s = self.require_record(survivor)?;
        let rec_a = self.require_record(absorbed)?;
        let loc_s = self.cfg.extrapolate(&rec_s, now);
        let loc_a = self.cfg.extrapolate(&rec_a, now);
        let survivor_row = RowKey::from_id(survivor);
        let absorbed_row = RowKey::from_id(absorbed);
        let mut writes = 0;
        for (f, disp) in self.followers(absorbed)? {
            let nd = loc_a + disp - loc_s;
            self.max_disp.raise(nd.norm());
            self.store.put(TableName::Affiliation, &survivor_row, FI_FAMILY, &codec::id_column(f), codec::encode_vec(nd), now);
            self.put_status(f, &Status::Follower { leader: survivor, disp: nd, since: now });
            self.store.delete(TableName::Affiliation, &absorbed_row, FI_FAMILY, &codec::id_column(f));
            writes += 3;
        }
        let d = loc_a - loc_s;
        self.max_disp.raise(d.norm());
        self.store.put(TableName::Affiliation, &survivor_row, FI_FAMILY, &codec::id_column(absorbed), codec::encode_vec(d), now);
        self.put_status(absorbed, &Status::Follower { leader: survivor, disp: d, since: now });
        self.store.delete(TableName::SpatialIndex, &self.spatial_key(rec_a.loc)?, IDS_FAMILY, &codec::id_column(absorbed));
        self.store.evict_row(TableName::Location, &absorbed_row)?;
        writes += 4;
        held.touch(survivor, now);
        held.touch(absorbed, now);
        self.leaders.fetch_sub(1, Ordering::Relaxed);
        self.counters.merges.fetch_add(1, Ordering::Relaxed);
        self.counters.clustering_writes.fetch_add(writes as u64, Ordering::Relaxed);
        Ok(writes)
    }

    /// Checks the table-level invariants: every follower's leader lists it
    /// with the same displacement and vice versa, the Spatial Index Table
    /// holds exactly the leaders, each once at the key of its latest
    /// location, and only leaders have Location rows.
    pub fn check_consistency(&self) -> Result<(), String> {
        let err = |e: SchoolError| e.to_string();
        let mut statuses: BTreeMap<ObjectId, Status> = BTreeMap::new();
        let mut infos: BTreeMap<ObjectId, BTreeMap<ObjectId, Vec2>> = BTreeMap::new();
        for (row, cells) in self.store.scan_all(TableName::Affiliation).map_err(|e| e.to_string())? {
            let id = row.to_id().ok_or("bad affiliation row key")?;
            let mut seen = std::collections::HashSet::new();
            for c in cells {
                if !seen.insert((c.family, c.column.clone())) {
                    continue;
                }
                if c.family == LF_FAMILY {
                    let st = codec::decode_status(&c.value, c.timestamp).ok_or("bad status cell")?;
                    statuses.insert(id, st);
                } else if c.family == FI_FAMILY {
                    let f = codec::column_id(&c.column).ok_or("bad follower column")?;
                    let d = codec::decode_vec(&c.value).ok_or("bad displacement")?;
                    infos.entry(id).or_default().insert(f, d);
                }
            }
        }
        let mut leaders = 0usize;
        for (&id, st) in &statuses {
            match st {
                Status::Leader { .. } => leaders += 1,
                Status::Follower { leader, disp, .. } => {
                    if !matches!(statuses.get(leader), Some(Status::Leader { .. })) {
                        return Err(format!("follower {id} points at non-leader {leader}"));
                    }
                    match infos.get(leader).and_then(|m| m.get(&id)) {
                        Some(d) if d == disp => {}
                        Some(d) => return Err(format!("displacement mismatch for {id}: {disp:?} vs {d:?}")),
                        None => return Err(format!("leader {leader} does not list follower {id}")),
                    }
                }
            }
        }
        for (&leader, fs) in &infos {
            for (&f, d) in fs {
                match statuses.get(&f) {
                    Some(Status::Follower { leader: l, disp, .. }) if *l == leader && disp == d => {}
                    _ => return Err(format!("leader {leader} lists {f}, which does not follow it")),
                }
            }
        }
        if leaders != self.leader_count() {
            return Err(format!("leader counter {} but {} leaders in tables", self.leader_count(), leaders));
        }
        let mut placed: BTreeMap<ObjectId, Vec<RowKey>> = BTreeMap::new();
        for (row, cells) in self.store.scan_all(TableName::SpatialIndex).map_err(|e| e.to_string())? {
            let mut cols: Vec<ObjectId> = cells.iter().filter_map(|c| codec::column_id(&c.column)).collect();
            cols.dedup();
            for id in cols {
                placed.entry(id).or_default().push(row.clone());
            }
        }
        for (&id, st) in &statuses {
            let keys = placed.remove(&id).unwrap_or_default();
            if st.is_leader() {
                let rec = self.leader_record(id).map_err(err)?.ok_or(format!("leader {id} has no location"))?;
                let want = self.spatial_key(rec.loc).map_err(err)?;
                if keys != vec![want] {
                    return Err(format!("leader {id} indexed at {keys:?}"));
                }
            } else {
                if !keys.is_empty() {
                    return Err(format!("follower {id} present in the spatial index"));
                }
                if self.leader_record(id).map_err(err)?.is_some() {
                    return Err(format!("follower {id} still has a location row"));
                }
            }
        }
        if let Some((id, _)) = placed.into_iter().next() {
            return Err(format!("unknown object {id} in the spatial index"));
        }
        Ok(())
    }
}
