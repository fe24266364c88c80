//! Helpers shared by the integration tests: a population builder with real
//! schools and oracles that re-derive positions from raw table contents.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use shoal::archive::DiskModelParams;
use shoal::nn::{sort_neighbors, Neighbor};
use shoal::schooling::{codec, Engine, SchoolConfig, Status, UpdateMessage};
use shoal::spatial::{cells_at, LevelConfig, SpatialIndex};
use shoal::store::schema::{LF_COLUMN, LF_FAMILY, LOC_COLUMN, LOC_FAMILY};
use shoal::store::{RowKey, Store, TableName};
use shoal::types::{ObjectId, Point, Timestamp, Vec2};

pub struct Population {
    pub engine: Engine,
    pub ids: Vec<ObjectId>,
    pub now: Timestamp,
}

fn jitter(rng: &mut ChaCha8Rng, amp: f64) -> Vec2 {
    Vec2::new(rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp))
}

/// `n` objects in co-moving groups, registered during the first 10 s,
/// reclustered everywhere at 10 s, then half of them re-report during the
/// next 10 s with deviations of random size (some shed, some promoted).
pub fn school_population(rng: &mut ChaCha8Rng, n: usize, levels: LevelConfig, cfg: SchoolConfig) -> Population {
    let engine = Engine::new(Arc::new(Store::in_memory()), levels, cfg).unwrap();
    let size = levels.map.size;
    let groups: Vec<(Point, Vec2)> = (0..n / 5 + 1)
        .map(|_| {
            let c = Point::new(rng.gen_range(0.0..=size), rng.gen_range(0.0..=size));
            (c, jitter(rng, 2.0))
        })
        .collect();
    let spread = size * 0.03;
    for id in 0..n as u64 {
        let (c, v) = groups[rng.gen_range(0..groups.len())];
        let loc = levels.map.clamp(c + jitter(rng, spread));
        let t = Timestamp::from_secs_f64(rng.gen_range(0.0..10.0));
        engine.process_update(&UpdateMessage::new(id, loc, v + jitter(rng, 0.1), t)).unwrap();
    }
    let mid = Timestamp::from_secs(10);
    recluster_all(&engine, mid);
    for id in 0..n as u64 {
        if rng.gen_bool(0.5) {
            let t = Timestamp::from_secs_f64(rng.gen_range(10.0..20.0));
            let modeled = engine.modeled_location(id, t).unwrap().unwrap();
            let dev = cfg.epsilon * rng.gen_range(0.0..2.0);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let loc = levels.map.clamp(modeled + Vec2::new(dev * angle.cos(), dev * angle.sin()));
            engine.process_update(&UpdateMessage::new(id, loc, jitter(rng, 2.0), t)).unwrap();
        }
    }
    Population { engine, ids: (0..n as u64).collect(), now: Timestamp::from_secs(20) }
}

pub fn recluster_all(engine: &Engine, now: Timestamp) {
    let lc = engine.config().clustering_level;
    for pos in 0..cells_at(lc) {
        engine.recluster_cell(SpatialIndex::new(lc, pos).unwrap(), now).unwrap();
    }
}

/// Latest status of `id`, read straight from the Affiliation Table.
pub fn raw_status(engine: &Engine, id: ObjectId) -> Option<Status> {
    let cell = engine.store().latest(TableName::Affiliation, &RowKey::from_id(id), LF_FAMILY, LF_COLUMN).unwrap()?;
    Some(codec::decode_status(&cell.value, cell.timestamp).expect("decodable status"))
}

/// Position of `id` at `t`: the relevant leader's newest Location cell,
/// moved linearly for at most `cap` seconds either way, plus the
/// displacement for followers.
pub fn raw_modeled(engine: &Engine, id: ObjectId, t: Timestamp) -> Option<Point> {
    let (leader, disp) = match raw_status(engine, id)? {
        Status::Leader { .. } => (id, Vec2::ZERO),
        Status::Follower { leader, disp, .. } => (leader, disp),
    };
    let cell = engine.store().latest(TableName::Location, &RowKey::from_id(leader), LOC_FAMILY, LOC_COLUMN).unwrap()?;
    let rec = codec::decode_record(&cell.value, cell.timestamp)?;
    let cap = engine.config().extrapolation_cap;
    let dt = ((t.0 as f64 - rec.t.0 as f64) / 1e6).clamp(-cap, cap);
    let base = rec.loc + rec.vel * dt;
    Some(if leader == id { base } else { base + disp })
}

/// Exhaustive k nearest over the modeled positions of `ids`.
pub fn brute_knn(engine: &Engine, ids: &[ObjectId], q: Point, k: usize, t: Timestamp) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = ids
        .iter()
        .filter_map(|&id| raw_modeled(engine, id, t).map(|p| Neighbor { id, loc: p, dist: p.dist(q) }))
        .collect();
    sort_neighbors(&mut all);
    all.truncate(k);
    all
}

/// Affiliation and index invariants, checked from raw table contents:
/// every follower appears in its leader's Follower Info and vice versa,
/// leaders have no leader themselves, and the Spatial Index Table holds
/// exactly the leaders, each once, in the cell of its newest record.
pub fn raw_consistency(engine: &Engine) -> Result<(), String> {
    use shoal::store::schema::{FI_FAMILY, IDS_FAMILY};
    let store = engine.store();
    let mut leaders = std::collections::BTreeSet::new();
    for (row, _) in store.scan_all(TableName::Affiliation).unwrap() {
        let id = row.to_id().ok_or("affiliation row is not an id")?;
        let infos = store.latest_in_family(TableName::Affiliation, &row, FI_FAMILY).unwrap();
        match raw_status(engine, id) {
            Some(Status::Leader { .. }) => {
                leaders.insert(id);
                for cell in infos {
                    let f = codec::column_id(&cell.column).ok_or("bad follower column")?;
                    match raw_status(engine, f) {
                        Some(Status::Follower { leader, disp, .. }) if leader == id => {
                            if codec::decode_vec(&cell.value) != Some(disp) {
                                return Err(format!("displacement of {f} differs between tables"));
                            }
                        }
                        other => return Err(format!("{id} lists {f} as follower, but its status is {other:?}")),
                    }
                }
            }
            Some(Status::Follower { leader, .. }) => {
                if !infos.is_empty() {
                    return Err(format!("follower {id} has followers"));
                }
                match raw_status(engine, leader) {
                    Some(Status::Leader { .. }) => {}
                    other => return Err(format!("{id} follows {leader}, whose status is {other:?}")),
                }
                let listed = store
                    .latest(TableName::Affiliation, &RowKey::from_id(leader), FI_FAMILY, &codec::id_column(id))
                    .unwrap();
                if listed.is_none() {
                    return Err(format!("{leader} does not list follower {id}"));
                }
            }
            None => {}
        }
    }
    let mut indexed = std::collections::BTreeMap::new();
    for (row, cells) in store.scan_all(TableName::SpatialIndex).unwrap() {
        for cell in cells.iter().filter(|c| c.family == IDS_FAMILY) {
            let id = codec::column_id(&cell.column).ok_or("bad index column")?;
            if indexed.insert(id, row.clone()).is_some() {
                return Err(format!("{id} indexed twice"));
            }
        }
    }
    if indexed.keys().copied().collect::<std::collections::BTreeSet<_>>() != leaders {
        return Err("index does not hold exactly the leaders".into());
    }
    let levels = engine.levels();
    for (id, row) in indexed {
        let cell = store.latest(TableName::Location, &RowKey::from_id(id), LOC_FAMILY, LOC_COLUMN).unwrap();
        let rec = codec::decode_record(&cell.ok_or(format!("leader {id} has no record"))?.value, Timestamp::ZERO).unwrap();
        let want = levels.map.encode(levels.map.clamp(rec.loc), levels.spatial_level).unwrap().to_row_key();
        if want != row {
            return Err(format!("leader {id} indexed in the wrong cell"));
        }
    }
    Ok(())
}

/// Best feasible disk count by trying every value; ties go to fewer disks.
pub fn brute_force_disks(p: &DiskModelParams, n_max: u64) -> Option<u64> {
    let latency = p.t_rot + p.t_seek;
    let s_b = p.s_rec * p.n_o;
    let fill = s_b / (p.update_rate * p.s_rec);
    let mut best: Option<(u64, f64)> = None;
    for n in 1..=n_max {
        let flush = latency + s_b / (n as f64 * p.r_disk);
        if fill < flush {
            continue;
        }
        let u = s_b / (n as f64 * p.r_disk * latency);
        let r = p.k * n as f64 / p.n_o;
        let v = u.min(r);
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((n, v));
        }
    }
    best.map(|(n, _)| n)
}
