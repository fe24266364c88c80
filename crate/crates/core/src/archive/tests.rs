use super::*;
use crate::schooling::{Engine, SchoolConfig, UpdateMessage};
use crate::spatial::LevelConfig;
use crate::store::{Store, StoreConfig};

fn rec(x: f64, t: u64) -> LocationRecord {
    LocationRecord::new(Vec2::new(x, 1.0), Vec2::new(1.0, 0.0), Timestamp::from_secs(t))
}

fn archiver(disks: u32, page_records: u64) -> Archiver {
    Archiver::new(ArchiveConfig { disks, page_bytes: page_records * RECORD_LEN as u64, ..ArchiveConfig::default() }).unwrap()
}

#[test]
fn placement_is_deterministic_and_in_range() {
    let map = MapGeometry::default();
    assert_eq!(placement(77, Vec2::new(5.0, 5.0), 1, &map, 4), 1);
    let a = placement(77, Vec2::new(5.0, 5.0), 16, &map, 4);
    assert_eq!(a, placement(77, Vec2::new(5.0, 5.0), 16, &map, 4));
    for id in 0..1000 {
        let d = placement(id, Vec2::new(id as f64 % 1000.0, 3.0), 7, &map, 4);
        assert!((1..=7).contains(&d));
    }
}

#[test]
fn placement_is_balanced() {
    let map = MapGeometry::default();
    let mut counts = [0usize; 16];
    for id in 0..100_000u64 {
        let p = Vec2::new((id * 37 % 1000) as f64, (id * 91 % 1000) as f64);
        counts[placement(id, p, 16, &map, 4) as usize - 1] += 1;
    }
    let mean = 100_000.0 / 16.0;
    for c in counts {
        assert!((c as f64 - mean).abs() / mean < 0.05, "{counts:?}");
    }
}

#[test]
fn flush_only_when_page_fills() {
    let a = archiver(2, 4);
    a.register(1, Vec2::ZERO);
    let disk = a.disk_of(1).unwrap();
    for t in 0..3 {
        a.append(1, rec(t as f64, t));
    }
    assert_eq!(a.stats().disks[disk as usize - 1].flushes, 0);
    a.append(1, rec(3.0, 3));
    let s = a.stats();
    assert_eq!(s.disks[disk as usize - 1].flushes, 1);
    assert_eq!(s.disks.iter().map(|d| d.flushes).sum::<u64>(), 1);
    assert_eq!(a.pages(disk).unwrap().len(), 1);
}

#[test]
fn flush_durations() {
    let t = DiskTiming { t_rot: 0.004, t_seek: 0.006, r_disk: 1e6 };
    assert_eq!(flush_duration(&t, 0), 0.01);
    assert_eq!(flush_duration(&t, 480_000), 0.01 + 0.48);
}

#[test]
fn clock_utilization_matches_closed_form() {
    let timing = DiskTiming { t_rot: 0.004, t_seek: 0.006, r_disk: 1e7 };
    let a = Archiver::new(ArchiveConfig { disks: 4, page_bytes: 100 * 48, timing, ..ArchiveConfig::default() }).unwrap();
    for i in 0..100_000u64 {
        a.append(i % 500, rec(1.0, i / 100));
    }
    let s = a.stats();
    let page_bytes = 100.0 * 48.0;
    let want = page_bytes / (timing.r_disk * (timing.t_rot + timing.t_seek));
    let flushes: u64 = s.disks.iter().map(|d| d.flushes).sum();
    assert_eq!(flushes, 1000);
    for d in s.disks.iter().filter(|d| d.flushes > 0) {
        assert!((d.utilization() - want).abs() / want < 0.01);
    }
}

#[test]
fn append_then_drain_preserves_everything() {
    let a = archiver(3, 5);
    let mut want: BTreeMap<u64, Vec<LocationRecord>> = BTreeMap::new();
    for t in 0..40u64 {
        for id in 0..7u64 {
            let r = rec(id as f64 + t as f64, t);
            a.append(id, r);
            want.entry(id).or_default().push(r);
        }
    }
    a.drain().unwrap();
    for (id, recs) in want {
        assert_eq!(a.query_history_by_object(id, Timestamp::ZERO, Timestamp::MAX).unwrap(), recs);
        let disk = a.disk_of(id).unwrap();
        for d in 1..=3 {
            let has = a.pages(d).unwrap().iter().any(|p| p.records.iter().any(|r| r.id == id));
            assert_eq!(has, d == disk);
        }
    }
    assert!(a.query_history_by_object(99, Timestamp::ZERO, Timestamp::MAX).unwrap().is_empty());
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let a = Archiver::new(ArchiveConfig { disks: 2, page_bytes: 96, dir: Some(dir.path().into()), ..ArchiveConfig::default() })
        .unwrap();
    for t in 0..5 {
        a.append(3, rec(t as f64, t));
    }
    a.drain().unwrap();
    let d = a.disk_of(3).unwrap();
    let bytes = std::fs::read(dir.path().join(format!("disk-{d:03}.pages"))).unwrap();
    let pages = decode_pages(&bytes).unwrap();
    assert_eq!(pages.iter().map(|p| p.records.len()).collect::<Vec<_>>(), vec![2, 2, 1]);
    assert!(pages.iter().all(|p| p.disk == d));
}

#[test]
fn blocked_appends_follow_the_simulated_clock() {
    // 10 records per page, one record per second: a page fills every ~10 s.
    let slow = DiskTiming { t_rot: 0.0, t_seek: 20.0, r_disk: 1e9 };
    let fast = DiskTiming { t_rot: 0.0, t_seek: 5.0, r_disk: 1e9 };
    for (timing, blocked) in [(slow, true), (fast, false)] {
        let a = Archiver::new(ArchiveConfig { disks: 1, page_bytes: 480, timing, ..ArchiveConfig::default() }).unwrap();
        for t in 0..200 {
            a.append(1, rec(1.0, t));
        }
        assert_eq!(a.stats().blocked_appends > 0, blocked);
    }
}

fn live_engine(a: &Arc<Archiver>) -> Engine {
    let store = Arc::new(Store::new(StoreConfig { tier_ttls: vec![5.0, 5.0, 5.0], ..StoreConfig::default() }).unwrap());
    store.set_sink(a.clone());
    let cfg = SchoolConfig { epsilon: 1.0, clustering_level: 4, ..SchoolConfig::default() };
    let e = Engine::new(store, LevelConfig::new(8, MapGeometry::default()).unwrap(), cfg).unwrap();
    e.set_listener(a.clone());
    e
}

#[test]
fn follower_history_is_reconstructed_from_leader() {
    let a = Arc::new(archiver(4, 3));
    let e = live_engine(&a);
    let up = |id, x: f64, y: f64, t: u64| {
        e.process_update(&UpdateMessage::new(id, Vec2::new(x, y), Vec2::new(1.0, 0.0), Timestamp::from_secs(t))).unwrap()
    };
    up(1, 100.0, 100.0, 0);
    up(2, 100.0, 103.0, 0);
    up(2, 101.0, 103.0, 1);
    e.merge_schools(1, 2, Timestamp::from_secs(2)).unwrap();
    let mut live = vec![
        LocationRecord::new(Vec2::new(100.0, 103.0), Vec2::new(1.0, 0.0), Timestamp::from_secs(0)),
        LocationRecord::new(Vec2::new(101.0, 103.0), Vec2::new(1.0, 0.0), Timestamp::from_secs(1)),
    ];
    for t in 3..30u64 {
        up(1, 100.0 + t as f64, 100.0, t);
        live.push(LocationRecord::new(e.estimated_location(2, Timestamp::from_secs(t)).unwrap(), Vec2::new(1.0, 0.0), Timestamp::from_secs(t)));
        e.store().age_tick(Timestamp::from_secs(t)).unwrap();
    }
    e.store().drain_to_sink().unwrap();
    a.drain().unwrap();
    let got = a.query_history_by_object(2, Timestamp::ZERO, Timestamp::MAX).unwrap();
    assert_eq!(got, live);
    let events = a.events_of(2);
    assert_eq!(events.len(), 2);
    assert!(matches!(events[1].transition, Transition::BecameFollower { leader: 1, .. }));
    let window = a.query_history_by_object(2, Timestamp::from_secs(5), Timestamp::from_secs(8)).unwrap();
    assert_eq!(window.iter().map(|r| r.t.as_secs_f64()).collect::<Vec<_>>(), vec![5.0, 6.0, 7.0]);
}

#[test]
fn region_queries_match_a_full_scan() {
    let a = Arc::new(archiver(3, 4));
    let e = live_engine(&a);
    for id in 0..20u64 {
        for t in 0..15u64 {
            let p = Vec2::new(50.0 * id as f64 + t as f64, 20.0 * (id % 5) as f64 + 1.0);
            e.process_update(&UpdateMessage::new(id, p, Vec2::new(1.0, 0.0), Timestamp::from_secs(t))).unwrap();
        }
    }
    e.store().drain_to_sink().unwrap();
    a.drain().unwrap();
    let map = MapGeometry::default();
    let mut all = Vec::new();
    for d in 1..=3 {
        for p in a.pages(d).unwrap() {
            all.extend(p.records.into_iter().map(|r| (r.id, r.rec)));
        }
    }
    assert_eq!(all.len(), 300);
    let whole = a.query_history_by_region(SpatialIndex::ROOT, Timestamp::ZERO, Timestamp::MAX).unwrap();
    assert_eq!(whole.len(), 300);
    assert!(a.query_history_by_region(SpatialIndex::ROOT, Timestamp(5), Timestamp(5)).unwrap().is_empty());
    for (cell, from, to) in [(map.encode(Vec2::new(10.0, 10.0), 3).unwrap(), 2u64, 9u64), (map.encode(Vec2::new(600.0, 40.0), 2).unwrap(), 0, 15)] {
        let (from, to) = (Timestamp::from_secs(from), Timestamp::from_secs(to));
        let mut want: Vec<_> = all
            .iter()
            .filter(|(_, r)| r.t >= from && r.t < to && map.encode(r.loc, cell.level()).unwrap() == cell)
            .copied()
            .collect();
        want.sort_by(|a, b| a.1.t.cmp(&b.1.t).then(a.0.cmp(&b.0)));
        assert_eq!(a.query_history_by_region(cell, from, to).unwrap(), want);
    }
}
