//! Randomized interleavings of updates, merges and reclustering keep the
//! affiliation and index tables consistent.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shoal::schooling::{Engine, SchoolConfig, SchoolError, UpdateMessage};
use shoal::spatial::{cells_at, LevelConfig, MapGeometry, SpatialIndex};
use shoal::types::{Point, Timestamp, Vec2};

use common::raw_consistency;

fn run(seed: u64, objects: u64, ops: usize, check_every: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = LevelConfig::new(6, MapGeometry::new(1_000.0)).unwrap();
    let cfg = SchoolConfig { epsilon: 15.0, delta_m: 1.5, clustering_level: 2, ..SchoolConfig::default() };
    let engine = Engine::new(std::sync::Arc::new(shoal::store::Store::in_memory()), levels, cfg).unwrap();
    let mut clock = Timestamp::ZERO;
    for op in 1..=ops {
        clock = clock.plus_secs(rng.gen_range(0.0..0.05));
        match rng.gen_range(0..10) {
            0 => {
                let cell = SpatialIndex::new(2, rng.gen_range(0..cells_at(2))).unwrap();
                engine.recluster_cell(cell, clock).map_err(|e| e.to_string())?;
            }
            1 => {
                let (a, b) = (rng.gen_range(0..objects), rng.gen_range(0..objects));
                // Errors (not a leader, same id) are expected and harmless.
                let _ = engine.merge_schools(a, b, clock);
            }
            _ => {
                let id = rng.gen_range(0..objects);
                let loc = match engine.modeled_location(id, clock).map_err(|e| e.to_string())? {
                    Some(p) if rng.gen_bool(0.7) => p + Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)),
                    _ => Point::new(rng.gen_range(0.0..=1_000.0), rng.gen_range(0.0..=1_000.0)),
                };
                let loc = levels.map.clamp(loc);
                let vel = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                engine.process_update(&UpdateMessage::new(id, loc, vel, clock)).map_err(|e| e.to_string())?;
            }
        }
        if op % check_every == 0 {
            engine.check_consistency()?;
            raw_consistency(&engine).map_err(|e| format!("after op {op}: {e}"))?;
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn interleavings_stay_consistent(seed in any::<u64>(), objects in 2u64..120) {
        prop_assert_eq!(run(seed, objects, 1_500, 50), Ok(()));
    }
}

#[test]
fn concurrent_updates_and_reclustering_stay_consistent() {
    let levels = LevelConfig::new(6, MapGeometry::new(1_000.0)).unwrap();
    let cfg = SchoolConfig { epsilon: 15.0, delta_m: 1.5, clustering_level: 2, ..SchoolConfig::default() };
    let engine = Engine::new(std::sync::Arc::new(shoal::store::Store::in_memory()), levels, cfg).unwrap();
    std::thread::scope(|s| {
        for w in 0..4u64 {
            let engine = &engine;
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(w);
                for step in 0..2_000u64 {
                    let id = w + 4 * rng.gen_range(0..50);
                    let t = Timestamp::from_secs_f64(step as f64 * 0.01);
                    let loc = Point::new(rng.gen_range(0.0..=1_000.0), rng.gen_range(0.0..=1_000.0));
                    let vel = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    // A merge stamped later than this update makes it stale.
                    match engine.process_update(&UpdateMessage::new(id, loc, vel, t)) {
                        Ok(_) | Err(SchoolError::Stale { .. }) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
            });
        }
        let engine = &engine;
        s.spawn(move || {
            for i in 0..400u64 {
                let cell = SpatialIndex::new(2, i % 16).unwrap();
                engine.recluster_cell(cell, Timestamp::from_secs_f64(i as f64 * 0.05)).unwrap();
            }
        });
    });
    engine.check_consistency().unwrap();
    raw_consistency(&engine).unwrap();
}
