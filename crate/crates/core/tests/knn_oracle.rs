//! kNN results against exhaustive search over modeled positions.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shoal::nn::{best_level, knn, FlagConfig, NnQuery};
use shoal::schooling::SchoolConfig;
use shoal::spatial::{LevelConfig, MapGeometry};
use shoal::types::{Point, Timestamp};

use common::{brute_knn, school_population};

fn config(rng: &mut ChaCha8Rng) -> (LevelConfig, SchoolConfig) {
    let ls = rng.gen_range(3..=10u8);
    let levels = LevelConfig::new(ls, MapGeometry::new(1_000.0)).unwrap();
    let school = SchoolConfig {
        epsilon: rng.gen_range(1.0..40.0),
        delta_m: rng.gen_range(0.2..3.0),
        clustering_level: rng.gen_range(0..ls),
        ..SchoolConfig::default()
    };
    (levels, school)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn knn_matches_brute_force(seed in any::<u64>(), n in 1usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (levels, school) = config(&mut rng);
        let pop = school_population(&mut rng, n, levels, school);
        for _ in 0..10 {
            let q = Point::new(rng.gen_range(-50.0..1_050.0), rng.gen_range(-50.0..1_050.0));
            let k = rng.gen_range(1..=50);
            let t = pop.now.plus_secs(rng.gen_range(0.0..60.0));
            let level = if rng.gen_bool(0.5) {
                rng.gen_range(0..=levels.spatial_level)
            } else {
                let cfg = FlagConfig::for_engine(&pop.engine, rng.gen_range(1.0..100.0));
                best_level(&pop.engine, q, &cfg).unwrap().0
            };
            let (got, _) = knn(&pop.engine, &NnQuery { loc: q, k, t }, level).unwrap();
            let want = brute_knn(&pop.engine, &pop.ids, q, k, t);
            prop_assert_eq!(got, want, "level {} k {} t {}", level, k, t);
        }
    }
}

#[test]
fn population_has_schools() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let levels = LevelConfig::new(8, MapGeometry::new(1_000.0)).unwrap();
    let school = SchoolConfig { epsilon: 10.0, delta_m: 1.0, clustering_level: 3, ..SchoolConfig::default() };
    let pop = school_population(&mut rng, 500, levels, school);
    assert!(pop.engine.leader_count() < 400, "{} leaders", pop.engine.leader_count());
    assert!(pop.engine.check_consistency().is_ok());
    let q = Point::new(500.0, 500.0);
    let t = Timestamp::from_secs(30);
    let (got, stats) = knn(&pop.engine, &NnQuery { loc: q, k: 25, t }, 4).unwrap();
    assert_eq!(got, brute_knn(&pop.engine, &pop.ids, q, 25, t));
    assert!(stats.rounds >= 1);
}
