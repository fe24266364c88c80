//! Static-snapshot NN sweep: every fixed NN level against the adaptive
//! level choice, across object densities.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::nn::{knn, sort_neighbors, FlagConfig, LevelCache, Neighbor, NnQuery, ScanCost};
use crate::schooling::{Engine, SchoolConfig, UpdateMessage};
use crate::spatial::{LevelConfig, MapGeometry};
use crate::store::Store;
use crate::types::{Point, Timestamp, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnBenchConfig {
    pub seed: u64,
    pub densities: Vec<usize>,
    pub spatial_level: u8,
    pub map_size: f64,
    pub sigma: f64,
    pub k: usize,
    /// Queries per density used for the cost comparison.
    pub queries: usize,
    /// Queries per density additionally checked against brute force.
    pub exact_sample: usize,
}

impl Default for NnBenchConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            densities: vec![1_000, 10_000, 50_000, 100_000],
            spatial_level: 10,
            map_size: 1_000.0,
            sigma: 32.0,
            k: 10,
            queries: 200,
            exact_sample: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: u8,
    pub rows_per_query: f64,
    pub micros_per_query: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub objects: usize,
    pub fixed: Vec<LevelResult>,
    pub best_level: u8,
    pub best_rows: f64,
    /// Adaptive choice; rows include the probing done on cache misses.
    pub flag: LevelResult,
    pub flag_avg_level: f64,
    pub flag_ratio: f64,
    pub exact_checked: usize,
    pub exact_mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnBenchReport {
    pub config: NnBenchConfig,
    pub densities: Vec<DensityResult>,
}

impl NnBenchReport {
    /// Largest cost ratio of each fixed level to the per-density best, over
    /// all densities.
    pub fn worst_fixed_ratios(&self) -> Vec<(u8, f64)> {
        let Some(first) = self.densities.first() else { return Vec::new() };
        first
            .fixed
            .iter()
            .map(|l| {
                let worst = self
                    .densities
                    .iter()
                    .filter_map(|d| d.fixed.iter().find(|f| f.level == l.level).map(|f| f.rows_per_query / d.best_rows))
                    .fold(0.0, f64::max);
                (l.level, worst)
            })
            .collect()
    }
}

/// Brute-force k nearest over known positions, ordered by (distance, id).
pub fn brute_force(points: &[(u64, Point)], q: Point, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points.iter().map(|&(id, p)| Neighbor { id, loc: p, dist: p.dist(q) }).collect();
    sort_neighbors(&mut all);
    all.truncate(k);
    all
}

fn populate(cfg: &NnBenchConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<(Engine, Vec<(u64, Point)>), BenchError> {
    let levels = LevelConfig::new(cfg.spatial_level, MapGeometry::new(cfg.map_size)).map_err(|e| BenchError::Config(e.to_string()))?;
    let school = SchoolConfig { clustering_level: 0, ..SchoolConfig::default() };
    let engine = Engine::new(Arc::new(Store::in_memory()), levels, school)?;
    let mut points = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let p = Point::new(rng.gen_range(0.0..=cfg.map_size), rng.gen_range(0.0..=cfg.map_size));
        engine.process_update(&UpdateMessage::new(id, p, Vec2::ZERO, Timestamp::ZERO))?;
        points.push((id, p));
    }
    Ok((engine, points))
}

/// Measures rows scanned per kNN query at every fixed NN level and with the
/// adaptive level choice, for each density of uniformly placed objects.
pub fn run_nnbench(cfg: &NnBenchConfig) -> Result<NnBenchReport, BenchError> {
    if cfg.k == 0 || cfg.queries == 0 || !(cfg.sigma >= 1.0) {
        return Err(BenchError::Config("k, queries and sigma must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for &n in &cfg.densities {
        let (engine, points) = populate(cfg, n, &mut rng)?;
        let queries: Vec<Point> = (0..cfg.queries.max(cfg.exact_sample))
            .map(|_| Point::new(rng.gen_range(0.0..=cfg.map_size), rng.gen_range(0.0..=cfg.map_size)))
            .collect();
        let t = Timestamp::ZERO;
        let query = |p: Point| NnQuery { loc: p, k: cfg.k, t };

        let mut fixed = Vec::new();
        for level in 0..=cfg.spatial_level {
            let mut cost = ScanCost::default();
            let started = Instant::now();
            for p in &queries[..cfg.queries] {
                cost.add(knn(&engine, &query(*p), level)?.1.cost);
            }
            fixed.push(LevelResult {
                level,
                rows_per_query: cost.rows_scanned(cfg.sigma) / cfg.queries as f64,
                micros_per_query: started.elapsed().as_secs_f64() * 1e6 / cfg.queries as f64,
            });
        }
        let best = *fixed.iter().min_by(|a, b| a.rows_per_query.total_cmp(&b.rows_per_query)).expect("at least one level");

        let cache = LevelCache::new();
        let flag_cfg = FlagConfig::for_engine(&engine, cfg.sigma);
        let mut cost = ScanCost::default();
        let mut level_sum = 0.0;
        let mut mismatches = 0;
        let started = Instant::now();
        for (i, p) in queries.iter().enumerate() {
            let choice = cache.cached_level(&engine, *p, &flag_cfg, t)?;
            let (found, stats) = knn(&engine, &query(*p), choice.level)?;
            if i < cfg.queries {
                cost.add(choice.cost);
                cost.add(stats.cost);
                level_sum += f64::from(choice.level);
            }
            if i < cfg.exact_sample && found != brute_force(&points, *p, cfg.k) {
                mismatches += 1;
            }
        }
        let flag_rows = cost.rows_scanned(cfg.sigma) / cfg.queries as f64;
        out.push(DensityResult {
            objects: n,
            fixed,
            best_level: best.level,
            best_rows: best.rows_per_query,
            flag: LevelResult {
                level: (level_sum / cfg.queries as f64).round() as u8,
                rows_per_query: flag_rows,
                micros_per_query: started.elapsed().as_secs_f64() * 1e6 / queries.len() as f64,
            },
            flag_avg_level: level_sum / cfg.queries as f64,
            flag_ratio: flag_rows / best.rows_per_query,
            exact_checked: cfg.exact_sample,
            exact_mismatches: mismatches,
        });
    }
    Ok(NnBenchReport { config: cfg.clone(), densities: out })
}
