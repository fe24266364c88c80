//! Benchmark harness: epoch-driven simulation with concurrent ingest
//! workers, the clustering scheduler, aging into the archive and a kNN query
//! load, plus worker-scaling and NN-level sweeps.

mod config;
mod nnbench;

use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{SimConfig, KEYS};
pub use nnbench::{run_nnbench, DensityResult, LevelResult, NnBenchConfig, NnBenchReport};

use crate::archive::{ArchiveConfig, ArchiveError, Archiver};
use crate::nn::{knn, FlagConfig, LevelCache, NnQuery};
use crate::schooling::{ClusterScheduler, Engine, SchoolError, UpdateCounts, UpdateMessage};
use crate::store::{Store, StoreConfig, StoreError, TableName};
use crate::types::{Point, Timestamp};
use crate::workload::{TraceReader, Workload, WorkloadError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    School(#[from] SchoolError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

/// Counters for one simulated second.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    /// End of the second, in whole seconds.
    pub t: u64,
    pub received: u64,
    pub shed: u64,
    /// Updates that wrote to the store: leader updates, promotions and registrations.
    pub written: u64,
    /// Updates rejected as stale or invalid.
    pub failed: u64,
    pub store_writes: u64,
    pub os_count: u64,
    pub queries: u64,
    pub failed_queries: u64,
}

/// Phase durations of one cell reclustering, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub t: u64,
    pub read_ms: f64,
    pub compute_ms: f64,
    pub write_ms: f64,
    pub leaders_before: usize,
    pub leaders_after: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSummary {
    pub appended: u64,
    pub events: u64,
    pub pages: u64,
    pub blocked_appends: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub counts: UpdateCounts,
    pub shed_rate: f64,
    pub avg_os: f64,
    pub max_os: u64,
    pub queries: u64,
    pub failed_queries: u64,
    pub archive: Option<ArchiveSummary>,
    /// Wall-clock fields; everything above is reproducible for one worker.
    pub ingest_secs: f64,
    pub throughput: f64,
    pub update_p50_us: f64,
    pub update_p99_us: f64,
    pub update_max_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: SimConfig,
    pub series: Vec<Bucket>,
    pub clustering: Vec<ClusterSample>,
    pub summary: Summary,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn total_writes(store: &Store) -> u64 {
    TableName::ALL.iter().map(|t| store.writes(*t)).sum()
}

fn percentile(sorted: &[u32], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    f64::from(sorted[i])
}

/// Splits one epoch's messages among workers by object id, keeping each
/// worker's share in time order.
fn partition(msgs: Vec<UpdateMessage>, workers: usize) -> Vec<Vec<UpdateMessage>> {
    let mut out = vec![Vec::new(); workers];
    for m in msgs {
        out[(m.id % workers as u64) as usize].push(m);
    }
    out
}

/// Runs one simulation. Each simulated second is an epoch: the workload's
/// messages for the second are ingested by `workers` threads while a query
/// thread serves the kNN load; at the epoch boundary the clustering
/// scheduler and aging run, and a bucket is recorded. Archiving, if
/// enabled, is drained last.
pub fn run_simulation(cfg: &SimConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut workload = Workload::new(cfg.workload.clone())?;
    simulate(cfg, |end| Ok(workload.step(end)))
}

/// Like [`run_simulation`], but ingests a recorded trace instead of the
/// generated workload. The run lasts until the trace's latest timestamp,
/// which replaces the configured duration in the report.
pub fn replay_trace(cfg: &SimConfig, path: &Path) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    // A first pass validates the whole file and finds its time span.
    let mut last = Timestamp::ZERO;
    for m in TraceReader::open(path)? {
        last = last.max(m?.t);
    }
    let mut cfg = cfg.clone();
    cfg.workload.duration = last.as_secs_f64();
    let mut reader = TraceReader::open(path)?.peekable();
    simulate(&cfg, |end| {
        let mut out = Vec::new();
        while let Some(m) = reader.next_if(|m| m.as_ref().map_or(true, |m| m.t <= end)) {
            out.push(m?);
        }
        Ok(out)
    })
}

/// The epoch loop shared by generated and replayed runs. `next` yields the
/// messages up to and including the given time.
fn simulate(
    cfg: &SimConfig,
    mut next: impl FnMut(Timestamp) -> Result<Vec<UpdateMessage>, BenchError>,
) -> Result<BenchReport, BenchError> {
    let levels = cfg.levels()?;
    let store = Arc::new(Store::new(StoreConfig { tier_ttls: cfg.tier_ttls.clone(), ..StoreConfig::default() })?);
    let engine = Engine::new(store.clone(), levels, cfg.school)?;
    let archiver = if cfg.archive_disks > 0 {
        let a = Arc::new(Archiver::new(ArchiveConfig {
            disks: cfg.archive_disks,
            page_bytes: cfg.page_bytes,
            timing: cfg.disk,
            dir: cfg.archive_dir.clone(),
            map: levels.map,
            ..ArchiveConfig::default()
        })?);
        store.set_sink(a.clone());
        engine.set_listener(a.clone());
        Some(a)
    } else {
        None
    };
    let mut scheduler = ClusterScheduler::for_engine(&engine);
    let cache = LevelCache::new();
    let mut query_rng = ChaCha8Rng::seed_from_u64(cfg.workload.seed);
    query_rng.set_stream(2);

    let seconds = cfg.workload.duration.ceil() as u64;
    let mut series = Vec::with_capacity(seconds as usize);
    let mut clustering = Vec::new();
    let mut latencies: Vec<u32> = Vec::new();
    let mut ingest = Duration::ZERO;
    let mut prev = engine.counts();
    let mut prev_writes = total_writes(&store);
    for s in 1..=seconds {
        let end = Timestamp::from_secs_f64((s as f64).min(cfg.workload.duration));
        let batches = partition(next(end)?, cfg.workers);
        let due = ((s as f64 * cfg.query_rate).floor() - ((s - 1) as f64 * cfg.query_rate).floor()) as usize;
        let size = levels.map.size;
        let points: Vec<Point> =
            (0..due).map(|_| Point::new(query_rng.gen_range(0.0..=size), query_rng.gen_range(0.0..=size))).collect();

        let (epoch_ingest, failed_queries) = thread::scope(|scope| {
            let engine = &engine;
            let started = Instant::now();
            let workers: Vec<_> = batches
                .iter()
                .map(|batch| {
                    scope.spawn(move || {
                        let mut lat = Vec::with_capacity(batch.len());
                        for m in batch {
                            let t0 = Instant::now();
                            // Rejections are counted by the engine.
                            let _ = engine.process_update(m);
                            lat.push(t0.elapsed().as_micros().min(u32::MAX as u128) as u32);
                        }
                        lat
                    })
                })
                .collect();
            let queries = scope.spawn(|| {
                let timeout = Duration::from_secs_f64(cfg.query_timeout_ms / 1e3);
                let flag = FlagConfig::for_engine(engine, cfg.sigma);
                let mut failed = 0u64;
                for p in &points {
                    let t0 = Instant::now();
                    let ok = cache
                        .cached_level(engine, *p, &flag, end)
                        .and_then(|choice| knn(engine, &NnQuery { loc: *p, k: cfg.query_k, t: end }, choice.level))
                        .is_ok();
                    if !ok || t0.elapsed() > timeout {
                        failed += 1;
                    }
                }
                failed
            });
            for w in workers {
                latencies.extend(w.join().expect("ingest worker panicked"));
            }
            let elapsed = started.elapsed();
            (elapsed, queries.join().expect("query worker panicked"))
        });
        ingest += epoch_ingest;

        for stats in scheduler.tick(&engine, end)? {
            clustering.push(ClusterSample {
                t: s,
                read_ms: ms(stats.read_time),
                compute_ms: ms(stats.compute_time),
                write_ms: ms(stats.write_time),
                leaders_before: stats.leaders_before,
                leaders_after: stats.leaders_after,
            });
        }
        store.age_tick(end)?;

        let now = engine.counts();
        let writes = total_writes(&store);
        series.push(Bucket {
            t: s,
            received: now.received - prev.received,
            shed: now.shed - prev.shed,
            written: (now.leader_updates + now.promotions + now.registrations)
                - (prev.leader_updates + prev.promotions + prev.registrations),
            failed: now.rejected - prev.rejected,
            store_writes: writes - prev_writes,
            os_count: engine.leader_count() as u64,
            queries: due as u64,
            failed_queries,
        });
        prev = now;
        prev_writes = writes;
    }

    let archive = match &archiver {
        Some(a) => {
            store.drain_to_sink()?;
            a.drain()?;
            let st = a.stats();
            Some(ArchiveSummary {
                appended: st.appended,
                events: st.events,
                pages: st.pages,
                blocked_appends: st.blocked_appends,
            })
        }
        None => None,
    };

    latencies.sort_unstable();
    let counts = engine.counts();
    let ingest_secs = ingest.as_secs_f64();
    let summary = Summary {
        counts,
        shed_rate: counts.shed_rate(),
        avg_os: if series.is_empty() {
            0.0
        } else {
            series.iter().map(|b| b.os_count as f64).sum::<f64>() / series.len() as f64
        },
        max_os: series.iter().map(|b| b.os_count).max().unwrap_or(0),
        queries: series.iter().map(|b| b.queries).sum(),
        failed_queries: series.iter().map(|b| b.failed_queries).sum(),
        archive,
        ingest_secs,
        throughput: if ingest_secs > 0.0 { counts.received as f64 / ingest_secs } else { 0.0 },
        update_p50_us: percentile(&latencies, 0.5),
        update_p99_us: percentile(&latencies, 0.99),
        update_max_us: latencies.last().map_or(0.0, |v| f64::from(*v)),
    };
    Ok(BenchReport { config: cfg.clone(), series, clustering, summary })
}

/// One worker count of a scaling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub workers: usize,
    pub received: u64,
    pub ingest_secs: f64,
    pub throughput: f64,
    /// Throughput relative to the first point.
    pub speedup: f64,
    pub failed_queries_per_sec: f64,
}

/// Runs the same configuration once per worker count.
pub fn run_scaling(cfg: &SimConfig, workers: &[usize]) -> Result<Vec<ScalingPoint>, BenchError> {
    let mut out: Vec<ScalingPoint> = Vec::new();
    for &w in workers {
        let report = run_simulation(&SimConfig { workers: w, ..cfg.clone() })?;
        let s = &report.summary;
        let base = out.first().map_or(s.throughput, |p| p.throughput);
        let secs = report.series.len().max(1) as f64;
        out.push(ScalingPoint {
            workers: w,
            received: s.counts.received,
            ingest_secs: s.ingest_secs,
            throughput: s.throughput,
            speedup: if base > 0.0 { s.throughput / base } else { 0.0 },
            failed_queries_per_sec: s.failed_queries as f64 / secs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
