use super::*;

fn quick(seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.workload.seed = seed;
    cfg.workload.agents = 200;
    cfg.workload.duration = 40.0;
    cfg.query_rate = 5.0;
    cfg.tier_ttls = vec![5.0, 5.0, 5.0];
    cfg
}

#[test]
fn kv_parsing() {
    let cfg = SimConfig::from_kv("# run\nagents = 50\n\nepsilon=4.5 # metres\ntier_ttls = 1,2, 3\narchive_dir =\n").unwrap();
    assert_eq!(cfg.workload.agents, 50);
    assert_eq!(cfg.school.epsilon, 4.5);
    assert_eq!(cfg.tier_ttls, vec![1.0, 2.0, 3.0]);
    assert_eq!(cfg.archive_dir, None);
    let err = SimConfig::from_kv("agents = 5\nbogus = 1\n").unwrap_err().to_string();
    assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
    assert!(SimConfig::from_kv("agents\n").is_err());
    assert!(SimConfig::from_kv("agents = many\n").is_err());
    let mut cfg = SimConfig::default();
    cfg.apply_override("workers=3").unwrap();
    assert_eq!(cfg.workers, 3);
    for key in KEYS {
        let mut probe = SimConfig::default();
        let value = match *key {
            "tier_ttls" => "1,2",
            "archive_dir" => "/tmp/x",
            _ => "1",
        };
        probe.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for kv in ["workers = 0", "epsilon = 0", "clustering_level = 9", "pedestrian_fraction = 2", "sigma = 0", "tier_ttls = 0", "page_bytes = 10", "r_disk = 0"] {
        let cfg = SimConfig::from_kv(kv).unwrap();
        assert!(matches!(run_simulation(&cfg), Err(BenchError::Config(_))), "{kv}");
    }
}

#[test]
fn zero_duration_gives_empty_series() {
    let mut cfg = quick(1);
    cfg.workload.duration = 0.0;
    let r = run_simulation(&cfg).unwrap();
    assert!(r.series.is_empty());
    assert_eq!(r.summary.counts.received, 0);
    assert_eq!(r.summary.shed_rate, 0.0);
}

#[test]
fn buckets_conserve_updates() {
    let r = run_simulation(&quick(2)).unwrap();
    assert_eq!(r.series.len(), 40);
    assert!(r.series.windows(2).all(|w| w[0].t < w[1].t));
    for b in &r.series {
        assert!(b.shed <= b.received);
        assert_eq!(b.received, b.shed + b.written + b.failed, "{b:?}");
    }
    let total: u64 = r.series.iter().map(|b| b.received).sum();
    assert_eq!(total, r.summary.counts.received);
    assert_eq!(r.summary.queries, 200);
    assert!(!r.clustering.is_empty());
    let archive = r.summary.archive.unwrap();
    // Every non-shed update left one Location record, all archived at drain.
    let c = r.summary.counts;
    assert_eq!(archive.appended, c.leader_updates + c.promotions + c.registrations);
}

#[test]
fn single_worker_runs_are_reproducible() {
    let strip = |r: &BenchReport| -> Vec<Bucket> { r.series.iter().map(|b| Bucket { failed_queries: 0, ..*b }).collect() };
    let a = run_simulation(&quick(3)).unwrap();
    let b = run_simulation(&quick(3)).unwrap();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.summary.counts, b.summary.counts);
    let shape = |r: &BenchReport| r.clustering.iter().map(|c| (c.t, c.leaders_before, c.leaders_after)).collect::<Vec<_>>();
    assert_eq!(shape(&a), shape(&b));
}

#[test]
fn multiple_workers_process_everything() {
    let one = run_simulation(&quick(4)).unwrap();
    let mut cfg = quick(4);
    cfg.workers = 3;
    let three = run_simulation(&cfg).unwrap();
    assert_eq!(one.summary.counts.received, three.summary.counts.received);
    assert_eq!(three.summary.counts.rejected, 0);
    for b in &three.series {
        assert_eq!(b.received, b.shed + b.written + b.failed);
    }
}

#[test]
fn scaling_reports_each_worker_count() {
    let mut cfg = quick(5);
    cfg.workload.duration = 10.0;
    let points = run_scaling(&cfg, &[1, 2]).unwrap();
    assert_eq!(points.len(), 2);
    assert!(points[0].throughput > 0.0);
    assert_eq!(points[0].speedup, 1.0);
    assert_eq!(points[0].received, points[1].received);
}

#[test]
fn nnbench_small_is_exact() {
    let cfg = NnBenchConfig { densities: vec![300, 3_000], spatial_level: 7, queries: 40, exact_sample: 60, ..NnBenchConfig::default() };
    let r = run_nnbench(&cfg).unwrap();
    assert_eq!(r.densities.len(), 2);
    for d in &r.densities {
        assert_eq!(d.exact_mismatches, 0);
        assert_eq!(d.fixed.len(), 8);
        assert!(d.flag_ratio > 0.0 && d.flag_ratio < 4.0, "{}", d.flag_ratio);
    }
    assert_eq!(r.worst_fixed_ratios().len(), 8);
}

#[test]
fn replayed_trace_matches_generated_run() {
    let mut cfg = quick(5);
    cfg.query_rate = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.trace");
    crate::workload::record_trace(&cfg.workload, &path).unwrap();
    let generated = run_simulation(&cfg).unwrap();
    let replayed = replay_trace(&cfg, &path).unwrap();
    assert_eq!(replayed.summary.counts, generated.summary.counts);
    // The trace ends at its last update, up to one epoch before the configured end.
    let n = replayed.series.len();
    assert!(n + 1 >= generated.series.len());
    assert_eq!(replayed.series[..n - 1], generated.series[..n - 1]);
}

#[test]
fn replay_rejects_a_truncated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.trace");
    std::fs::write(&path, "0.500000 1 10 10 0 0\n1.000000 2 20").unwrap();
    let err = replay_trace(&SimConfig::default(), &path).unwrap_err();
    assert!(matches!(err, BenchError::Workload(WorkloadError::Malformed { line: 2, .. })), "{err}");
}
