use super::*;

fn small(seed: u64) -> WorkloadConfig {
    WorkloadConfig { seed, agents: 50, duration: 60.0, ..WorkloadConfig::default() }
}

#[test]
fn map_is_deterministic() {
    let a = serde_json::to_vec(&generate_map(&small(4)).unwrap()).unwrap();
    let b = serde_json::to_vec(&generate_map(&small(4)).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_vec(&generate_map(&small(5)).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn map_counts_and_entrances() {
    let map = generate_map(&WorkloadConfig::default()).unwrap();
    assert_eq!(map.buildings.len(), 400);
    for b in &map.buildings {
        let on_perimeter = ((b.entrance.x - b.min.x).abs() < 1e-9 || (b.entrance.x - b.max.x).abs() < 1e-9)
            && b.entrance.y >= b.min.y
            && b.entrance.y <= b.max.y
            || ((b.entrance.y - b.min.y).abs() < 1e-9 || (b.entrance.y - b.max.y).abs() < 1e-9)
                && b.entrance.x >= b.min.x
                && b.entrance.x <= b.max.x;
        assert!(on_perimeter);
        assert!(map.on_road(b.access));
        assert!((b.access.dist(b.entrance) - map.inset).abs() < 1e-9);
    }
}

#[test]
fn degenerate_maps_are_rejected() {
    for cfg in [
        WorkloadConfig { blocks: 0, ..small(1) },
        WorkloadConfig { map_size: 0.0, ..small(1) },
        WorkloadConfig { inset: 30.0, ..small(1) },
    ] {
        assert!(matches!(generate_map(&cfg), Err(WorkloadError::Config(_))));
    }
}

#[test]
fn stream_is_deterministic_and_ordered() {
    let a: Vec<_> = Workload::new(small(9)).unwrap().collect();
    let b: Vec<_> = Workload::new(small(9)).unwrap().collect();
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].t <= w[1].t));
    assert!(a.iter().all(|m| m.t <= Timestamp::from_secs(60)));
}

#[test]
fn noise_free_positions_lie_on_roads() {
    let cfg = WorkloadConfig { pos_noise: 0.0, vel_noise: 0.0, enter_prob: 0.0, ..small(2) };
    let w = Workload::new(cfg).unwrap();
    let map = Workload::map(&w).clone();
    for m in w {
        assert!(map.on_road(m.loc), "{m:?}");
    }
}

#[test]
fn speeds_respect_kind_bounds() {
    let w = Workload::new(WorkloadConfig { agents: 200, ..small(3) }).unwrap();
    let kinds: Vec<AgentKind> = w.agents().iter().map(|a| a.kind).collect();
    for m in w {
        let s = m.vel.norm();
        match kinds[m.id as usize] {
            AgentKind::Pedestrian => assert!(s <= 1.0 + 1e-12),
            AgentKind::Car => assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&s)),
        }
    }
}

#[test]
fn every_agent_reports_every_interval() {
    let msgs: Vec<_> = Workload::new(small(6)).unwrap().collect();
    let mut last = vec![Timestamp::ZERO; 50];
    for m in &msgs {
        assert!(m.t.0 - last[m.id as usize].0 <= 5_000_000);
        last[m.id as usize] = m.t;
    }
}

#[test]
fn trace_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    let n = record_trace(&small(8), &path).unwrap();
    let msgs = read_trace(&path).unwrap();
    assert_eq!(msgs.len(), n);
    assert_eq!(msgs, Workload::new(small(8)).unwrap().collect::<Vec<_>>());
    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.trace");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    match read_trace(&cut) {
        Err(WorkloadError::Malformed { line, .. }) => assert_eq!(line, n),
        other => panic!("expected a malformed-line error, got {other:?}"),
    }
    std::fs::write(&cut, "0.000000 1 2 3 4\n").unwrap();
    assert!(matches!(read_trace(&cut), Err(WorkloadError::Malformed { line: 1, .. })));
}

#[test]
fn crossroad_turns_are_uniform() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let cfg = WorkloadConfig { agents: 2000, pedestrian_fraction: 0.0, duration: 1500.0, ..small(11) };
    let mut w = Workload::new(cfg).unwrap();
    w.log_turns();
    for _ in w.by_ref() {}
    let log = w.turn_log();
    assert!(log.len() >= 100_000, "only {} crossroad events", log.len());
    // Test the chosen option index separately for each option count.
    for options in 2..=3u8 {
        let mut counts = vec![0u64; options as usize];
        for e in log.iter().filter(|e| e.options == options) {
            counts[e.chosen as usize] += 1;
        }
        let n: u64 = counts.iter().sum();
        if n < 1000 {
            continue;
        }
        let expected = n as f64 / options as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((options - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "options {options}: counts {counts:?}, p = {p}");
    }
}

#[test]
fn message_count_matches_interval_model() {
    let cfg = WorkloadConfig { agents: 1000, duration: 60.0, ..small(12) };
    let n = Workload::new(cfg).unwrap().count() as f64;
    let slack = 0.05;
    assert!(n >= 1000.0 * 60.0 / 5.0 * (1.0 - slack), "{n}");
    assert!(n <= 1000.0 * 60.0 / 2.5 * (1.0 + slack), "{n}");
}
