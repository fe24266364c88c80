//! Flat `key = value` run configuration.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::archive::{DiskTiming, RECORD_LEN};
use crate::schooling::SchoolConfig;
use crate::spatial::{LevelConfig, MapGeometry};
use crate::workload::WorkloadConfig;

/// Everything a simulation run needs. Text form is one `key = value` per
/// line; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub workload: WorkloadConfig,
    pub school: SchoolConfig,
    pub spatial_level: u8,
    /// Ingest worker threads; objects are partitioned among them by id.
    pub workers: usize,
    pub tier_ttls: Vec<f64>,
    /// Simulated archive disks; 0 disables archiving.
    pub archive_disks: u32,
    pub page_bytes: u64,
    pub disk: DiskTiming,
    pub archive_dir: Option<PathBuf>,
    /// kNN queries issued per simulated second.
    pub query_rate: f64,
    pub query_k: usize,
    pub sigma: f64,
    /// Wall-clock budget after which a query counts as failed.
    pub query_timeout_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workload: WorkloadConfig::default(),
            school: SchoolConfig::default(),
            spatial_level: LevelConfig::default().spatial_level,
            workers: 1,
            tier_ttls: vec![30.0, 120.0, 600.0],
            archive_disks: 4,
            page_bytes: 48 * 1024,
            disk: DiskTiming::default(),
            archive_dir: None,
            query_rate: 10.0,
            query_k: 10,
            sigma: 32.0,
            query_timeout_ms: 1_000.0,
        }
    }
}

/// Keys accepted by [`SimConfig::set`].
pub const KEYS: &[&str] = &[
    "seed",
    "agents",
    "pedestrian_fraction",
    "pos_noise",
    "vel_noise",
    "max_interval",
    "enter_prob",
    "exit_prob",
    "entrance_radius",
    "duration",
    "map_size",
    "blocks",
    "inset",
    "epsilon",
    "delta_m",
    "cluster_interval",
    "clustering_level",
    "extrapolation_cap",
    "spatial_level",
    "workers",
    "tier_ttls",
    "archive_disks",
    "page_bytes",
    "t_rot",
    "t_seek",
    "r_disk",
    "archive_dir",
    "query_rate",
    "query_k",
    "sigma",
    "query_timeout_ms",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, BenchError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| BenchError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl SimConfig {
    /// Parses a configuration text on top of the defaults.
    pub fn from_kv(text: &str) -> Result<Self, BenchError> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), BenchError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                BenchError::Config(m) => BenchError::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), BenchError> {
        let (key, value) = kv.split_once('=').ok_or_else(|| BenchError::Config(format!("override {kv:?}: expected key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        let w = &mut self.workload;
        let s = &mut self.school;
        match key {
            "seed" => w.seed = parse(key, value)?,
            "agents" => w.agents = parse(key, value)?,
            "pedestrian_fraction" => w.pedestrian_fraction = parse(key, value)?,
            "pos_noise" => w.pos_noise = parse(key, value)?,
            "vel_noise" => w.vel_noise = parse(key, value)?,
            "max_interval" => w.max_interval = parse(key, value)?,
            "enter_prob" => w.enter_prob = parse(key, value)?,
            "exit_prob" => w.exit_prob = parse(key, value)?,
            "entrance_radius" => w.entrance_radius = parse(key, value)?,
            "duration" => w.duration = parse(key, value)?,
            "map_size" => w.map_size = parse(key, value)?,
            "blocks" => w.blocks = parse(key, value)?,
            "inset" => w.inset = parse(key, value)?,
            "epsilon" => s.epsilon = parse(key, value)?,
            "delta_m" => s.delta_m = parse(key, value)?,
            "cluster_interval" => s.cluster_interval = parse(key, value)?,
            "clustering_level" => s.clustering_level = parse(key, value)?,
            "extrapolation_cap" => s.extrapolation_cap = parse(key, value)?,
            "spatial_level" => self.spatial_level = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "tier_ttls" => {
                self.tier_ttls = value
                    .split(',')
                    .filter(|v| !v.trim().is_empty())
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "archive_disks" => self.archive_disks = parse(key, value)?,
            "page_bytes" => self.page_bytes = parse(key, value)?,
            "t_rot" => self.disk.t_rot = parse(key, value)?,
            "t_seek" => self.disk.t_seek = parse(key, value)?,
            "r_disk" => self.disk.r_disk = parse(key, value)?,
            "archive_dir" => self.archive_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "query_rate" => self.query_rate = parse(key, value)?,
            "query_k" => self.query_k = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "query_timeout_ms" => self.query_timeout_ms = parse(key, value)?,
            _ => return Err(BenchError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn levels(&self) -> Result<LevelConfig, BenchError> {
        if !(self.workload.map_size > 0.0 && self.workload.map_size.is_finite()) {
            return Err(BenchError::Config("map_size must be positive".into()));
        }
        LevelConfig::new(self.spatial_level, MapGeometry::new(self.workload.map_size))
            .map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.workload.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.school.validate(&self.levels()?).map_err(|e| BenchError::Config(e.to_string()))?;
        if self.workers == 0 {
            return Err(BenchError::Config("workers must be at least 1".into()));
        }
        if !(self.query_rate >= 0.0 && self.query_rate.is_finite()) {
            return Err(BenchError::Config("query_rate must be non-negative".into()));
        }
        if !(self.sigma >= 1.0) {
            return Err(BenchError::Config("sigma must be at least 1".into()));
        }
        if !(self.query_timeout_ms > 0.0) {
            return Err(BenchError::Config("query_timeout_ms must be positive".into()));
        }
        if self.tier_ttls.iter().any(|t| !(*t > 0.0)) {
            return Err(BenchError::Config("tier_ttls must be positive".into()));
        }
        if self.archive_disks > 0 && self.page_bytes < RECORD_LEN as u64 {
            return Err(BenchError::Config(format!("page_bytes must hold at least one {RECORD_LEN}-byte record")));
        }
        let d = &self.disk;
        if !(d.t_rot >= 0.0 && d.t_seek >= 0.0 && d.r_disk > 0.0) {
            return Err(BenchError::Config("disk timing must be non-negative with a positive rate".into()));
        }
        Ok(())
    }
}
