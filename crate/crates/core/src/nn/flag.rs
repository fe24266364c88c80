//! Adaptive choice of the NN level from local leader density.

use serde::{Deserialize, Serialize};

use super::{leaders_in_cell, ScanCost};
use crate::schooling::{Engine, SchoolError};
use crate::types::Point;

/// Largest downward step, in levels, taken from one density probe.
pub const MAX_DOWN_STEP: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagConfig {
    /// Target number of leaders per NN cell.
    pub sigma: f64,
    /// Current total number of leaders.
    pub leaders: usize,
    pub min_level: u8,
    pub max_level: u8,
    /// Seconds a cached level stays fresh.
    pub cache_ttl: f64,
}

impl FlagConfig {
    pub fn for_engine(engine: &Engine, sigma: f64) -> Self {
        Self {
            sigma,
            leaders: engine.leader_count(),
            min_level: 0,
            max_level: engine.levels().spatial_level,
            cache_ttl: 60.0,
        }
    }
}

/// Levels probed by one [`best_level`] run and the leader count seen at each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagTrace {
    pub levels: Vec<u8>,
    pub counts: Vec<usize>,
    pub cost: ScanCost,
}

/// Level step suggested by `m` leaders in a cell when `sigma` are wanted:
/// half the base-2 log of the ratio, truncated toward zero, at most
/// [`MAX_DOWN_STEP`] downward.
pub fn density_step(m: usize, sigma: f64) -> i32 {
    if m == 0 {
        return -MAX_DOWN_STEP;
    }
    ((0.5 * (m as f64 / sigma).log2()).trunc() as i32).max(-MAX_DOWN_STEP)
}

/// Initial level guess for `n` leaders spread evenly.
pub fn initial_level(n: usize, cfg: &FlagConfig) -> u8 {
    if n == 0 {
        return cfg.min_level;
    }
    let l = (0.5 * (n as f64 / cfg.sigma).log2()).round();
    l.clamp(cfg.min_level as f64, cfg.max_level as f64) as u8
}

/// Picks the NN level at which the cell containing `loc` holds about
/// `sigma` leaders. Each probe counts the leaders in the current cell and
/// steps by [`density_step`]; a step up raises the lower bound, a step down
/// lowers the upper bound, and the search stops when the step is zero or
/// would leave the open bound window.
pub fn best_level(engine: &Engine, loc: Point, cfg: &FlagConfig) -> Result<(u8, FlagTrace), SchoolError> {
    let map = engine.levels().map;
    let max_level = cfg.max_level.min(engine.levels().spatial_level);
    let min_level = cfg.min_level.min(max_level);
    let mut trace = FlagTrace::default();
    let mut level = initial_level(cfg.leaders, cfg).clamp(min_level, max_level);
    let mut lo = i32::from(min_level) - 1;
    let mut hi = i32::from(max_level) + 1;
    loop {
        let cell = map.encode(map.clamp(loc), level)?;
        let m = leaders_in_cell(engine, cell, &mut trace.cost)?.len();
        trace.levels.push(level);
        trace.counts.push(m);
        let step = density_step(m, cfg.sigma);
        if step == 0 {
            return Ok((level, trace));
        }
        if step > 0 {
            lo = i32::from(level);
        } else {
            hi = i32::from(level);
        }
        let next = (i32::from(level) + step).clamp(i32::from(min_level), i32::from(max_level));
        if next <= lo || next >= hi {
            return Ok((level, trace));
        }
        level = next as u8;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rounding() {
        assert_eq!(density_step(1024, 1.0), 5);
        assert_eq!(density_step(3, 1.0), 0);
        assert_eq!(density_step(4, 1.0), 1);
        assert_eq!(density_step(1, 32.0), -2);
        assert_eq!(density_step(0, 32.0), -MAX_DOWN_STEP);
        assert_eq!(density_step(1, 1e9), -MAX_DOWN_STEP);
    }

    #[test]
    fn initial_guess() {
        let cfg = FlagConfig { sigma: 32.0, leaders: 0, min_level: 2, max_level: 12, cache_ttl: 60.0 };
        assert_eq!(initial_level(0, &cfg), 2);
        assert_eq!(initial_level(32 * 1024, &cfg), 5);
        assert_eq!(initial_level(1, &cfg), 2);
        assert_eq!(initial_level(usize::MAX, &cfg), 12);
    }
}
