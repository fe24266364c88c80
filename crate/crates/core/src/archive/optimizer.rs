//! Disk-count and buffer-size selection for the parallel archiver.
//!
//! With `n` disks sharing a buffer of `s_B = s_rec · n_o` bytes, one flush
//! takes `T_d(n) = T_rot + T_seek + s_B / (n · R_disk)`. Write utilization
//! `U_d(n) = s_B / (n · R_disk · (T_rot + T_seek))` falls with `n` and read
//! resolution `R_d(n) = k · n / n_o` rises with it; the optimizer maximizes
//! `min(U_d, R_d)` subject to the fill time of one buffer partition being at
//! least the flush time.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskModelParams {
    /// Rotational latency, seconds.
    pub t_rot: f64,
    /// Seek time, seconds.
    pub t_seek: f64,
    /// Sustained transfer rate, bytes per second.
    pub r_disk: f64,
    /// Read-resolution normalization factor.
    pub k: f64,
    /// Bytes per location record.
    pub s_rec: f64,
    /// Number of objects.
    pub n_o: f64,
    /// Incoming location records per second.
    pub update_rate: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("invalid disk model parameter `{0}`: must be positive")]
    InvalidParam(&'static str),
    #[error("disk limit must be at least 1")]
    NoDisks,
    #[error("no feasible disk count in [1, {n_max}]: fill time {t_m}s >= flush time requires {needed}")]
    Infeasible { n_max: u64, t_m: f64, needed: String },
}

impl DiskModelParams {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let checks = [
            ("t_rot", self.t_rot),
            ("t_seek", self.t_seek),
            ("r_disk", self.r_disk),
            ("k", self.k),
            ("s_rec", self.s_rec),
            ("n_o", self.n_o),
            ("update_rate", self.update_rate),
        ];
        for (name, v) in checks {
            if !(v > 0.0) {
                return Err(OptimizeError::InvalidParam(name));
            }
        }
        Ok(())
    }

    /// Positioning latency `T_rot + T_seek`.
    pub fn latency(&self) -> f64 {
        self.t_rot + self.t_seek
    }

    /// Total buffer size `s_rec · n_o` in bytes.
    pub fn buffer_bytes(&self) -> f64 {
        self.s_rec * self.n_o
    }

    pub fn u_d(&self, n: u64) -> f64 {
        self.buffer_bytes() / (n as f64 * self.r_disk * self.latency())
    }

    pub fn r_d(&self, n: u64) -> f64 {
        self.k * n as f64 / self.n_o
    }

    pub fn objective(&self, n: u64) -> f64 {
        self.u_d(n).min(self.r_d(n))
    }

    /// Flush time of one disk's partition.
    pub fn t_d(&self, n: u64) -> f64 {
        self.latency() + self.buffer_bytes() / (n as f64 * self.r_disk)
    }

    /// Fill time of one disk's partition: `(s_B/n)` bytes arriving at
    /// `update_rate · s_rec / n` bytes per second, independent of `n`.
    pub fn t_m(&self, _n: u64) -> f64 {
        self.buffer_bytes() / (self.update_rate * self.s_rec)
    }

    pub fn feasible(&self, n: u64) -> bool {
        self.t_m(n) >= self.t_d(n)
    }

    /// Disk count where `U_d = R_d` over the reals.
    pub fn balance_point(&self) -> f64 {
        (self.buffer_bytes() * self.n_o / (self.r_disk * self.latency() * self.k)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub n_d: u64,
    pub s_b: f64,
    pub u_d: f64,
    pub r_d: f64,
    pub t_d: f64,
    pub t_m: f64,
    /// The fill-time constraint moved the answer away from the unconstrained optimum.
    pub constrained: bool,
}

impl OptimizerResult {
    fn at(p: &DiskModelParams, n: u64, constrained: bool) -> Self {
        Self { n_d: n, s_b: p.buffer_bytes(), u_d: p.u_d(n), r_d: p.r_d(n), t_d: p.t_d(n), t_m: p.t_m(n), constrained }
    }
}

/// Best of `candidates` under the objective; ties go to fewer disks.
fn best_of(p: &DiskModelParams, candidates: impl IntoIterator<Item = u64>) -> Option<u64> {
    let mut best: Option<(u64, f64)> = None;
    for n in candidates {
        let v = p.objective(n);
        match best {
            Some((bn, bv)) if v < bv || (v == bv && n >= bn) => {}
            _ => best = Some((n, v)),
        }
    }
    best.map(|(n, _)| n)
}

/// Integer candidates around the balance point, clipped to `[lo, hi]`.
fn candidates(p: &DiskModelParams, lo: u64, hi: u64) -> Vec<u64> {
    let star = p.balance_point();
    let mut out = vec![lo, hi];
    if star.is_finite() {
        let f = star.floor().clamp(0.0, u64::MAX as f64) as u64;
        for n in f.saturating_sub(1)..=f.saturating_add(2) {
            out.push(n.clamp(lo, hi));
        }
    }
    out
}

/// Smallest disk count whose flush time fits in the fill time, if any.
fn min_feasible(p: &DiskModelParams, n_max: u64) -> Option<u64> {
    let slack = p.t_m(1) - p.latency();
    if !(slack > 0.0) {
        return None;
    }
    let estimate = (p.buffer_bytes() / (p.r_disk * slack)).ceil().max(1.0);
    if estimate > n_max as f64 + 1.0 {
        return None;
    }
    // Step off the estimate to absorb rounding in the closed form.
    let mut n = (estimate as u64).clamp(1, n_max);
    while n > 1 && p.feasible(n - 1) {
        n -= 1;
    }
    while n <= n_max && !p.feasible(n) {
        n += 1;
    }
    (n <= n_max).then_some(n)
}

/// Picks the disk count in `[1, n_max]` maximizing `min(U_d, R_d)` among
/// those satisfying the fill-time constraint.
pub fn optimize(p: &DiskModelParams, n_max: u64) -> Result<OptimizerResult, OptimizeError> {
    p.validate()?;
    if n_max == 0 {
        return Err(OptimizeError::NoDisks);
    }
    let lo = min_feasible(p, n_max).ok_or_else(|| OptimizeError::Infeasible {
        n_max,
        t_m: p.t_m(1),
        needed: format!(
            "T_rot + T_seek + s_B/(n_d R_disk) <= {}s, but at n_d = {n_max} the flush time is {}s",
            p.t_m(1),
            p.t_d(n_max)
        ),
    })?;
    let free = best_of(p, candidates(p, 1, n_max)).expect("non-empty candidates");
    let n = best_of(p, candidates(p, lo, n_max)).expect("non-empty candidates");
    Ok(OptimizerResult::at(p, n, free < lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_d: u64,
    pub u_d: f64,
    pub r_d: f64,
    pub objective: f64,
    pub t_d: f64,
    pub t_m: f64,
    pub feasible: bool,
}

/// Every disk count in `[1, n_max]` with its utilizations and feasibility.
pub fn sweep(p: &DiskModelParams, n_max: u64) -> Vec<SweepPoint> {
    (1..=n_max)
        .map(|n| SweepPoint {
            n_d: n,
            u_d: p.u_d(n),
            r_d: p.r_d(n),
            objective: p.objective(n),
            t_d: p.t_d(n),
            t_m: p.t_m(n),
            feasible: p.feasible(n),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> DiskModelParams {
        DiskModelParams { t_rot: 0.006, t_seek: 0.004, r_disk: 1e8, k: 1e4, s_rec: 100.0, n_o: 1e6, update_rate: 1e6 }
    }

    #[test]
    fn worked_example() {
        let p = worked();
        assert_eq!(p.buffer_bytes(), 1e8);
        assert!((p.balance_point() - 100.0).abs() < 1e-9);
        let r = optimize(&p, 1000).unwrap();
        assert_eq!(r.n_d, 100);
        assert!((r.u_d - 1.0).abs() < 1e-12 && (r.r_d - 1.0).abs() < 1e-12);
        assert!(!r.constrained);
    }

    #[test]
    fn huge_k_prefers_one_disk() {
        let p = DiskModelParams { k: f64::INFINITY, update_rate: 1e5, ..worked() };
        assert_eq!(optimize(&p, 1000).unwrap().n_d, 1);
        // Slow fills force more disks.
        let p = DiskModelParams { k: 1e300, update_rate: 1e7, ..worked() };
        let r = optimize(&p, 1000).unwrap();
        assert!(r.constrained);
        assert_eq!(r.n_d, 12);
        assert!(p.feasible(r.n_d) && !p.feasible(r.n_d - 1));
    }

    #[test]
    fn infeasible_reports_constraint() {
        let p = DiskModelParams { update_rate: 1e9, ..worked() };
        assert!(matches!(optimize(&p, 1000), Err(OptimizeError::Infeasible { .. })));
        assert!(matches!(optimize(&worked(), 0), Err(OptimizeError::NoDisks)));
        let p = DiskModelParams { r_disk: 0.0, ..worked() };
        assert_eq!(optimize(&p, 10), Err(OptimizeError::InvalidParam("r_disk")));
    }
}
