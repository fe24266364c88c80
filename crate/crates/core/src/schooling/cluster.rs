//! Periodic reclustering of leaders by velocity, one clustering cell at a time.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{hexagon_bin, Engine, HexBin, SchoolError};
use crate::spatial::{cells_at, SpatialIndex};
use crate::store::schema::IDS_FAMILY;
use crate::store::TableName;
use crate::types::{ObjectId, Timestamp};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeStats {
    pub read_time: Duration,
    pub compute_time: Duration,
    pub write_time: Duration,
    pub leaders_before: usize,
    pub leaders_after: usize,
    pub merges: usize,
    pub writes: usize,
}

struct Candidate {
    id: ObjectId,
    bin: HexBin,
    followers: usize,
}

impl Engine {
    /// Merges, within one clustering cell, every group of leaders whose
    /// latest velocities fall in the same hexagon. The leader with the most
    /// followers survives; ties go to the smaller id.
    pub fn recluster_cell(&self, cell: SpatialIndex, now: Timestamp) -> Result<MergeStats, SchoolError> {
        let ls = self.levels.spatial_level;
        let t0 = Instant::now();
        let (lo, hi) = cell.key_range(ls)?;
        let rows = self.store.scan_columns(TableName::SpatialIndex, &lo, &hi, IDS_FAMILY)?;
        let mut leaders = Vec::new();
        for (_, cols) in rows {
            for col in cols {
                let id = super::codec::column_id(&col)
                    .ok_or_else(|| SchoolError::Inconsistent("bad spatial index column".into()))?;
                let Some(rec) = self.leader_record(id)? else { continue };
                let followers = self.followers(id)?.len();
                leaders.push((id, rec.vel, followers));
            }
        }
        let read_time = t0.elapsed();

        let t1 = Instant::now();
        let candidates: Vec<Candidate> = leaders
            .iter()
            .map(|&(id, vel, followers)| Candidate { id, bin: hexagon_bin(vel, self.cfg.delta_m), followers })
            .collect();
        let plan = merge_plan(&candidates);
        let compute_time = t1.elapsed();

        let t2 = Instant::now();
        let mut merges = 0;
        let mut writes = 0;
        for (survivor, absorbed) in plan {
            match self.merge_schools(survivor, absorbed, now) {
                Ok(w) => {
                    merges += 1;
                    writes += w;
                }
                // A concurrent update or merge changed one side; skip the pair.
                Err(SchoolError::NotLeader(_)) | Err(SchoolError::Stale { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let write_time = t2.elapsed();
        Ok(MergeStats {
            read_time,
            compute_time,
            write_time,
            leaders_before: leaders.len(),
            leaders_after: leaders.len() - merges,
            merges,
            writes,
        })
    }
}

/// Survivor/absorbed pairs for one cell; linear in the number of leaders.
fn merge_plan(candidates: &[Candidate]) -> Vec<(ObjectId, ObjectId)> {
    // Bins are kept in first-seen order, which follows the scan order.
    let mut slot: HashMap<HexBin, usize> = HashMap::with_capacity(candidates.len());
    let mut bins: Vec<Vec<&Candidate>> = Vec::new();
    for c in candidates {
        let i = *slot.entry(c.bin).or_insert_with(|| {
            bins.push(Vec::new());
            bins.len() - 1
        });
        bins[i].push(c);
    }
    let mut plan = Vec::new();
    for members in &bins {
        if members.len() < 2 {
            continue;
        }
        let survivor = members
            .iter()
            .max_by(|a, b| a.followers.cmp(&b.followers).then(b.id.cmp(&a.id)))
            .expect("non-empty bin");
        let mut absorbed: Vec<ObjectId> = members.iter().map(|c| c.id).filter(|id| *id != survivor.id).collect();
        absorbed.sort_unstable();
        plan.extend(absorbed.into_iter().map(|a| (survivor.id, a)));
    }
    plan
}

/// Round-robin driver visiting each clustering cell once per interval.
#[derive(Debug, Clone)]
pub struct ClusterScheduler {
    level: u8,
    cells: u64,
    step_secs: f64,
    next_cell: u64,
    visits: u64,
}

impl ClusterScheduler {
    pub fn new(level: u8, interval_secs: f64) -> Self {
        let cells = cells_at(level);
        Self { level, cells, step_secs: interval_secs / cells as f64, next_cell: 0, visits: 0 }
    }

    pub fn for_engine(engine: &Engine) -> Self {
        Self::new(engine.cfg.clustering_level, engine.cfg.cluster_interval)
    }

    /// Time at which the next cell is due.
    pub fn next_due(&self) -> Option<Timestamp> {
        if !self.step_secs.is_finite() {
            return None;
        }
        Some(Timestamp::from_secs_f64((self.visits + 1) as f64 * self.step_secs))
    }

    /// Reclusters every cell that has come due by `now`, one at a time.
    pub fn tick(&mut self, engine: &Engine, now: Timestamp) -> Result<Vec<MergeStats>, SchoolError> {
        let mut out = Vec::new();
        while let Some(due) = self.next_due() {
            if due > now {
                break;
            }
            let cell = SpatialIndex::new(self.level, self.next_cell)?;
            out.push(engine.recluster_cell(cell, now)?);
            self.next_cell = (self.next_cell + 1) % self.cells;
            self.visits += 1;
        }
        Ok(out)
    }

    /// Cells visited so far.
    pub fn visits(&self) -> u64 {
        self.visits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_prefers_most_followers_then_smaller_id() {
        let b = HexBin { q: 0, r: 0 };
        let c = |id, followers| Candidate { id, bin: b, followers };
        assert_eq!(merge_plan(&[c(4, 0), c(6, 2), c(7, 2)]), vec![(6, 4), (6, 7)]);
        assert_eq!(merge_plan(&[c(9, 0), c(3, 0)]), vec![(3, 9)]);
        assert!(merge_plan(&[c(1, 0)]).is_empty());
    }

    #[test]
    fn infinite_interval_never_fires() {
        let s = ClusterScheduler::new(2, f64::INFINITY);
        assert_eq!(s.next_due(), None);
    }
}
