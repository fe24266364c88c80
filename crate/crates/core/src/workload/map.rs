//! Grid road network with one building per block.

use serde::{Deserialize, Serialize};

use rand::Rng;

use super::WorkloadError;
use crate::types::Point;

/// Travel directions along the road grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    East,
    North,
    West,
    South,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::North, Dir::West, Dir::South];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::East => (1, 0),
            Dir::North => (0, 1),
            Dir::West => (-1, 0),
            Dir::South => (0, -1),
        }
    }

    pub fn unit(self) -> Point {
        let (dx, dy) = self.delta();
        Point::new(f64::from(dx), f64::from(dy))
    }

    pub fn reverse(self) -> Dir {
        match self {
            Dir::East => Dir::West,
            Dir::North => Dir::South,
            Dir::West => Dir::East,
            Dir::South => Dir::North,
        }
    }

    /// Quarter turns counter-clockwise from `self` to `to`: 0 straight, 1 left, 2 back, 3 right.
    pub fn turn_to(self, to: Dir) -> u8 {
        ((to as u8 + 4) - self as u8) % 4
    }
}

/// A building and its single entrance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub min: Point,
    pub max: Point,
    /// Entrance on the building perimeter.
    pub entrance: Point,
    /// Closest road point to the entrance.
    pub access: Point,
    /// Side of the building the entrance is on.
    pub side: Dir,
}

impl Building {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Road grid over `[0, size]²`: roads run along every multiple of `pitch`
/// in both axes, and each block between them holds one building inset from
/// the roads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadMap {
    pub size: f64,
    pub blocks: u32,
    pub inset: f64,
    pub buildings: Vec<Building>,
}

impl RoadMap {
    pub fn generate(size: f64, blocks: u32, inset: f64, rng: &mut impl Rng) -> Result<Self, WorkloadError> {
        if !(size > 0.0) || !size.is_finite() {
            return Err(WorkloadError::Config("map size must be positive".into()));
        }
        if blocks == 0 {
            return Err(WorkloadError::Config("at least one block per side is required".into()));
        }
        let pitch = size / f64::from(blocks);
        if !(inset > 0.0) || 2.0 * inset >= pitch {
            return Err(WorkloadError::Config(format!("building inset {inset} does not fit blocks of width {pitch}")));
        }
        let mut buildings = Vec::with_capacity((blocks * blocks) as usize);
        for bj in 0..blocks {
            for bi in 0..blocks {
                let x0 = f64::from(bi) * pitch;
                let y0 = f64::from(bj) * pitch;
                let min = Point::new(x0 + inset, y0 + inset);
                let max = Point::new(x0 + pitch - inset, y0 + pitch - inset);
                let side = Dir::ALL[rng.gen_range(0..4)];
                let along = rng.gen_range(0.0..1.0);
                let (entrance, access) = match side {
                    Dir::South => {
                        let x = min.x + along * (max.x - min.x);
                        (Point::new(x, min.y), Point::new(x, y0))
                    }
                    Dir::North => {
                        let x = min.x + along * (max.x - min.x);
                        (Point::new(x, max.y), Point::new(x, y0 + pitch))
                    }
                    Dir::West => {
                        let y = min.y + along * (max.y - min.y);
                        (Point::new(min.x, y), Point::new(x0, y))
                    }
                    Dir::East => {
                        let y = min.y + along * (max.y - min.y);
                        (Point::new(max.x, y), Point::new(x0 + pitch, y))
                    }
                };
                buildings.push(Building { min, max, entrance, access, side });
            }
        }
        Ok(Self { size, blocks, inset, buildings })
    }

    pub fn pitch(&self) -> f64 {
        self.size / f64::from(self.blocks)
    }

    /// Crossroad coordinate.
    pub fn node(&self, i: i32, j: i32) -> Point {
        Point::new(f64::from(i) * self.pitch(), f64::from(j) * self.pitch())
    }

    pub fn has_node(&self, i: i32, j: i32) -> bool {
        let n = self.blocks as i32;
        (0..=n).contains(&i) && (0..=n).contains(&j)
    }

    /// Whether `p` lies on a road line.
    pub fn on_road(&self, p: Point) -> bool {
        let on = |v: f64| {
            let r = v / self.pitch();
            (r - r.round()).abs() * self.pitch() < 1e-9
        };
        (on(p.x) || on(p.y)) && p.x >= 0.0 && p.y >= 0.0 && p.x <= self.size && p.y <= self.size
    }

    /// Entrances along the segment leaving node `(i, j)` in direction `dir`,
    /// as `(distance from the node, building index)` in travel order.
    pub fn entrances_on(&self, i: i32, j: i32, dir: Dir) -> Vec<(f64, usize)> {
        let start = self.node(i, j);
        let (di, dj) = dir.delta();
        let end = self.node(i + di, j + dj);
        let p = self.pitch();
        let mut out = Vec::new();
        // Blocks on either side of the segment.
        let (lo_i, lo_j) = (i.min(i + di), j.min(j + dj));
        let candidates: [(i32, i32); 2] = if dj == 0 { [(lo_i, lo_j), (lo_i, lo_j - 1)] } else { [(lo_i, lo_j), (lo_i - 1, lo_j)] };
        for (bi, bj) in candidates {
            if bi < 0 || bj < 0 || bi >= self.blocks as i32 || bj >= self.blocks as i32 {
                continue;
            }
            let idx = (bj as u32 * self.blocks + bi as u32) as usize;
            let a = self.buildings[idx].access;
            let on_segment = if dj == 0 {
                (a.y - start.y).abs() < 1e-9 && a.x >= start.x.min(end.x) && a.x <= start.x.max(end.x)
            } else {
                (a.x - start.x).abs() < 1e-9 && a.y >= start.y.min(end.y) && a.y <= start.y.max(end.y)
            };
            if on_segment {
                out.push((a.dist(start).min(p), idx));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}
