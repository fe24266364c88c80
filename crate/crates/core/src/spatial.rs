//! Hilbert-curve spatial indexing over the planar map `[0, M]²`.
//!
//! A level-`l` index names one cell of the `2^l × 2^l` grid. Its digits
//! `d₁…d_l` (each in `0..4`) are the quadrant choices made while descending
//! from the whole map, read along a Hilbert curve, so the index is also the
//! base-4 fraction `0.d₁d₂…d_l`. At any fixed level the numeric order of the
//! indexes is the order of the cells along the curve: consecutive indexes are
//! edge-adjacent cells, and all descendants of a cell form one contiguous run.
//!
//! The curve starts in the lower-left quadrant and runs up, across and down
//! (digit 0 = lower-left, 1 = upper-left, 2 = upper-right, 3 = lower-right),
//! with sub-quadrants rotated the usual way.
//!
//! Cells are half-open `[min, max)` boxes except along the map's maximal
//! edges, which belong to the last row/column.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::store::RowKey;
use crate::types::Point;

/// Finest supported level; `4^30` indexes still fit in a `u64` with room to spare.
pub const MAX_LEVEL: u8 = 30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpatialError {
    #[error("point ({x}, {y}) lies outside the map [0, {size}]²")]
    OutOfBounds { x: f64, y: f64, size: f64 },
    #[error("level {0} exceeds the maximum level {MAX_LEVEL}")]
    LevelTooDeep(u8),
    #[error("position {pos} is not a valid index at level {level}")]
    BadPosition { level: u8, pos: u64 },
    #[error("cell level {cell} is finer than the target level {target}")]
    LevelOrder { cell: u8, target: u8 },
    #[error("cannot parse spatial index `{0}`")]
    Parse(String),
    #[error("row key is not a spatial index key")]
    BadRowKey,
}

/// A Hilbert cell: its level and its position along the level's curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpatialIndex {
    level: u8,
    pos: u64,
}

impl SpatialIndex {
    /// The level-0 index naming the whole map.
    pub const ROOT: SpatialIndex = SpatialIndex { level: 0, pos: 0 };

    pub fn new(level: u8, pos: u64) -> Result<Self, SpatialError> {
        if level > MAX_LEVEL {
            return Err(SpatialError::LevelTooDeep(level));
        }
        if pos >= cells_at(level) {
            return Err(SpatialError::BadPosition { level, pos });
        }
        Ok(Self { level, pos })
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self, SpatialError> {
        if digits.len() > MAX_LEVEL as usize {
            return Err(SpatialError::LevelTooDeep(digits.len() as u8));
        }
        let mut pos = 0u64;
        for &d in digits {
            if d > 3 {
                return Err(SpatialError::Parse(format!("digit {d}")));
            }
            pos = (pos << 2) | u64::from(d);
        }
        Ok(Self { level: digits.len() as u8, pos })
    }

    pub fn level(self) -> u8 {
        self.level
    }

    /// Position along the level's curve, in `0..4^level`.
    pub fn pos(self) -> u64 {
        self.pos
    }

    /// Digit `d_i` for `1 ≤ i ≤ level`.
    pub fn digit(self, i: u8) -> u8 {
        assert!(i >= 1 && i <= self.level, "digit {i} out of range");
        ((self.pos >> (2 * (self.level - i))) & 3) as u8
    }

    pub fn digits(self) -> Vec<u8> {
        (1..=self.level).map(|i| self.digit(i)).collect()
    }

    /// The index value as the fraction `0.d₁d₂…d_l` in `[0, 1)`.
    pub fn value(self) -> f64 {
        self.pos as f64 / cells_at(self.level) as f64
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| Self { level: self.level - 1, pos: self.pos >> 2 })
    }

    /// The ancestor at `level` (itself when `level == self.level`).
    pub fn ancestor(self, level: u8) -> Option<Self> {
        (level <= self.level).then(|| Self {
            level,
            pos: self.pos >> (2 * (self.level - level)),
        })
    }

    pub fn is_ancestor_of(self, other: SpatialIndex) -> bool {
        other.ancestor(self.level) == Some(self)
    }

    pub fn children(self) -> Option<[Self; 4]> {
        if self.level >= MAX_LEVEL {
            return None;
        }
        let base = self.pos << 2;
        let level = self.level + 1;
        Some([0, 1, 2, 3].map(|d| Self { level, pos: base | d }))
    }

    /// Positions of all level-`target` descendants, a contiguous range.
    pub fn descendant_range(self, target: u8) -> Result<Range<u64>, SpatialError> {
        if target < self.level {
            return Err(SpatialError::LevelOrder { cell: self.level, target });
        }
        if target > MAX_LEVEL {
            return Err(SpatialError::LevelTooDeep(target));
        }
        let shift = 2 * u32::from(target - self.level);
        Ok((self.pos << shift)..((self.pos + 1) << shift))
    }

    /// Grid column and row of the cell at its own level.
    pub fn grid(self) -> (u32, u32) {
        hilbert_pos_to_grid(self.level, self.pos)
    }

    pub fn from_grid(level: u8, col: u32, row: u32) -> Result<Self, SpatialError> {
        if level > MAX_LEVEL {
            return Err(SpatialError::LevelTooDeep(level));
        }
        let side = 1u64 << level;
        if u64::from(col) >= side || u64::from(row) >= side {
            return Err(SpatialError::BadPosition { level, pos: u64::MAX });
        }
        Ok(Self { level, pos: grid_to_hilbert_pos(level, col, row) })
    }

    /// Fixed-length row key: one ASCII byte `'0'..='3'` per digit, so byte
    /// order equals numeric order among keys of the same level.
    pub fn to_row_key(self) -> RowKey {
        RowKey::from(self.digits().into_iter().map(|d| b'0' + d).collect::<Vec<u8>>())
    }

    pub fn from_row_key(key: &RowKey) -> Result<Self, SpatialError> {
        let bytes = key.as_bytes();
        if bytes.len() > MAX_LEVEL as usize || bytes.iter().any(|b| !(b'0'..=b'3').contains(b)) {
            return Err(SpatialError::BadRowKey);
        }
        let digits: Vec<u8> = bytes.iter().map(|b| b - b'0').collect();
        Self::from_digits(&digits)
    }

    /// Half-open row-key range `[left, right)` holding exactly the
    /// level-`spatial_level` descendants of this cell.
    pub fn key_range(self, spatial_level: u8) -> Result<(RowKey, RowKey), SpatialError> {
        let range = self.descendant_range(spatial_level)?;
        let left = SpatialIndex { level: spatial_level, pos: range.start }.to_row_key();
        let right = if range.end >= cells_at(spatial_level) {
            RowKey::after_all_spatial()
        } else {
            SpatialIndex { level: spatial_level, pos: range.end }.to_row_key()
        };
        Ok((left, right))
    }
}

/// `"L<level>:<base-4 digits>"`, e.g. `L3:201`.
impl fmt::Display for SpatialIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}:", self.level)?;
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for SpatialIndex {
    type Err = SpatialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SpatialError::Parse(s.to_string());
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (level, digits) = rest.split_once(':').ok_or_else(bad)?;
        let level: u8 = level.parse().map_err(|_| bad())?;
        if digits.len() != level as usize || !digits.bytes().all(|b| (b'0'..=b'3').contains(&b)) {
            return Err(bad());
        }
        let digits: Vec<u8> = digits.bytes().map(|b| b - b'0').collect();
        Self::from_digits(&digits)
    }
}

/// Number of cells at `level`.
pub fn cells_at(level: u8) -> u64 {
    1u64 << (2 * u32::from(level))
}

fn hilbert_pos_to_grid(level: u8, pos: u64) -> (u32, u32) {
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = pos;
    let mut s = 1u64;
    while s < (1u64 << level) {
        let rx = 1 & (t >> 1);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t >>= 2;
        s <<= 1;
    }
    (x as u32, y as u32)
}

fn grid_to_hilbert_pos(level: u8, col: u32, row: u32) -> u64 {
    let (mut x, mut y) = (u64::from(col), u64::from(row));
    let mut pos = 0u64;
    let mut s = (1u64 << level) >> 1;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        pos += s * s * ((3 * rx) ^ ry);
        // Fold into the lower-left sub-square of side `s`, then orient.
        x &= s - 1;
        y &= s - 1;
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    pos
}

/// Axis-aligned box of one cell, in map units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBox {
    pub level: u8,
    pub min: Point,
    pub max: Point,
}

impl CellBox {
    pub fn side(&self) -> f64 {
        self.max.x - self.min.x
    }

    /// Closed-box containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Euclidean distance from `p` to the nearest point of the box.
    pub fn min_dist(&self, p: Point) -> f64 {
        let cx = p.x.clamp(self.min.x, self.max.x);
        let cy = p.y.clamp(self.min.y, self.max.y);
        (p.x - cx).hypot(p.y - cy)
    }
}

/// The square map `[0, size]²` on which indexes are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    pub size: f64,
}

impl Default for MapGeometry {
    fn default() -> Self {
        Self { size: 1_000.0 }
    }
}

impl MapGeometry {
    pub fn new(size: f64) -> Self {
        assert!(size > 0.0 && size.is_finite(), "map size must be positive");
        Self { size }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.size && p.y >= 0.0 && p.y <= self.size
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.size), p.y.clamp(0.0, self.size))
    }

    fn cell_side(&self, level: u8) -> f64 {
        self.size / (1u64 << level) as f64
    }

    /// Grid coordinate along one axis, consistent with the boxes `decode` reports.
    fn axis_cell(&self, v: f64, level: u8) -> u32 {
        let n = 1u64 << level;
        let side = self.cell_side(level);
        let mut i = ((v / side).floor().max(0.0) as u64).min(n - 1);
        while i > 0 && v < i as f64 * side {
            i -= 1;
        }
        while i + 1 < n && v >= (i + 1) as f64 * side {
            i += 1;
        }
        i as u32
    }

    /// The level-`level` index of the cell containing `p`.
    pub fn encode(&self, p: Point, level: u8) -> Result<SpatialIndex, SpatialError> {
        if level > MAX_LEVEL {
            return Err(SpatialError::LevelTooDeep(level));
        }
        if !self.contains(p) {
            return Err(SpatialError::OutOfBounds { x: p.x, y: p.y, size: self.size });
        }
        let col = self.axis_cell(p.x, level);
        let row = self.axis_cell(p.y, level);
        SpatialIndex::from_grid(level, col, row)
    }

    pub fn decode(&self, idx: SpatialIndex) -> CellBox {
        let (col, row) = idx.grid();
        let side = self.cell_side(idx.level);
        CellBox {
            level: idx.level,
            min: Point::new(col as f64 * side, row as f64 * side),
            max: Point::new((col + 1) as f64 * side, (row + 1) as f64 * side),
        }
    }

    /// Edge-adjacent cells at the same level, without wraparound.
    pub fn neighbors(&self, idx: SpatialIndex) -> Vec<SpatialIndex> {
        let (col, row) = idx.grid();
        let last = (1u64 << idx.level) as i64 - 1;
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(|(dc, dr)| {
                let (c, r) = (col as i64 + dc, row as i64 + dr);
                if c < 0 || r < 0 || c > last || r > last {
                    return None;
                }
                SpatialIndex::from_grid(idx.level, c as u32, r as u32).ok()
            })
            .collect()
    }

    pub fn min_dist(&self, p: Point, idx: SpatialIndex) -> f64 {
        self.decode(idx).min_dist(p)
    }
}

/// Spatial-level configuration of the Spatial Index Table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub spatial_level: u8,
    pub map: MapGeometry,
}

impl LevelConfig {
    pub fn new(spatial_level: u8, map: MapGeometry) -> Result<Self, SpatialError> {
        if spatial_level == 0 || spatial_level > MAX_LEVEL {
            return Err(SpatialError::LevelTooDeep(spatial_level));
        }
        Ok(Self { spatial_level, map })
    }
}

impl Default for LevelConfig {
    fn default() -> Self {
        Self { spatial_level: 6, map: MapGeometry::default() }
    }
}
