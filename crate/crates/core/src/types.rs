//! Small value types shared by every layer of the engine.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Identifier of a tracked object.
pub type ObjectId = u64;

/// A 2-D vector in map units. Used for points, velocities and displacements.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// Points and vectors share a representation.
pub type Point = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Microseconds since the start of the simulated epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);
    pub const MAX: Timestamp = Timestamp(u64::MAX);

    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs.max(0.0) * 1e6).round() as u64)
    }

    pub fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1_000_000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        (self.0 as i128 - earlier.0 as i128) as f64 / 1e6
    }

    pub fn saturating_sub_secs(self, secs: f64) -> Timestamp {
        Timestamp(self.0.saturating_sub((secs * 1e6).round() as u64))
    }

    pub fn plus_secs(self, secs: f64) -> Timestamp {
        Timestamp(self.0.saturating_add((secs * 1e6).round() as u64))
    }
}

/// Seconds with exactly six fractional digits, the trace file convention.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp `{0}`")]
pub struct ParseTimestampError(pub String);

impl FromStr for Timestamp {
    type Err = ParseTimestampError;

    /// Parses decimal seconds without going through floating point, so the
    /// printed form round-trips exactly.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseTimestampError(s.to_string());
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let secs: u64 = whole.parse().map_err(|_| bad())?;
        let mut micros: u64 = 0;
        for (i, b) in frac.bytes().enumerate() {
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        secs.checked_mul(1_000_000)
            .and_then(|v| v.checked_add(micros))
            .map(Timestamp)
            .ok_or_else(bad)
    }
}

/// A timestamped sample of one object's kinematic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub loc: Point,
    pub vel: Vec2,
    pub t: Timestamp,
}

impl LocationRecord {
    pub fn new(loc: Point, vel: Vec2, t: Timestamp) -> Self {
        Self { loc, vel, t }
    }

    /// Linear extrapolation of the recorded position to `at`.
    pub fn position_at(&self, at: Timestamp) -> Point {
        self.loc + self.vel * at.secs_since(self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_text_round_trip() {
        for raw in [0u64, 1, 999_999, 1_000_000, 12_345_678_901] {
            let t = Timestamp(raw);
            assert_eq!(t.to_string().parse::<Timestamp>().unwrap(), t);
        }
        assert_eq!("2.5".parse::<Timestamp>().unwrap(), Timestamp(2_500_000));
        assert!("1.2345678".parse::<Timestamp>().is_err());
        assert!("-1".parse::<Timestamp>().is_err());
        assert!(".5".parse::<Timestamp>().is_err());
    }

    #[test]
    fn extrapolation_is_linear() {
        let rec = LocationRecord::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Timestamp::from_secs(10));
        assert_eq!(rec.position_at(Timestamp::from_secs(12)), Vec2::new(2.0, 0.0));
        assert_eq!(rec.position_at(Timestamp::from_secs(9)), Vec2::new(-1.0, 0.0));
    }
}
