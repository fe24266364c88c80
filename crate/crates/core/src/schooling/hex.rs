//! Hexagonal tiling of velocity space.

use serde::{Deserialize, Serialize};

use crate::types::Vec2;

/// Relative shrink applied to the circumradius so that the diameter bound is strict.
const MARGIN: f64 = 1e-9;

/// Axial coordinates of one flat-top hexagon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HexBin {
    pub q: i64,
    pub r: i64,
}

/// Circumradius of the hexagons used for a maximum in-bin deviation `delta_m`.
pub fn hex_radius(delta_m: f64) -> f64 {
    delta_m / 2.0 * (1.0 - MARGIN)
}

/// Bin of `vel` in a tiling whose hexagons have circumdiameter just under `delta_m`.
pub fn hexagon_bin(vel: Vec2, delta_m: f64) -> HexBin {
    let size = hex_radius(delta_m);
    let q = (2.0 / 3.0 * vel.x) / size;
    let r = (-1.0 / 3.0 * vel.x + 3f64.sqrt() / 3.0 * vel.y) / size;
    cube_round(q, r)
}

/// Center of a bin in velocity space.
pub fn hex_center(bin: HexBin, delta_m: f64) -> Vec2 {
    let size = hex_radius(delta_m);
    let (q, r) = (bin.q as f64, bin.r as f64);
    Vec2::new(size * 1.5 * q, size * 3f64.sqrt() * (r + q / 2.0))
}

fn cube_round(q: f64, r: f64) -> HexBin {
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    HexBin { q: rq as i64, r: rr as i64 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_bin() {
        assert_eq!(hexagon_bin(Vec2::ZERO, 1.0), HexBin { q: 0, r: 0 });
    }

    #[test]
    fn far_apart_velocities_split() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        assert_ne!(hexagon_bin(a, 1.0), hexagon_bin(b, 1.0));
    }

    #[test]
    fn center_maps_to_itself() {
        for q in -3..=3 {
            for r in -3..=3 {
                let bin = HexBin { q, r };
                assert_eq!(hexagon_bin(hex_center(bin, 0.7), 0.7), bin);
            }
        }
    }
}
