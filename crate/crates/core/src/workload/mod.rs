//! Synthetic road-network mobility workload.
//!
//! Pedestrians and cars move along a grid of roads between rectangular
//! buildings, turning uniformly at random at crossroads. Pedestrians passing
//! an entrance may enter the building and later leave it. Each agent
//! reports a noisy position and velocity at random intervals.

mod map;
mod trace;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use map::{Building, Dir, RoadMap};
pub use trace::{read_trace, record_trace, write_trace, TraceReader};

use crate::schooling::UpdateMessage;
use crate::types::{ObjectId, Point, Timestamp, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload configuration: {0}")]
    Config(String),
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub agents: usize,
    /// Fraction of agents that are pedestrians; the rest are cars.
    pub pedestrian_fraction: f64,
    /// Half-width of the uniform position noise, map units.
    pub pos_noise: f64,
    /// Half-width of the uniform velocity noise per axis, units/second.
    pub vel_noise: f64,
    /// Update intervals are drawn uniformly from `(0, max_interval]` seconds.
    pub max_interval: f64,
    pub enter_prob: f64,
    pub exit_prob: f64,
    /// Distance from an entrance within which a passing pedestrian may enter.
    pub entrance_radius: f64,
    /// Simulated seconds to generate.
    pub duration: f64,
    pub map_size: f64,
    pub blocks: u32,
    pub inset: f64,
    pub pedestrian_speed: (f64, f64),
    pub car_speed: (f64, f64),
    /// Id of the first agent; agents use consecutive ids.
    pub id_base: ObjectId,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            agents: 1000,
            pedestrian_fraction: 0.5,
            pos_noise: 0.5,
            vel_noise: 0.05,
            max_interval: 5.0,
            enter_prob: 0.05,
            exit_prob: 0.05,
            entrance_radius: 1.0,
            duration: 600.0,
            map_size: 1000.0,
            blocks: 20,
            inset: 1.0,
            pedestrian_speed: (0.0, 1.0),
            car_speed: (1.0, 2.0),
            id_base: 0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Config(m.to_string()));
        for (name, p) in [("pedestrian_fraction", self.pedestrian_fraction), ("enter_prob", self.enter_prob), ("exit_prob", self.exit_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(WorkloadError::Config(format!("{name} must be within [0, 1]")));
            }
        }
        if !(self.pos_noise >= 0.0 && self.vel_noise >= 0.0) {
            return bad("noise amplitudes must be non-negative");
        }
        if !(self.max_interval > 0.0) || !self.max_interval.is_finite() {
            return bad("update interval bound must be positive");
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return bad("duration must be non-negative");
        }
        if !(self.entrance_radius >= self.inset) {
            return bad("entrance radius must reach the road from the entrance");
        }
        for (lo, hi) in [self.pedestrian_speed, self.car_speed] {
            if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                return bad("speed ranges must satisfy 0 <= min <= max");
            }
        }
        Ok(())
    }

    pub fn end(&self) -> Timestamp {
        Timestamp::from_secs_f64(self.duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    Pedestrian,
    Car,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Place {
    /// On the segment leaving node `(i, j)` towards `dir`, `s` units along it.
    Road { i: i32, j: i32, dir: Dir, s: f64 },
    Inside { building: usize, pos: Point },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobileAgent {
    pub id: ObjectId,
    pub kind: AgentKind,
    pub speed: f64,
    place: Place,
    /// Time up to which `place` is current.
    time: Timestamp,
    pub next_update: Timestamp,
}

impl MobileAgent {
    pub fn inside(&self) -> bool {
        matches!(self.place, Place::Inside { .. })
    }
}

/// One crossroad decision, logged for auditing the turn distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub options: u8,
    /// Index of the chosen option among the available ones, in `Dir::ALL` order.
    pub chosen: u8,
    /// Turn relative to the arrival heading: 0 straight, 1 left, 3 right.
    pub turn: u8,
}

/// A running workload generator.
pub struct Workload {
    cfg: WorkloadConfig,
    map: RoadMap,
    agents: Vec<MobileAgent>,
    queue: BinaryHeap<Reverse<(Timestamp, usize)>>,
    rng: ChaCha8Rng,
    turns: Option<Vec<TurnEvent>>,
}

fn map_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// The road map of a configuration; depends only on the seed and geometry.
pub fn generate_map(cfg: &WorkloadConfig) -> Result<RoadMap, WorkloadError> {
    RoadMap::generate(cfg.map_size, cfg.blocks, cfg.inset, &mut map_rng(cfg.seed))
}

impl Workload {
    pub fn new(cfg: WorkloadConfig) -> Result<Self, WorkloadError> {
        cfg.validate()?;
        let map = generate_map(&cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut agents = Vec::with_capacity(cfg.agents);
        let mut queue = BinaryHeap::with_capacity(cfg.agents);
        let n = map.blocks as i32;
        for k in 0..cfg.agents {
            let kind = if rng.gen_bool(cfg.pedestrian_fraction) { AgentKind::Pedestrian } else { AgentKind::Car };
            let (i, j) = (rng.gen_range(0..=n), rng.gen_range(0..=n));
            let dirs: Vec<Dir> = Dir::ALL.into_iter().filter(|d| map.has_node(i + d.delta().0, j + d.delta().1)).collect();
            let dir = dirs[rng.gen_range(0..dirs.len())];
            let s = rng.gen_range(0.0..map.pitch());
            let speed = draw_speed(&cfg, kind, &mut rng);
            let first = Timestamp(rng.gen_range(0..=(cfg.max_interval * 1e6) as u64));
            agents.push(MobileAgent {
                id: cfg.id_base + k as ObjectId,
                kind,
                speed,
                place: Place::Road { i, j, dir, s },
                time: Timestamp::ZERO,
                next_update: first,
            });
            queue.push(Reverse((first, k)));
        }
        Ok(Self { cfg, map, agents, queue, rng, turns: None })
    }

    pub fn config(&self) -> &WorkloadConfig {
        &self.cfg
    }

    pub fn map(&self) -> &RoadMap {
        &self.map
    }

    pub fn agents(&self) -> &[MobileAgent] {
        &self.agents
    }

    /// Starts logging crossroad decisions.
    pub fn log_turns(&mut self) {
        self.turns = Some(Vec::new());
    }

    pub fn turn_log(&self) -> &[TurnEvent] {
        self.turns.as_deref().unwrap_or(&[])
    }

    /// Time of the next pending update, if before the configured end.
    pub fn peek_time(&self) -> Option<Timestamp> {
        self.queue.peek().map(|Reverse((t, _))| *t).filter(|t| *t <= self.cfg.end())
    }

    /// The next update in time order, or `None` past the configured duration.
    pub fn next_message(&mut self) -> Option<UpdateMessage> {
        let t = self.peek_time()?;
        let Reverse((_, idx)) = self.queue.pop().expect("peeked");
        let msg = self.emit(idx, t);
        let next = t.0 + self.rng.gen_range(1..=(self.cfg.max_interval * 1e6) as u64);
        self.agents[idx].next_update = Timestamp(next);
        self.queue.push(Reverse((Timestamp(next), idx)));
        Some(msg)
    }

    /// All updates with timestamps up to and including `until`.
    pub fn step(&mut self, until: Timestamp) -> Vec<UpdateMessage> {
        let mut out = Vec::new();
        while self.peek_time().is_some_and(|t| t <= until) {
            out.extend(self.next_message());
        }
        out
    }

    fn emit(&mut self, idx: usize, t: Timestamp) -> UpdateMessage {
        self.advance(idx, t);
        let cfg = &self.cfg;
        let a = &self.agents[idx];
        let (pos, vel) = match a.place {
            Place::Road { i, j, dir, s } => (self.map.node(i, j) + dir.unit() * s, dir.unit() * a.speed),
            Place::Inside { pos, .. } => (pos, Vec2::ZERO),
        };
        let (lo, hi) = match a.kind {
            AgentKind::Pedestrian => cfg.pedestrian_speed,
            AgentKind::Car => cfg.car_speed,
        };
        let mut noisy = |v: f64, amp: f64| if amp > 0.0 { v + self.rng.gen_range(-amp..=amp) } else { v };
        let p = Point::new(noisy(pos.x, cfg.pos_noise), noisy(pos.y, cfg.pos_noise));
        let v = if a.inside() { vel } else { Vec2::new(noisy(vel.x, cfg.vel_noise), noisy(vel.y, cfg.vel_noise)) };
        let p = Point::new(p.x.clamp(0.0, self.map.size), p.y.clamp(0.0, self.map.size));
        UpdateMessage::new(a.id, p, clamp_speed(v, lo, hi), t)
    }

    /// Moves agent `idx` forward to time `to`, handling crossroads, building
    /// entries and exits along the way.
    fn advance(&mut self, idx: usize, to: Timestamp) {
        let pitch = self.map.pitch();
        if let Place::Inside { building, .. } = self.agents[idx].place {
            if self.rng.gen_bool(self.cfg.exit_prob) {
                self.leave_building(idx, building, to);
            } else {
                let b = self.map.buildings[building];
                let pos = Point::new(self.rng.gen_range(b.min.x..=b.max.x), self.rng.gen_range(b.min.y..=b.max.y));
                self.agents[idx].place = Place::Inside { building, pos };
                self.agents[idx].time = to;
                return;
            }
        }
        loop {
            let a = &self.agents[idx];
            let Place::Road { i, j, dir, s } = a.place else { unreachable!("agent is on a road") };
            let remaining = to.secs_since(a.time);
            let reach = a.speed * remaining;
            let mut stop = pitch - s;
            let mut entrance = None;
            if a.kind == AgentKind::Pedestrian && self.cfg.enter_prob > 0.0 {
                for (off, b) in self.map.entrances_on(i, j, dir) {
                    if off > s && off < stop {
                        stop = off;
                        entrance = Some(b);
                    }
                }
            }
            if a.speed <= 0.0 || reach < stop - s {
                let a = &mut self.agents[idx];
                a.place = Place::Road { i, j, dir, s: (s + reach).min(pitch) };
                a.time = to;
                return;
            }
            let dt = (stop - s) / a.speed;
            let now = Timestamp(a.time.0 + (dt * 1e6) as u64).min(to);
            self.agents[idx].time = now;
            if let Some(b) = entrance {
                let access = self.map.buildings[b].access;
                let near = access.dist(self.map.buildings[b].entrance) <= self.cfg.entrance_radius + 1e-9;
                self.agents[idx].place = Place::Road { i, j, dir, s: stop };
                if near && self.rng.gen_bool(self.cfg.enter_prob) {
                    let bb = self.map.buildings[b];
                    let pos = Point::new(self.rng.gen_range(bb.min.x..=bb.max.x), self.rng.gen_range(bb.min.y..=bb.max.y));
                    self.agents[idx].place = Place::Inside { building: b, pos };
                    self.agents[idx].time = to;
                    return;
                }
                continue;
            }
            let (di, dj) = dir.delta();
            let (ni, nj) = (i + di, j + dj);
            let options: Vec<Dir> = Dir::ALL
                .into_iter()
                .filter(|d| *d != dir.reverse() && self.map.has_node(ni + d.delta().0, nj + d.delta().1))
                .collect();
            let options = if options.is_empty() { vec![dir.reverse()] } else { options };
            let k = self.rng.gen_range(0..options.len());
            let next = options[k];
            if let Some(log) = &mut self.turns {
                log.push(TurnEvent { options: options.len() as u8, chosen: k as u8, turn: dir.turn_to(next) });
            }
            let kind = self.agents[idx].kind;
            let speed = draw_speed(&self.cfg, kind, &mut self.rng);
            let a = &mut self.agents[idx];
            a.speed = speed;
            a.place = Place::Road { i: ni, j: nj, dir: next, s: 0.0 };
        }
    }

    fn leave_building(&mut self, idx: usize, building: usize, at: Timestamp) {
        let b = self.map.buildings[building];
        let n = self.map.blocks as usize;
        let (bi, bj) = ((building % n) as i32, (building / n) as i32);
        // Node at the low end of the segment holding the access point.
        let (i, j, forward) = match b.side {
            Dir::South => (bi, bj, Dir::East),
            Dir::North => (bi, bj + 1, Dir::East),
            Dir::West => (bi, bj, Dir::North),
            Dir::East => (bi + 1, bj, Dir::North),
        };
        let base = self.map.node(i, j);
        let offset = if forward == Dir::East { b.access.x - base.x } else { b.access.y - base.y };
        let place = if self.rng.gen_bool(0.5) {
            Place::Road { i, j, dir: forward, s: offset }
        } else {
            let (di, dj) = forward.delta();
            Place::Road { i: i + di, j: j + dj, dir: forward.reverse(), s: self.map.pitch() - offset }
        };
        let kind = self.agents[idx].kind;
        let speed = draw_speed(&self.cfg, kind, &mut self.rng);
        let a = &mut self.agents[idx];
        a.place = place;
        a.speed = speed;
        a.time = at;
    }
}

impl Iterator for Workload {
    type Item = UpdateMessage;

    fn next(&mut self) -> Option<UpdateMessage> {
        self.next_message()
    }
}

fn draw_speed(cfg: &WorkloadConfig, kind: AgentKind, rng: &mut impl Rng) -> f64 {
    let (lo, hi) = match kind {
        AgentKind::Pedestrian => cfg.pedestrian_speed,
        AgentKind::Car => cfg.car_speed,
    };
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Rescales `v` so its length lies in `[lo, hi]`; a zero vector stays zero.
fn clamp_speed(v: Vec2, lo: f64, hi: f64) -> Vec2 {
    let n = v.norm();
    if n > hi {
        v * (hi / n)
    } else if n < lo && n > 0.0 {
        v * (lo / n)
    } else {
        v
    }
}

#[cfg(test)]
mod tests;
