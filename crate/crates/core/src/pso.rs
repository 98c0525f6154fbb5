//! Multiswarm particle search along the target polygon.
//!
//! One swarm per polygon segment. A particle's fitness is its perpendicular
//! distance to the line through its segment; particles within `accept_tol`
//! of their line are accepted and stop moving for the rest of the frame.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect};
use crate::par;

/// Closed or open chain of segments joining consecutive dominant points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
    /// Index of each vertex in the dominant-point list it was built from.
    pub vertex_ids: Vec<usize>,
    pub segments: Vec<(usize, usize)>,
    pub closed: bool,
}

const MERGE_EPS: f64 = 1e-9;
/// Frame-to-frame displacement below this counts as standing still.
const MOTION_EPS: f64 = 1e-6;

impl Polygon {
    /// Build from `(id, position)` pairs in contour order, merging
    /// coincident consecutive vertices.
    pub fn from_labelled(points: &[(usize, Point2)], closed: bool) -> Result<Self> {
        let mut kept: Vec<(usize, Point2)> = Vec::with_capacity(points.len());
        for &(id, p) in points {
            if kept.last().is_none_or(|&(_, q)| q.dist(p) > MERGE_EPS) {
                kept.push((id, p));
            }
        }
        if closed {
            while kept.len() > 1 && kept[0].1.dist(kept[kept.len() - 1].1) <= MERGE_EPS {
                kept.pop();
            }
        }
        if kept.len() < 2 {
            return Err(Error::DegeneratePolygon);
        }
        let n = kept.len();
        let mut segments: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        if closed {
            segments.push((n - 1, 0));
        }
        Ok(Self {
            vertex_ids: kept.iter().map(|&(id, _)| id).collect(),
            vertices: kept.iter().map(|&(_, p)| p).collect(),
            segments,
            closed,
        })
    }

    pub fn endpoints(&self, segment: usize) -> (Point2, Point2) {
        let (a, b) = self.segments[segment];
        (self.vertices[a], self.vertices[b])
    }

    /// Fitness of `p` against `segment`; segments are never degenerate.
    pub fn fitness(&self, p: Point2, segment: usize) -> f64 {
        let (a, b) = self.endpoints(segment);
        line_distance(p, a, b)
    }

    /// Lowest-index segment whose line is closest to `p`.
    pub fn nearest_segment(&self, p: Point2) -> usize {
        let mut best = (0, f64::INFINITY);
        for s in 0..self.segments.len() {
            let f = self.fitness(p, s);
            if f < best.1 {
                best = (s, f);
            }
        }
        best.0
    }

    pub fn midpoint(&self, segment: usize) -> Point2 {
        let (a, b) = self.endpoints(segment);
        (a + b) * 0.5
    }

    fn segment_key(&self, segment: usize) -> (usize, usize) {
        let (a, b) = self.segments[segment];
        (self.vertex_ids[a], self.vertex_ids[b])
    }
}

pub fn build_polygon(dominants: &[Point2], closed: bool) -> Result<Polygon> {
    let labelled: Vec<_> = dominants.iter().copied().enumerate().collect();
    Polygon::from_labelled(&labelled, closed)
}

pub fn segment_length(d1: Point2, d2: Point2) -> f64 {
    (d2 - d1).norm()
}

/// Perpendicular distance from `p` to the infinite line through `d1`, `d2`.
pub fn fitness(p: Point2, d1: Point2, d2: Point2) -> Result<f64> {
    if d1 == d2 {
        return Err(Error::DegenerateSegment);
    }
    Ok(line_distance(p, d1, d2))
}

fn line_distance(p: Point2, d1: Point2, d2: Point2) -> f64 {
    let (x0, y0) = (p.x, p.y);
    let (x1, y1) = (d1.x, d1.y);
    let (x2, y2) = (d2.x, d2.y);
    ((y2 - y1) * x0 - (x2 - x1) * y0 + x2 * y1 - y2 * x1).abs() / segment_length(d1, d2)
}

/// Distribution of the random acceleration coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoeffDraw {
    /// Uniform integer in `[lo, hi]`.
    Integer(i64, i64),
    /// Uniform real in `[lo, hi)`.
    Uniform(f64, f64),
}

impl CoeffDraw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CoeffDraw::Integer(lo, hi) => rng.random_range(lo..=hi) as f64,
            CoeffDraw::Uniform(lo, hi) if hi > lo => rng.random_range(lo..hi),
            CoeffDraw::Uniform(lo, _) => lo,
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            CoeffDraw::Integer(lo, hi) => 0 <= lo && lo <= hi,
            CoeffDraw::Uniform(lo, hi) => 0.0 <= lo && lo <= hi,
        }
    }
}

impl std::fmt::Display for CoeffDraw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoeffDraw::Integer(lo, hi) => write!(f, "int:{lo}:{hi}"),
            CoeffDraw::Uniform(lo, hi) => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

impl std::str::FromStr for CoeffDraw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad coefficient range `{s}` (int:LO:HI or uniform:LO:HI)"));
        let parts: Vec<&str> = s.split(':').collect();
        let [kind, lo, hi] = parts[..] else {
            return Err(bad());
        };
        let draw = match kind {
            "int" => CoeffDraw::Integer(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?),
            "uniform" => CoeffDraw::Uniform(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        if draw.is_valid() {
            Ok(draw)
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoParams {
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
    pub r1: CoeffDraw,
    pub r2: CoeffDraw,
    pub v_min: f64,
    pub v_max: f64,
    pub population: usize,
    pub accept_tol: f64,
    pub max_iter: usize,
    pub diverge_tol: f64,
    pub diverge_patience: usize,
    /// Also treat a searching particle whose personal best has not improved
    /// for `diverge_patience` iterations as diverged.
    pub stall_reinit: bool,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            w: 0.3,
            c1: 0.1,
            c2: 0.1,
            r1: CoeffDraw::Integer(1, 3),
            r2: CoeffDraw::Integer(1, 3),
            v_min: 1.0,
            v_max: 3.0,
            population: 25,
            accept_tol: 1.5,
            max_iter: 300,
            diverge_tol: 25.0,
            diverge_patience: 20,
            stall_reinit: true,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if [self.w, self.c1, self.c2].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("w, c1 and c2 must be finite and non-negative");
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max && self.v_max.is_finite()) {
            return bad("velocity bounds must satisfy 0 < v_min <= v_max");
        }
        if self.population == 0 || self.max_iter == 0 || self.diverge_patience == 0 {
            return bad("population, max_iter and diverge_patience must be positive");
        }
        if !(self.accept_tol > 0.0 && self.diverge_tol > 0.0) {
            return bad("accept_tol and diverge_tol must be positive");
        }
        if !(self.r1.is_valid() && self.r2.is_valid()) {
            return bad("coefficient ranges must be non-negative and ordered");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleStatus {
    Converged,
    Searching,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub id: usize,
    pub position: Point2,
    pub velocity: Point2,
    pub pbest_position: Point2,
    pub pbest_fitness: f64,
    pub swarm_id: usize,
    pub status: ParticleStatus,
    /// Iteration of the current frame at which the particle was accepted.
    pub accepted_at: Option<usize>,
    /// Positions at the end of the two most recent frames, newest last.
    pub history: [Option<Point2>; 2],
    far_count: usize,
    stall_count: usize,
    rng: ChaCha8Rng,
}

impl PartialEq for Particle {
    fn eq(&self, o: &Self) -> bool {
        self.id == o.id
            && self.position == o.position
            && self.velocity == o.velocity
            && self.pbest_position == o.pbest_position
            && self.pbest_fitness.to_bits() == o.pbest_fitness.to_bits()
            && self.swarm_id == o.swarm_id
            && self.status == o.status
            && self.history == o.history
    }
}

impl Particle {
    pub fn is_accepted(&self) -> bool {
        self.status == ParticleStatus::Converged
    }

    /// True when the last two frame-end positions are known and differ.
    pub fn is_moving(&self) -> bool {
        matches!(self.history, [Some(a), Some(b)] if a.dist(b) > MOTION_EPS)
    }

    pub fn record_frame_end(&mut self) {
        self.history = [self.history[1], Some(self.position)];
    }

    /// Move the particle without touching its velocity or memory.
    pub fn displace(&mut self, to: Point2) {
        self.position = to;
        self.pbest_position = to;
        self.status = ParticleStatus::Searching;
        self.accepted_at = None;
    }

    fn draw_velocity(&mut self, params: &PsoParams) -> Point2 {
        let lo = params.v_min.ceil() as i64;
        let hi = params.v_max.floor() as i64;
        let component = |rng: &mut ChaCha8Rng| {
            let mag = if lo <= hi {
                rng.random_range(lo..=hi) as f64
            } else {
                rng.random_range(params.v_min..=params.v_max)
            };
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let vx = component(&mut self.rng);
        let vy = component(&mut self.rng);
        Point2::new(vx, vy)
    }

    fn reset_counters(&mut self) {
        self.far_count = 0;
        self.stall_count = 0;
    }
}

fn particle_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Uniform positions over `bounds`, signed integer velocities in
/// `[v_min, v_max]`. Each particle owns an independent random stream derived
/// from `rng_seed` and its id, so results do not depend on scheduling.
pub fn init_particles(bounds: Rect, params: &PsoParams, rng_seed: u64) -> Vec<Particle> {
    (0..params.population)
        .map(|id| {
            let mut rng = particle_rng(rng_seed, id);
            let x = rng.random_range(bounds.x..=bounds.right());
            let y = rng.random_range(bounds.y..=bounds.bottom());
            let position = Point2::new(x, y);
            let mut p = Particle {
                id,
                position,
                velocity: Point2::default(),
                pbest_position: position,
                pbest_fitness: f64::INFINITY,
                swarm_id: 0,
                status: ParticleStatus::Searching,
                accepted_at: None,
                history: [None, None],
                far_count: 0,
                stall_count: 0,
                rng,
            };
            p.velocity = p.draw_velocity(params);
            p
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    pub segment_id: usize,
    pub members: Vec<usize>,
    pub gbest_position: Point2,
    pub gbest_fitness: f64,
}

/// Assign each particle to its nearest segment line and build one swarm per
/// segment, seeding each swarm's best with the member nearest an endpoint.
pub fn assign_swarms(particles: &mut [Particle], polygon: &Polygon) -> Vec<Swarm> {
    par::for_each_mut(particles, |p| {
        p.swarm_id = polygon.nearest_segment(p.position);
        p.pbest_fitness = polygon.fitness(p.pbest_position, p.swarm_id);
    });
    let mut swarms = empty_swarms(particles, polygon);
    for s in &mut swarms {
        s.gbest_position = init_gbest(s, particles, polygon);
        s.gbest_fitness = polygon.fitness(s.gbest_position, s.segment_id);
    }
    swarms
}

fn empty_swarms(particles: &[Particle], polygon: &Polygon) -> Vec<Swarm> {
    let mut swarms: Vec<Swarm> = (0..polygon.segments.len())
        .map(|s| Swarm {
            segment_id: s,
            members: Vec::new(),
            gbest_position: polygon.midpoint(s),
            gbest_fitness: polygon.fitness(polygon.midpoint(s), s),
        })
        .collect();
    for p in particles {
        swarms[p.swarm_id].members.push(p.id);
    }
    swarms
}

/// Member closest to either endpoint of the swarm's segment; the segment
/// midpoint for an empty swarm.
pub fn init_gbest(swarm: &Swarm, particles: &[Particle], polygon: &Polygon) -> Point2 {
    let (d1, d2) = polygon.endpoints(swarm.segment_id);
    let mut best: Option<(f64, Point2)> = None;
    for &m in &swarm.members {
        let x = particles[m].position;
        let d = x.dist(d1).min(x.dist(d2));
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, x));
        }
    }
    best.map_or_else(|| polygon.midpoint(swarm.segment_id), |(_, x)| x)
}

/// One velocity and position update, clamped to `v_max` and the frame.
pub fn update_particle(p: &mut Particle, gbest: Point2, params: &PsoParams, frame_size: (usize, usize)) {
    let r1 = params.r1.draw(&mut p.rng);
    let r2 = params.r2.draw(&mut p.rng);
    let v = p.velocity * params.w
        + (p.pbest_position - p.position) * (params.c1 * r1)
        + (gbest - p.position) * (params.c2 * r2);
    p.velocity = Point2::new(
        v.x.clamp(-params.v_max, params.v_max),
        v.y.clamp(-params.v_max, params.v_max),
    );
    let moved = p.position + p.velocity;
    p.position = Point2::new(
        moved.x.clamp(0.0, frame_size.0.saturating_sub(1) as f64),
        moved.y.clamp(0.0, frame_size.1.saturating_sub(1) as f64),
    );
}

fn refresh_pbest(p: &mut Particle, polygon: &Polygon, params: &PsoParams) {
    let f = polygon.fitness(p.position, p.swarm_id);
    if f < p.pbest_fitness {
        p.pbest_fitness = f;
        p.pbest_position = p.position;
        p.stall_count = 0;
    } else {
        p.stall_count += 1;
    }
    p.far_count = if f > params.diverge_tol { p.far_count + 1 } else { 0 };
}

fn refresh_gbest(swarm: &mut Swarm, particles: &[Particle]) {
    let mut best: Option<&Particle> = None;
    for &m in &swarm.members {
        let p = &particles[m];
        if best.is_none_or(|b| p.pbest_fitness < b.pbest_fitness) {
            best = Some(p);
        }
    }
    if let Some(b) = best {
        swarm.gbest_position = b.pbest_position;
        swarm.gbest_fitness = b.pbest_fitness;
    }
}

/// Refresh every member's personal best from its current position, then the
/// swarm best from the members' personal bests.
pub fn update_bests(swarm: &mut Swarm, particles: &mut [Particle], polygon: &Polygon, params: &PsoParams) {
    for &m in &swarm.members {
        refresh_pbest(&mut particles[m], polygon, params);
    }
    refresh_gbest(swarm, particles);
}

/// Particles plus their swarms for the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSwarm {
    pub particles: Vec<Particle>,
    pub swarms: Vec<Swarm>,
    pub frame_size: (usize, usize),
    /// Iterations spent in the current frame.
    pub iterations: usize,
}

impl MultiSwarm {
    pub fn new(mut particles: Vec<Particle>, polygon: &Polygon, frame_size: (usize, usize)) -> Self {
        let swarms = assign_swarms(&mut particles, polygon);
        Self {
            particles,
            swarms,
            frame_size,
            iterations: 0,
        }
    }

    pub fn accepted_positions(&self) -> Vec<Point2> {
        self.particles
            .iter()
            .filter(|p| p.is_accepted())
            .map(|p| p.position)
            .collect()
    }

    pub fn all_accepted(&self) -> bool {
        self.particles.iter().all(Particle::is_accepted)
    }

    fn refresh_all_gbest(&mut self) {
        for s in &mut self.swarms {
            refresh_gbest(s, &self.particles);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Converged,
    Iterating,
    Exhausted,
}

/// One synchronous iteration over all swarms.
pub fn step_swarms(ms: &mut MultiSwarm, polygon: &Polygon, params: &PsoParams) -> StepStatus {
    ms.iterations += 1;
    let iter = ms.iterations;
    par::for_each_mut(&mut ms.particles, |p| {
        if p.status == ParticleStatus::Searching && polygon.fitness(p.position, p.swarm_id) <= params.accept_tol {
            p.status = ParticleStatus::Converged;
            p.accepted_at = Some(iter);
        }
    });
    if ms.all_accepted() {
        return StepStatus::Converged;
    }
    let gbest: Vec<Point2> = ms.swarms.iter().map(|s| s.gbest_position).collect();
    let frame_size = ms.frame_size;
    par::for_each_mut(&mut ms.particles, |p| {
        if p.status == ParticleStatus::Searching {
            update_particle(p, gbest[p.swarm_id], params, frame_size);
            refresh_pbest(p, polygon, params);
        }
    });
    ms.refresh_all_gbest();
    if iter >= params.max_iter {
        StepStatus::Exhausted
    } else {
        StepStatus::Iterating
    }
}

fn is_diverged(p: &Particle, params: &PsoParams) -> bool {
    p.status == ParticleStatus::Searching
        && (p.far_count >= params.diverge_patience
            || (params.stall_reinit && p.stall_count >= params.diverge_patience))
}

/// Move a diverged particle onto the first endpoint of its segment.
pub fn reinit_diverged(p: &mut Particle, polygon: &Polygon, params: &PsoParams) {
    let (d1, _) = polygon.endpoints(p.swarm_id);
    p.position = d1;
    p.velocity = p.draw_velocity(params);
    p.pbest_position = d1;
    p.pbest_fitness = polygon.fitness(d1, p.swarm_id);
    p.status = ParticleStatus::Searching;
    p.reset_counters();
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub status: StepStatus,
    pub iterations: usize,
    /// Ids of particles re-seeded on a dominant point, in order of event.
    pub reinitialized: Vec<usize>,
}

/// Iterate until every particle is accepted or the budget is spent,
/// re-seeding diverged particles along the way.
pub fn run_frame(ms: &mut MultiSwarm, polygon: &Polygon, params: &PsoParams) -> FrameOutcome {
    run_frame_observed(ms, polygon, params, |_| {})
}

/// [`run_frame`], calling `observe` after every iteration and re-seeding pass.
pub fn run_frame_observed(
    ms: &mut MultiSwarm,
    polygon: &Polygon,
    params: &PsoParams,
    mut observe: impl FnMut(&MultiSwarm),
) -> FrameOutcome {
    let mut reinitialized = Vec::new();
    loop {
        let status = step_swarms(ms, polygon, params);
        observe(ms);
        if status != StepStatus::Iterating {
            return FrameOutcome {
                status,
                iterations: ms.iterations,
                reinitialized,
            };
        }
        let mut touched = false;
        for p in &mut ms.particles {
            if is_diverged(p, params) {
                p.status = ParticleStatus::Diverged;
                reinit_diverged(p, polygon, params);
                reinitialized.push(p.id);
                touched = true;
            }
        }
        if touched {
            ms.refresh_all_gbest();
            observe(ms);
        }
    }
}

/// Nearest accepted, moving particle to a lost dominant point.
pub fn reinit_dominant_point(lost: Point2, particles: &[Particle]) -> Option<Point2> {
    let mut candidates: Vec<&Particle> = particles.iter().filter(|p| p.is_accepted()).collect();
    candidates.sort_by(|a, b| a.position.dist(lost).total_cmp(&b.position.dist(lost)));
    candidates.into_iter().find(|p| p.is_moving()).map(|p| p.position)
}

/// Re-express `x`, given relative to segment `(a, b)`, relative to `(a2, b2)`:
/// same fraction along the segment, same signed offset from the line.
pub fn transfer(x: Point2, (a, b): (Point2, Point2), (a2, b2): (Point2, Point2)) -> Point2 {
    if (a, b) == (a2, b2) {
        return x;
    }
    let d = b - a;
    let len = d.norm();
    let t = (x - a).dot(d) / (len * len);
    let h = d.cross(x - a) / len;
    let d2 = b2 - a2;
    let n2 = Point2::new(-d2.y, d2.x) * (1.0 / d2.norm());
    a2 + d2 * t + n2 * h
}

/// Carry the particle cloud from `old` to the moved polygon `new`, then
/// reset per-frame state. Particles whose segment survived keep their
/// position relative to it; the rest join the nearest surviving segment.
pub fn carry_particles(ms: &mut MultiSwarm, old: &Polygon, new: &Polygon) {
    let lookup: HashMap<(usize, usize), usize> = (0..new.segments.len())
        .map(|s| (new.segment_key(s), s))
        .collect();
    let (w, h) = ms.frame_size;
    let clamp = |p: Point2| {
        Point2::new(
            p.x.clamp(0.0, w.saturating_sub(1) as f64),
            p.y.clamp(0.0, h.saturating_sub(1) as f64),
        )
    };
    par::for_each_mut(&mut ms.particles, |p| {
        match lookup.get(&old.segment_key(p.swarm_id)) {
            Some(&s) => {
                let (from, to) = (old.endpoints(p.swarm_id), new.endpoints(s));
                p.position = clamp(transfer(p.position, from, to));
                p.pbest_position = clamp(transfer(p.pbest_position, from, to));
                p.swarm_id = s;
            }
            None => p.swarm_id = new.nearest_segment(p.position),
        }
        p.pbest_fitness = new.fitness(p.pbest_position, p.swarm_id);
        p.status = ParticleStatus::Searching;
        p.accepted_at = None;
        p.reset_counters();
    });
    ms.swarms = empty_swarms(&ms.particles, new);
    ms.refresh_all_gbest();
    ms.iterations = 0;
}
