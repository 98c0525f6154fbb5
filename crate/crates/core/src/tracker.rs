//! Frame-by-frame pipeline joining optical-flow point tracking with the
//! boundary swarms.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::{bounding_box, BoundingBox};
use crate::contour::{analyze, ContourAnalysis};
pub use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::frame_io::{binarize, GrayFrame};
use crate::geometry::{Point2, Rect};
use crate::klt::{track_dominant_points, LossReason, PreparedFrame};
use crate::pso::{carry_particles, init_particles, reinit_dominant_point, run_frame, MultiSwarm, Polygon, StepStatus};

/// Scripted disturbances used to exercise the recovery paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// Declare dominant point `index` lost at `frame`.
    InvalidateDominant { frame: usize, index: usize },
    /// Move `fraction` of the particles `distance` pixels in random
    /// directions at the start of `frame`'s search.
    TeleportParticles { frame: usize, fraction: f64, distance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    /// First frame: dominant points only.
    Init,
    Ok,
    /// The search budget ran out before every particle was accepted.
    Degraded,
    /// Nothing left to track; the result ends here.
    Lost,
}

impl FrameStatus {
    pub fn name(self) -> &'static str {
        match self {
            FrameStatus::Init => "init",
            FrameStatus::Ok => "ok",
            FrameStatus::Degraded => "degraded",
            FrameStatus::Lost => "lost",
        }
    }
}

impl std::str::FromStr for FrameStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(FrameStatus::Init),
            "ok" => Ok(FrameStatus::Ok),
            "degraded" => Ok(FrameStatus::Degraded),
            "lost" => Ok(FrameStatus::Lost),
            _ => Err(Error::Config(format!("unknown frame status `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointState {
    Live,
    /// Replaced by a particle position this frame.
    Reinitialized,
    /// Lost with no replacement; held at its last position.
    Frozen,
    /// Dropped from the polygon.
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub bbox: Option<BoundingBox>,
    pub status: FrameStatus,
    pub dominants: Vec<Point2>,
    pub point_states: Vec<PointState>,
    pub particles: Vec<Point2>,
    pub accepted: usize,
    pub swarms: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    DominantLost { index: usize, reason: Option<LossReason> },
    DominantReplaced { index: usize, from: Point2, to: Point2 },
    DominantFrozen { index: usize },
    VertexDropped { index: usize },
    ParticleReinit { particle: usize, swarm: usize },
    ParticleTeleported { particle: usize },
    SearchExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub frame: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub analysis: ContourAnalysis,
    pub frames: Vec<FrameRecord>,
    pub events: Vec<Event>,
    /// Frame at which the target was lost, if it was.
    pub lost_at: Option<usize>,
    /// Per frame, iteration at which each particle was accepted.
    pub acceptance: Vec<Vec<Option<usize>>>,
}

impl TrackResult {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.frames
            .iter()
            .map(|f| ResultRow {
                frame: f.frame,
                bbox: f.bbox,
                status: f.status,
            })
            .collect()
    }
}

pub fn run(frames: &[GrayFrame], config: &TrackerConfig) -> Result<TrackResult> {
    run_with(frames, config, &[])
}

fn teleport(ms: &mut MultiSwarm, frame: usize, fraction: f64, distance: f64, seed: u64) -> Vec<usize> {
    let n = ms.particles.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut ids = sample(&mut rng, n, k).into_vec();
    ids.sort_unstable();
    let (w, h) = ms.frame_size;
    for &i in &ids {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let p = ms.particles[i].position + Point2::new(a.cos(), a.sin()) * distance;
        let to = Point2::new(p.x.clamp(0.0, (w - 1) as f64), p.y.clamp(0.0, (h - 1) as f64));
        ms.particles[i].displace(to);
    }
    ids
}

/// Run the tracker with scripted perturbations.
pub fn run_with(frames: &[GrayFrame], config: &TrackerConfig, perturbations: &[Perturbation]) -> Result<TrackResult> {
    if frames.len() < 3 {
        return Err(Error::TooFewFrames(frames.len()));
    }
    config.validate()?;
    let pso = config.pso_params();
    let (w, h) = (frames[0].width, frames[0].height);

    let analysis = analyze(&binarize(&frames[0], config.binarize_threshold), config.mode)?;
    let closed = analysis.dominants.closed;
    let mut pos = analysis.dominants.positions();
    let n = pos.len();
    let mut states = vec![PointState::Live; n];
    let mut stationary = vec![0usize; n];

    let mut records = vec![FrameRecord {
        frame: 0,
        bbox: None,
        status: FrameStatus::Init,
        dominants: pos.clone(),
        point_states: states.clone(),
        particles: Vec::new(),
        accepted: 0,
        swarms: 0,
        iterations: 0,
    }];
    let mut events = Vec::new();
    let mut acceptance = vec![Vec::new()];
    let mut lost_at = None;

    let mut prev = PreparedFrame::new(&frames[0], &config.klt)?;
    let mut swarm: Option<(MultiSwarm, Polygon)> = None;

    for (t, curr) in frames.iter().enumerate().skip(1) {
        // 1. optical flow on every point still in the polygon
        let active: Vec<usize> = (0..n).filter(|&i| states[i] != PointState::Removed).collect();
        let pts: Vec<Point2> = active.iter().map(|&i| pos[i]).collect();
        let mut counters: Vec<usize> = active.iter().map(|&i| stationary[i]).collect();
        let tracked = track_dominant_points(&prev, curr, &pts, &mut counters, &config.klt);
        let mut lost: Vec<usize> = Vec::new();
        // points whose track genuinely failed, as opposed to standing still
        let mut failed: Vec<usize> = Vec::new();
        for ((&i, tp), c) in active.iter().zip(&tracked).zip(counters) {
            stationary[i] = c;
            if tp.is_live() {
                pos[i] = tp.position;
                states[i] = PointState::Live;
            } else {
                lost.push(i);
                if tp.loss != Some(LossReason::Stationary) {
                    failed.push(i);
                }
                events.push(Event {
                    frame: t,
                    kind: EventKind::DominantLost { index: i, reason: tp.loss },
                });
            }
        }
        for p in perturbations {
            if let Perturbation::InvalidateDominant { frame, index } = *p {
                if frame == t && index < n && states[index] != PointState::Removed && !lost.contains(&index) {
                    lost.push(index);
                    events.push(Event {
                        frame: t,
                        kind: EventKind::DominantLost { index, reason: None },
                    });
                }
            }
        }
        lost.sort_unstable();

        // 2. a segment whose both ends failed together loses its far end
        let min_vertices = if closed { 3 } else { 2 };
        if let Some((_, poly)) = &swarm {
            for &(a, b) in &poly.segments {
                let (ia, ib) = (poly.vertex_ids[a], poly.vertex_ids[b]);
                let remaining = states.iter().filter(|&&s| s != PointState::Removed).count();
                if failed.contains(&ia) && failed.contains(&ib) && states[ia] != PointState::Removed && remaining > min_vertices {
                    states[ib] = PointState::Removed;
                    lost.retain(|&i| i != ib);
                    failed.retain(|&i| i != ib);
                    events.push(Event {
                        frame: t,
                        kind: EventKind::VertexDropped { index: ib },
                    });
                }
            }
        }

        // 3. replace lost points from the moving, accepted particles
        for &i in &lost {
            let replacement = swarm
                .as_ref()
                .and_then(|(ms, _)| reinit_dominant_point(pos[i], &ms.particles));
            match replacement {
                Some(to) => {
                    events.push(Event {
                        frame: t,
                        kind: EventKind::DominantReplaced { index: i, from: pos[i], to },
                    });
                    pos[i] = to;
                    stationary[i] = 0;
                    states[i] = PointState::Reinitialized;
                }
                None => {
                    states[i] = PointState::Frozen;
                    events.push(Event {
                        frame: t,
                        kind: EventKind::DominantFrozen { index: i },
                    });
                }
            }
        }

        // 4. polygon and swarms
        let labelled: Vec<(usize, Point2)> = (0..n)
            .filter(|&i| states[i] != PointState::Removed)
            .map(|i| (i, pos[i]))
            .collect();
        let polygon = Polygon::from_labelled(&labelled, closed)?;
        let mut ms = match swarm.take() {
            None => {
                let bounds = Rect::bounding(labelled.iter().map(|&(_, p)| p))
                    .expect("polygon has vertices")
                    .expand(config.init_margin)
                    .clip_to_frame(w, h);
                MultiSwarm::new(init_particles(bounds, &pso, config.rng_seed), &polygon, (w, h))
            }
            Some((mut ms, old)) => {
                carry_particles(&mut ms, &old, &polygon);
                ms
            }
        };
        for p in perturbations {
            if let Perturbation::TeleportParticles { frame, fraction, distance } = *p {
                if frame == t {
                    for particle in teleport(&mut ms, t, fraction, distance, config.rng_seed) {
                        events.push(Event {
                            frame: t,
                            kind: EventKind::ParticleTeleported { particle },
                        });
                    }
                }
            }
        }

        // 5. search and box
        let outcome = run_frame(&mut ms, &polygon, &pso);
        for &id in &outcome.reinitialized {
            events.push(Event {
                frame: t,
                kind: EventKind::ParticleReinit {
                    particle: id,
                    swarm: ms.particles[id].swarm_id,
                },
            });
        }
        let accepted = ms.accepted_positions();
        let all_frozen = states
            .iter()
            .all(|&s| matches!(s, PointState::Frozen | PointState::Removed));
        let status = if accepted.is_empty() && all_frozen {
            FrameStatus::Lost
        } else if outcome.status == StepStatus::Exhausted {
            events.push(Event {
                frame: t,
                kind: EventKind::SearchExhausted,
            });
            FrameStatus::Degraded
        } else {
            FrameStatus::Ok
        };
        records.push(FrameRecord {
            frame: t,
            bbox: if status == FrameStatus::Lost { None } else { bounding_box(&accepted, &config.bbox) },
            status,
            dominants: pos.clone(),
            point_states: states.clone(),
            particles: ms.particles.iter().map(|p| p.position).collect(),
            accepted: accepted.len(),
            swarms: ms.swarms.len(),
            iterations: outcome.iterations,
        });
        acceptance.push(ms.particles.iter().map(|p| p.accepted_at).collect());
        if status == FrameStatus::Lost {
            lost_at = Some(t);
            break;
        }
        for p in &mut ms.particles {
            p.record_frame_end();
        }
        swarm = Some((ms, polygon));
        prev = PreparedFrame::new(curr, &config.klt)?;
    }

    Ok(TrackResult {
        analysis,
        frames: records,
        events,
        lost_at,
        acceptance,
    })
}

/// One line of `result.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub frame: usize,
    pub bbox: Option<BoundingBox>,
    pub status: FrameStatus,
}

pub const RESULT_HEADER: &str = "frame,qx,qy,breadth,length,status";

pub fn result_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULT_HEADER);
    s.push('\n');
    for r in rows {
        match r.bbox {
            Some(b) => {
                let _ = writeln!(
                    s,
                    "{},{:.4},{:.4},{:.4},{:.4},{}",
                    r.frame,
                    b.q.x,
                    b.q.y,
                    b.breadth,
                    b.length,
                    r.status.name()
                );
            }
            None => {
                let _ = writeln!(s, "{},,,,,{}", r.frame, r.status.name());
            }
        }
    }
    s
}

pub fn parse_result_csv(text: &str, origin: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    match lines.next() {
        Some((_, h)) if h.trim() == RESULT_HEADER => {}
        _ => return Err(err(1, format!("expected header `{RESULT_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let frame = f[0].parse().map_err(|_| err(i + 1, format!("bad frame `{}`", f[0])))?;
        let status = f[5].parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
        let bbox = if f[1..5].iter().all(|v| v.is_empty()) {
            None
        } else {
            let mut v = [0.0; 4];
            for (slot, s) in v.iter_mut().zip(&f[1..5]) {
                *slot = s.parse().map_err(|_| err(i + 1, format!("bad number `{s}`")))?;
            }
            Some(BoundingBox {
                q: Point2::new(v[0], v[1]),
                breadth: v[2],
                length: v[3],
            })
        };
        rows.push(ResultRow { frame, bbox, status });
    }
    Ok(rows)
}

/// Boxes aligned with `truth`, starting at the first frame that could carry
/// a box. Frames with no row, or cut off by a lost track, have no box.
pub fn scored_boxes(rows: &[ResultRow], truth_len: usize) -> (usize, Vec<Option<Rect>>) {
    let start = rows
        .iter()
        .find(|r| r.status != FrameStatus::Init)
        .map_or(0, |r| r.frame)
        .min(truth_len);
    let mut boxes = vec![None; truth_len - start];
    for r in rows {
        if r.frame >= start && r.frame < truth_len {
            boxes[r.frame - start] = r.bbox.map(|b| b.to_rect());
        }
    }
    (start, boxes)
}

/// Per-frame point dump used for overlays: `frame,kind,x,y` with kind
/// `dominant` or `particle`.
pub fn points_csv(result: &TrackResult) -> String {
    let mut s = String::from("frame,kind,x,y\n");
    for f in &result.frames {
        for (p, st) in f.dominants.iter().zip(&f.point_states) {
            if *st != PointState::Removed {
                let _ = writeln!(s, "{},dominant,{:.4},{:.4}", f.frame, p.x, p.y);
            }
        }
        for p in &f.particles {
            let _ = writeln!(s, "{},particle,{:.4},{:.4}", f.frame, p.x, p.y);
        }
    }
    s
}

/// Sidecar path holding the point dump for a result file.
pub fn points_path(result_path: &Path) -> std::path::PathBuf {
    let stem = result_path.file_stem().map_or_else(|| "result".into(), |s| s.to_string_lossy().into_owned());
    result_path.with_file_name(format!("{stem}.points.csv"))
}

pub fn write_result(result: &TrackResult, path: &Path) -> Result<()> {
    std::fs::write(path, result_csv(&result.rows())).map_err(|e| Error::io(path, e))?;
    let side = points_path(path);
    std::fs::write(&side, points_csv(result)).map_err(|e| Error::io(&side, e))
}
