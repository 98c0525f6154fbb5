//! Synthetic scenes with exact ground truth.
//!
//! A scene file is flat `key=value` text:
//!
//! ```text
//! width=180
//! height=144
//! frames=60
//! shape=square:20          # rect:WxH, lshape:WxH:T, polygon:x,y;x,y;...
//! start=50,50              # top-left of the shape's bounds in frame 0
//! velocity=2,0             # or path=0:50,50;30:80,60 (frame:x,y waypoints)
//! texture=flat             # or noise:SEED:AMP
//! background=flat          # or drift:SEED:AMP:DX,DY
//! occlusion=10-15:45,45,12,12
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame_io::{bilinear, save_pgm, GrayFrame, GroundTruthTrack};
use crate::geometry::{Point2, Rect};

/// Target outline, with its bounds' top-left at the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Square(f64),
    Rect(f64, f64),
    /// Width, height and arm thickness; the notch is at the top right.
    LShape(f64, f64, f64),
    Polygon(Vec<Point2>),
}

impl Shape {
    pub fn outline(&self) -> Vec<Point2> {
        let p = Point2::new;
        match *self {
            Shape::Square(s) => vec![p(0.0, 0.0), p(s, 0.0), p(s, s), p(0.0, s)],
            Shape::Rect(w, h) => vec![p(0.0, 0.0), p(w, 0.0), p(w, h), p(0.0, h)],
            Shape::LShape(w, h, t) => vec![p(0.0, 0.0), p(t, 0.0), p(t, h - t), p(w, h - t), p(w, h), p(0.0, h)],
            Shape::Polygon(ref v) => {
                let x0 = v.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
                let y0 = v.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
                v.iter().map(|&q| q - p(x0, y0)).collect()
            }
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let (kind, rest) = s.split_once(':')?;
        let dims = |r: &str| -> Option<Vec<f64>> { r.split(['x', ':']).map(|v| v.trim().parse().ok()).collect() };
        let shape = match kind {
            "square" => Shape::Square(rest.trim().parse().ok()?),
            "rect" => match dims(rest)?[..] {
                [w, h] => Shape::Rect(w, h),
                _ => return None,
            },
            "lshape" => match dims(rest)?[..] {
                [w, h, t] if t < w && t < h => Shape::LShape(w, h, t),
                _ => return None,
            },
            "polygon" => Shape::Polygon(
                rest.split(';')
                    .map(parse_point)
                    .collect::<Option<Vec<_>>>()
                    .filter(|v| v.len() >= 3)?,
            ),
            _ => return None,
        };
        Some(shape)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Square(s) => write!(f, "square:{s}"),
            Shape::Rect(w, h) => write!(f, "rect:{w}x{h}"),
            Shape::LShape(w, h, t) => write!(f, "lshape:{w}x{h}:{t}"),
            Shape::Polygon(v) => {
                let pts: Vec<String> = v.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
                write!(f, "polygon:{}", pts.join(";"))
            }
        }
    }
}

fn parse_point(s: &str) -> Option<Point2> {
    let (x, y) = s.split_once(',')?;
    Some(Point2::new(x.trim().parse().ok()?, y.trim().parse().ok()?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    /// Constant displacement per frame.
    Velocity(Point2),
    /// `(frame, position)` waypoints, linearly interpolated and held constant
    /// outside their range.
    Path(Vec<(usize, Point2)>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Flat,
    /// Smooth value noise fixed to the target, darkening it by up to `amp`.
    Noise { seed: u64, amp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    Flat,
    /// Value noise of height up to `amp` that shifts by `drift` each frame.
    Drift { seed: u64, amp: f64, drift: Point2 },
}

/// Frames `from..=to` get `rect` painted with background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    pub from: usize,
    pub to: usize,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub shape: Shape,
    pub start: Point2,
    pub motion: Motion,
    pub texture: Texture,
    pub background: Background,
    pub occlusions: Vec<Occlusion>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 180,
            height: 144,
            frames: 60,
            shape: Shape::Square(20.0),
            start: Point2::new(20.0, 50.0),
            motion: Motion::Velocity(Point2::new(2.0, 0.0)),
            texture: Texture::Flat,
            background: Background::Flat,
            occlusions: Vec::new(),
        }
    }
}

/// Side length of the value-noise lattice cells, in pixels.
const NOISE_CELL: f64 = 4.0;

impl SceneSpec {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut spec = SceneSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || err(format!("invalid value for `{key}`: `{value}`"));
            match key {
                "width" => spec.width = value.parse().map_err(|_| bad())?,
                "height" => spec.height = value.parse().map_err(|_| bad())?,
                "frames" => spec.frames = value.parse().map_err(|_| bad())?,
                "shape" => spec.shape = Shape::parse(value).ok_or_else(bad)?,
                "start" => spec.start = parse_point(value).ok_or_else(bad)?,
                "velocity" => spec.motion = Motion::Velocity(parse_point(value).ok_or_else(bad)?),
                "path" => {
                    let pts = value
                        .split(';')
                        .map(|wp| {
                            let (f, p) = wp.split_once(':')?;
                            Some((f.trim().parse().ok()?, parse_point(p)?))
                        })
                        .collect::<Option<Vec<(usize, Point2)>>>()
                        .filter(|v| !v.is_empty() && v.windows(2).all(|w| w[0].0 < w[1].0))
                        .ok_or_else(bad)?;
                    spec.motion = Motion::Path(pts);
                }
                "texture" => {
                    spec.texture = if value == "flat" {
                        Texture::Flat
                    } else {
                        let parts: Vec<&str> = value.split(':').collect();
                        match parts[..] {
                            ["noise", seed, amp] => Texture::Noise {
                                seed: seed.parse().map_err(|_| bad())?,
                                amp: amp.parse().map_err(|_| bad())?,
                            },
                            _ => return Err(bad()),
                        }
                    }
                }
                "background" => {
                    spec.background = if value == "flat" {
                        Background::Flat
                    } else {
                        let parts: Vec<&str> = value.split(':').collect();
                        match parts[..] {
                            ["drift", seed, amp, d] => Background::Drift {
                                seed: seed.parse().map_err(|_| bad())?,
                                amp: amp.parse().map_err(|_| bad())?,
                                drift: parse_point(d).ok_or_else(bad)?,
                            },
                            _ => return Err(bad()),
                        }
                    }
                }
                "occlusion" => {
                    let (range, rect) = value.split_once(':').ok_or_else(bad)?;
                    let (from, to) = range.split_once('-').ok_or_else(bad)?;
                    let v: Vec<f64> = rect
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?;
                    let [x, y, w, h] = v[..] else {
                        return Err(bad());
                    };
                    spec.occlusions.push(Occlusion {
                        from: from.trim().parse().map_err(|_| bad())?,
                        to: to.trim().parse().map_err(|_| bad())?,
                        rect: Rect::new(x, y, w, h),
                    });
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "width={}\nheight={}\nframes={}\nshape={}\nstart={},{}\n",
            self.width, self.height, self.frames, self.shape, self.start.x, self.start.y
        );
        match &self.motion {
            Motion::Velocity(v) => s += &format!("velocity={},{}\n", v.x, v.y),
            Motion::Path(p) => {
                let wps: Vec<String> = p.iter().map(|(f, q)| format!("{f}:{},{}", q.x, q.y)).collect();
                s += &format!("path={}\n", wps.join(";"));
            }
        }
        match self.texture {
            Texture::Flat => s += "texture=flat\n",
            Texture::Noise { seed, amp } => s += &format!("texture=noise:{seed}:{amp}\n"),
        }
        match self.background {
            Background::Flat => s += "background=flat\n",
            Background::Drift { seed, amp, drift } => {
                s += &format!("background=drift:{seed}:{amp}:{},{}\n", drift.x, drift.y)
            }
        }
        for o in &self.occlusions {
            s += &format!(
                "occlusion={}-{}:{},{},{},{}\n",
                o.from, o.to, o.rect.x, o.rect.y, o.rect.w, o.rect.h
            );
        }
        s
    }

    /// Top-left of the shape's bounds at frame `t`.
    pub fn position(&self, t: usize) -> Point2 {
        match &self.motion {
            Motion::Velocity(v) => self.start + *v * t as f64,
            Motion::Path(wps) => {
                let offset = |q: Point2| q - wps[0].1 + self.start;
                if t <= wps[0].0 {
                    return offset(wps[0].1);
                }
                for w in wps.windows(2) {
                    let ((f0, p0), (f1, p1)) = (w[0], w[1]);
                    if t <= f1 {
                        let a = (t - f0) as f64 / (f1 - f0) as f64;
                        return offset(p0 + (p1 - p0) * a);
                    }
                }
                offset(wps[wps.len() - 1].1)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width < 3 || self.height < 3 || self.frames == 0 {
            return bad("frame size must be at least 3x3 and frames positive".into());
        }
        for (name, amp) in [
            ("texture", matches!(self.texture, Texture::Noise { .. }).then_some(texture_amp(&self.texture))),
            ("background", background_amp(&self.background)),
        ] {
            if let Some(a) = amp {
                if !(0.0..=0.4).contains(&a) {
                    return bad(format!("{name} amplitude must be in [0, 0.4], got {a}"));
                }
            }
        }
        for t in 0..self.frames {
            let Some(r) = self.truth_at(t) else {
                return bad(format!("shape covers no pixel at frame {t}"));
            };
            let inside = self.outline_at(t).iter().all(|p| {
                p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
            });
            if !inside || r.right() > self.width as f64 || r.bottom() > self.height as f64 {
                return bad(format!("shape leaves the {}x{} frame at frame {t}", self.width, self.height));
            }
        }
        Ok(())
    }

    fn outline_at(&self, t: usize) -> Vec<Point2> {
        let o = self.position(t);
        self.shape.outline().into_iter().map(|p| p + o).collect()
    }

    /// Tight pixel bounds of the rasterized shape at frame `t`.
    pub fn truth_at(&self, t: usize) -> Option<Rect> {
        let outline = self.outline_at(t);
        let b = Rect::bounding(outline.iter().copied())?;
        let x0 = b.x.floor().max(0.0) as usize;
        let y0 = b.y.floor().max(0.0) as usize;
        let x1 = (b.right().ceil() as usize).min(self.width);
        let y1 = (b.bottom().ceil() as usize).min(self.height);
        let mut px = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                if covers(&outline, x, y) {
                    px.push(Point2::new(x as f64, y as f64));
                }
            }
        }
        Rect::bounding(px).map(|r| Rect::new(r.x, r.y, r.w + 1.0, r.h + 1.0))
    }
}

fn texture_amp(t: &Texture) -> f64 {
    match *t {
        Texture::Flat => 0.0,
        Texture::Noise { amp, .. } => amp,
    }
}

fn background_amp(b: &Background) -> Option<f64> {
    match *b {
        Background::Flat => None,
        Background::Drift { amp, .. } => Some(amp),
    }
}

/// Pixel `(x, y)` is foreground when its center lies inside the outline.
fn covers(outline: &[Point2], x: usize, y: usize) -> bool {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut inside = false;
    let n = outline.len();
    for i in 0..n {
        let (a, b) = (outline[i], outline[(i + 1) % n]);
        if (a.y > py) != (b.y > py) {
            let xc = a.x + (py - a.y) / (b.y - a.y) * (b.x - a.x);
            if px < xc {
                inside = !inside;
            }
        }
    }
    inside
}

/// Bilinear value noise in `[0, 1]` over a lattice of random samples.
struct ValueNoise {
    lattice: Vec<f64>,
    cols: usize,
    rows: usize,
}

impl ValueNoise {
    fn new(seed: u64, width: f64, height: f64) -> Self {
        let cols = (width / NOISE_CELL).ceil() as usize + 2;
        let rows = (height / NOISE_CELL).ceil() as usize + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        Self { lattice, cols, rows }
    }

    /// Sample with wrap-around so any coordinate is valid. Squared so the
    /// mean sits near a third of the peak.
    fn at(&self, x: f64, y: f64) -> f64 {
        let (wx, wy) = ((self.cols - 1) as f64, (self.rows - 1) as f64);
        let u = (x / NOISE_CELL).rem_euclid(wx);
        let v = (y / NOISE_CELL).rem_euclid(wy);
        bilinear(&self.lattice, self.cols, self.rows, u, v).unwrap_or(0.0).powi(2)
    }
}

/// Render every frame and its ground truth.
pub fn generate(spec: &SceneSpec) -> Result<(Vec<GrayFrame>, GroundTruthTrack)> {
    spec.validate()?;
    let extent = Rect::bounding(spec.shape.outline()).expect("outline is non-empty");
    let fg = match spec.texture {
        Texture::Flat => None,
        Texture::Noise { seed, amp } => Some((ValueNoise::new(seed, extent.w + 1.0, extent.h + 1.0), amp)),
    };
    let bg = match spec.background {
        Background::Flat => None,
        Background::Drift { seed, amp, drift } => {
            Some((ValueNoise::new(seed, spec.width as f64, spec.height as f64), amp, drift))
        }
    };
    let background = |x: usize, y: usize, t: usize| match &bg {
        None => 0.0,
        Some((noise, amp, drift)) => amp * noise.at(x as f64 - drift.x * t as f64, y as f64 - drift.y * t as f64),
    };
    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let outline = spec.outline_at(t);
        let origin = spec.position(t);
        let occluders: Vec<Rect> = spec
            .occlusions
            .iter()
            .filter(|o| (o.from..=o.to).contains(&t))
            .map(|o| o.rect)
            .collect();
        let frame = GrayFrame::from_fn(spec.width, spec.height, t, |x, y| {
            let centre = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            let hidden = occluders.iter().any(|r| {
                centre.x >= r.x && centre.x < r.right() && centre.y >= r.y && centre.y < r.bottom()
            });
            if hidden || !covers(&outline, x, y) {
                return background(x, y, t);
            }
            match &fg {
                None => 1.0,
                Some((noise, amp)) => 1.0 - amp * noise.at(x as f64 - origin.x, y as f64 - origin.y),
            }
        });
        frames.push(frame);
        truth.push(spec.truth_at(t));
    }
    Ok((frames, GroundTruthTrack { rects: truth }))
}

/// Write `frame_NNNN.pgm` files, `groundtruth.txt` and `scene.txt`.
pub fn write_scene(spec: &SceneSpec, out_dir: &Path) -> Result<(Vec<GrayFrame>, GroundTruthTrack)> {
    let (frames, truth) = generate(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for f in &frames {
        save_pgm(f, &out_dir.join(format!("frame_{:04}.pgm", f.index)))?;
    }
    for (name, body) in [("groundtruth.txt", truth.to_text()), ("scene.txt", spec.to_text())] {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok((frames, truth))
}
