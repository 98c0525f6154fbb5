//! Freeman chain-code contour tracing, linear-point elimination and
//! dominant-point selection by maximal k-cosine.

use crate::error::{Error, Result};
use crate::frame_io::BinaryImage;
use crate::geometry::{Pixel, Point2};
use crate::par;

/// Freeman 8-direction offsets, counterclockwise on screen starting east.
/// Image rows grow downward, so "north" is `dy = -1`.
pub const DIRECTIONS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Breakpoint grouping regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Static background: groups of 5 breakpoints, 25 particles.
    Static,
    /// Variable background: groups of 10 breakpoints, 33 particles.
    Variable,
}

impl Mode {
    pub fn group_size(self) -> usize {
        match self {
            Mode::Static => 5,
            Mode::Variable => 10,
        }
    }

    pub fn default_population(self) -> usize {
        match self {
            Mode::Static => 25,
            Mode::Variable => 33,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Static => "static",
            Mode::Variable => "variable",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "variable" => Ok(Mode::Variable),
            other => Err(Error::Config(format!(
                "mode must be `static` or `variable`, got `{other}`"
            ))),
        }
    }
}

/// Boundary walk: `points[i] + DIRECTIONS[codes[i]] == points[i + 1]`.
///
/// For a closed contour `points.len() == codes.len()` and the last code
/// leads back to the seed. For an open contour there is one more point
/// than codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainCode {
    pub seed: Pixel,
    pub codes: Vec<u8>,
    pub points: Vec<Pixel>,
    pub closed: bool,
}

impl ChainCode {
    /// Build an open chain by walking `codes` from `seed`.
    pub fn open_from_codes(seed: Pixel, codes: Vec<u8>) -> Self {
        let mut points = vec![seed];
        let mut cur = seed;
        for &c in &codes {
            let (dx, dy) = DIRECTIONS[c as usize];
            cur = Pixel::new(
                (cur.x as isize + dx) as usize,
                (cur.y as isize + dy) as usize,
            );
            points.push(cur);
        }
        Self {
            seed,
            codes,
            points,
            closed: false,
        }
    }

    /// Code entering point `i`, if any.
    fn incoming(&self, i: usize) -> Option<u8> {
        if i > 0 {
            Some(self.codes[i - 1])
        } else if self.closed {
            self.codes.last().copied()
        } else {
            None
        }
    }

    /// Code leaving point `i`, if any.
    fn outgoing(&self, i: usize) -> Option<u8> {
        self.codes.get(i).copied()
    }
}

/// Ordered candidate dominant points.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoints {
    pub points: Vec<Point2>,
    pub closed: bool,
}

impl Breakpoints {
    pub fn new(points: Vec<Point2>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn resolve(&self, i: isize) -> usize {
        let n = self.points.len() as isize;
        if self.closed {
            i.rem_euclid(n) as usize
        } else {
            i.clamp(0, n - 1) as usize
        }
    }
}

/// A selected dominant point with its support and k-cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantPoint {
    pub position: Point2,
    pub k: usize,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominantPoints {
    pub points: Vec<DominantPoint>,
    pub closed: bool,
}

impl DominantPoints {
    pub fn positions(&self) -> Vec<Point2> {
        self.points.iter().map(|d| d.position).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Moore-neighbor boundary trace starting at `seed`.
///
/// Stops when the walk is about to leave the seed in the same direction as
/// its first move.
pub fn trace_contour(image: &BinaryImage, seed: Pixel) -> Result<ChainCode> {
    if seed.x >= image.width || seed.y >= image.height || !image.get(seed.x, seed.y) {
        return Err(Error::SeedNotForeground(seed.x, seed.y));
    }
    let mut codes = Vec::new();
    let mut points = vec![seed];
    let mut cur = seed;
    let mut dir: usize = 7;
    let mut first_code: Option<u8> = None;
    // every boundary pixel is entered at most once per direction
    let limit = 8 * image.width * image.height + 8;

    for _ in 0..limit {
        let start = if dir.is_multiple_of(2) { (dir + 7) % 8 } else { (dir + 6) % 8 };
        let next = (0..8).map(|k| (start + k) % 8).find(|&d| {
            let (dx, dy) = DIRECTIONS[d];
            image.get_signed(cur.x as isize + dx, cur.y as isize + dy)
        });
        let Some(d) = next else {
            // isolated pixel
            break;
        };
        if cur == seed && first_code == Some(d as u8) {
            // the walk re-entered the seed; keep it only once
            points.pop();
            return Ok(ChainCode {
                seed,
                codes,
                points,
                closed: true,
            });
        }
        if first_code.is_none() {
            first_code = Some(d as u8);
        }
        let (dx, dy) = DIRECTIONS[d];
        cur = Pixel::new(
            (cur.x as isize + dx) as usize,
            (cur.y as isize + dy) as usize,
        );
        codes.push(d as u8);
        points.push(cur);
        dir = d;
    }
    // Isolated pixel, or the walk budget ran out without closing.
    Ok(ChainCode {
        seed,
        codes,
        points,
        closed: false,
    })
}

/// Drop linear points (incoming code equals outgoing code).
pub fn extract_breakpoints(chain: &ChainCode) -> Breakpoints {
    let all = || chain.points.iter().map(|&p| Point2::from(p)).collect::<Vec<_>>();
    if chain.codes.len() < 2 {
        return Breakpoints::new(all(), chain.closed);
    }
    let points = chain
        .points
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            i == 0
                || match (chain.incoming(i), chain.outgoing(i)) {
                    (Some(a), Some(b)) => a != b,
                    _ => true,
                }
        })
        .map(|(_, &p)| Point2::from(p))
        .collect();
    Breakpoints::new(points, chain.closed)
}

/// Consecutive groups of the mode's size; the last group holds the remainder.
pub fn group_breakpoints(bps: &Breakpoints, mode: Mode) -> Vec<Vec<Point2>> {
    bps.points
        .chunks(mode.group_size())
        .map(<[Point2]>::to_vec)
        .collect()
}

/// Cosine of the angle at breakpoint `i` between the arms reaching `k`
/// breakpoints backward and forward. Zero-length arms count as straight (-1).
pub fn k_cosine(bps: &Breakpoints, i: usize, k: usize) -> f64 {
    let p = bps.points[i];
    let back = bps.points[bps.resolve(i as isize - k as isize)] - p;
    let fwd = bps.points[bps.resolve(i as isize + k as isize)] - p;
    let (na, nb) = (back.norm(), fwd.norm());
    if na == 0.0 || nb == 0.0 {
        return -1.0;
    }
    (back.dot(fwd) / (na * nb)).clamp(-1.0, 1.0)
}

/// Best (cosine, k) for breakpoint `i` over supports `1..=max_k`;
/// the smallest k wins ties.
pub fn best_support(bps: &Breakpoints, i: usize, max_k: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 1);
    for k in 1..=max_k.max(1) {
        let c = k_cosine(bps, i, k);
        if c > best.0 {
            best = (c, k);
        }
    }
    best
}

const TIE_EPS: f64 = 1e-12;
/// Cosines at or below this are straight runs and never selected.
const STRAIGHT: f64 = -1.0 + 1e-9;

/// Select dominant points group by group.
pub fn detect_dominant_points(bps: &Breakpoints, mode: Mode) -> DominantPoints {
    let n = bps.len();
    if n < 3 {
        return DominantPoints {
            points: bps
                .points
                .iter()
                .map(|&position| DominantPoint {
                    position,
                    k: 0,
                    cosine: -1.0,
                })
                .collect(),
            closed: bps.closed,
        };
    }
    let group = mode.group_size();
    // On a closed contour arms longer than half the loop fold back onto
    // each other, so the sweep stops there.
    let max_k = if bps.closed {
        group.min((n - 1) / 2).max(1)
    } else {
        group.min(n - 1)
    };
    let supports: Vec<(f64, usize)> = par::map_range(n, |i| best_support(bps, i, max_k));

    let mut chosen = vec![false; n];
    for start in (0..n).step_by(group) {
        let end = (start + group).min(n);
        let max = supports[start..end]
            .iter()
            .map(|s| s.0)
            .fold(f64::NEG_INFINITY, f64::max);
        if max <= STRAIGHT {
            continue;
        }
        for i in start..end {
            if supports[i].0 >= max - TIE_EPS {
                chosen[i] = true;
            }
        }
    }
    if !bps.closed {
        chosen[0] = true;
        chosen[n - 1] = true;
    }
    // A polygon needs two vertices: top up with the next sharpest points.
    let mut count = chosen.iter().filter(|&&c| c).count();
    if count < 2 {
        let mut order: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
        order.sort_by(|&a, &b| supports[b].0.total_cmp(&supports[a].0).then(a.cmp(&b)));
        for i in order {
            if count >= 2 {
                break;
            }
            chosen[i] = true;
            count += 1;
        }
    }

    let mut points: Vec<DominantPoint> = Vec::new();
    for i in (0..n).filter(|&i| chosen[i]) {
        let dp = DominantPoint {
            position: bps.points[i],
            k: supports[i].1,
            cosine: supports[i].0,
        };
        if points.last().map(|l| l.position) != Some(dp.position) {
            points.push(dp);
        }
    }
    if bps.closed && points.len() > 1 && points.first().map(|p| p.position) == points.last().map(|p| p.position) {
        points.pop();
    }
    DominantPoints {
        points,
        closed: bps.closed,
    }
}

/// Full frame-1 analysis: seed, trace, breakpoints and dominant points.
#[derive(Debug, Clone)]
pub struct ContourAnalysis {
    pub seed: Pixel,
    pub chain: ChainCode,
    pub breakpoints: Breakpoints,
    pub dominants: DominantPoints,
}

pub fn analyze(image: &BinaryImage, mode: Mode) -> Result<ContourAnalysis> {
    let seed = crate::frame_io::find_boundary_seed(image)?;
    let chain = trace_contour(image, seed)?;
    let breakpoints = extract_breakpoints(&chain);
    let dominants = detect_dominant_points(&breakpoints, mode);
    Ok(ContourAnalysis {
        seed,
        chain,
        breakpoints,
        dominants,
    })
}
