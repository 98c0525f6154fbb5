//! Axis-aligned target box from accepted particle positions.

use crate::error::{Error, Result};
use crate::geometry::{Point2, Rect};

/// Box anchored at its top-left corner `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub q: Point2,
    /// Vertical extent.
    pub length: f64,
    /// Horizontal extent.
    pub breadth: f64,
}

impl BoundingBox {
    pub fn corners(&self) -> [Point2; 4] {
        let Point2 { x, y } = self.q;
        [
            self.q,
            Point2::new(x, y + self.length),
            Point2::new(x + self.breadth, y),
            Point2::new(x + self.breadth, y + self.length),
        ]
    }

    pub fn to_rect(&self) -> Rect {
        Rect::new(self.q.x, self.q.y, self.breadth, self.length)
    }

    pub fn is_degenerate(&self) -> bool {
        self.length == 0.0 || self.breadth == 0.0
    }
}

/// How particles are ranked when picking the corner groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerOrder {
    /// Rank x and y independently: the anchor averages the `p` smallest x
    /// values and the `p` smallest y values.
    PerAxis,
    /// Rank whole particles by `x + y` (anchor), `x - y` (length corner) and
    /// `y - x` (breadth corner).
    Diagonal,
}

/// Which extent point measures which side of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisConvention {
    /// The max-x/min-y corner gives the horizontal side, the min-x/max-y
    /// corner the vertical side.
    Geometric,
    /// The max-x/min-y corner gives the vertical side.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// Max x, min y.
    Length,
    /// Min x, max y.
    Breadth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxParams {
    pub p: usize,
    pub l: usize,
    pub b: usize,
    pub order: CornerOrder,
    pub axes: AxisConvention,
}

impl Default for BoxParams {
    fn default() -> Self {
        Self {
            p: 10,
            l: 10,
            b: 10,
            order: CornerOrder::PerAxis,
            axes: AxisConvention::Geometric,
        }
    }
}

impl std::str::FromStr for CornerOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-axis" => Ok(CornerOrder::PerAxis),
            "diagonal" => Ok(CornerOrder::Diagonal),
            _ => Err(Error::Config(format!("corner order must be per-axis or diagonal, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for CornerOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CornerOrder::PerAxis => "per-axis",
            CornerOrder::Diagonal => "diagonal",
        })
    }
}

impl std::str::FromStr for AxisConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(AxisConvention::Geometric),
            "literal" => Ok(AxisConvention::Literal),
            _ => Err(Error::Config(format!("axis convention must be geometric or literal, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for AxisConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AxisConvention::Geometric => "geometric",
            AxisConvention::Literal => "literal",
        })
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean of the `count` smallest (or largest) values.
fn extreme_mean(sorted: &[f64], count: usize, largest: bool) -> f64 {
    let k = count.clamp(1, sorted.len());
    if largest {
        mean(sorted[sorted.len() - k..].iter().copied())
    } else {
        mean(sorted[..k].iter().copied())
    }
}

/// Mean position of the `count` particles with the smallest `key`.
fn mean_by_key(points: &[Point2], count: usize, key: impl Fn(&Point2) -> f64) -> Point2 {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| key(&points[a]).total_cmp(&key(&points[b])));
    let k = count.clamp(1, points.len());
    let chosen = &idx[..k];
    Point2::new(
        mean(chosen.iter().map(|&i| points[i].x)),
        mean(chosen.iter().map(|&i| points[i].y)),
    )
}

/// Mean of the `p` particles nearest the origin, ceiled componentwise.
pub fn anchor_point(accepted: &[Point2], p: usize, order: CornerOrder) -> Option<Point2> {
    if accepted.is_empty() {
        return None;
    }
    let m = match order {
        CornerOrder::PerAxis => Point2::new(
            extreme_mean(&sorted(accepted.iter().map(|q| q.x)), p, false),
            extreme_mean(&sorted(accepted.iter().map(|q| q.y)), p, false),
        ),
        CornerOrder::Diagonal => mean_by_key(accepted, p, |q| q.x + q.y),
    };
    Some(Point2::new(m.x.ceil(), m.y.ceil()))
}

pub fn extent_points(accepted: &[Point2], count: usize, mode: Extent, order: CornerOrder) -> Option<Point2> {
    if accepted.is_empty() {
        return None;
    }
    Some(match order {
        CornerOrder::PerAxis => {
            let xs = sorted(accepted.iter().map(|q| q.x));
            let ys = sorted(accepted.iter().map(|q| q.y));
            let (max_x, max_y) = match mode {
                Extent::Length => (true, false),
                Extent::Breadth => (false, true),
            };
            Point2::new(extreme_mean(&xs, count, max_x), extreme_mean(&ys, count, max_y))
        }
        CornerOrder::Diagonal => match mode {
            Extent::Length => mean_by_key(accepted, count, |q| q.y - q.x),
            Extent::Breadth => mean_by_key(accepted, count, |q| q.x - q.y),
        },
    })
}

pub fn bounding_box(accepted: &[Point2], params: &BoxParams) -> Option<BoundingBox> {
    let q = anchor_point(accepted, params.p, params.order)?;
    let len_pt = extent_points(accepted, params.l, Extent::Length, params.order)?;
    let bre_pt = extent_points(accepted, params.b, Extent::Breadth, params.order)?;
    let (to_len, to_bre) = (q.dist(len_pt), q.dist(bre_pt));
    Some(match params.axes {
        AxisConvention::Geometric => BoundingBox {
            q,
            breadth: to_len,
            length: to_bre,
        },
        AxisConvention::Literal => BoundingBox {
            q,
            length: to_len,
            breadth: to_bre,
        },
    })
}
