//! Single-scale Lucas-Kanade-Tomasi point tracking.
//!
//! Each point is tracked by solving `Z d = e` iteratively over a square
//! window, where `Z` sums gradient outer products of the previous frame and
//! `e` sums the intensity difference weighted by that gradient.

use crate::error::{Error, Result};
use crate::frame_io::{bilinear, GrayFrame};
use crate::geometry::Point2;
use crate::par;

/// Per-pixel intensity derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    fn sample(&self, p: Point2) -> Option<(f64, f64)> {
        Some((
            bilinear(&self.gx, self.width, self.height, p.x, p.y)?,
            bilinear(&self.gy, self.width, self.height, p.x, p.y)?,
        ))
    }
}

/// Central differences in the interior, one-sided differences on the border.
pub fn image_gradients(frame: &GrayFrame) -> Result<GradientField> {
    let (w, h) = (frame.width, frame.height);
    if w < 3 || h < 3 {
        return Err(Error::FrameTooSmall(w, h));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = par::map_range(h, |y| {
        let mut gx = Vec::with_capacity(w);
        let mut gy = Vec::with_capacity(w);
        for x in 0..w {
            gx.push(if x == 0 {
                frame.get(1, y) - frame.get(0, y)
            } else if x == w - 1 {
                frame.get(w - 1, y) - frame.get(w - 2, y)
            } else {
                (frame.get(x + 1, y) - frame.get(x - 1, y)) / 2.0
            });
            gy.push(if y == 0 {
                frame.get(x, 1) - frame.get(x, 0)
            } else if y == h - 1 {
                frame.get(x, h - 1) - frame.get(x, h - 2)
            } else {
                (frame.get(x, y + 1) - frame.get(x, y - 1)) / 2.0
            });
        }
        (gx, gy)
    });
    let mut field = GradientField {
        width: w,
        height: h,
        gx: Vec::with_capacity(w * h),
        gy: Vec::with_capacity(w * h),
    };
    for (gx, gy) in rows {
        field.gx.extend(gx);
        field.gy.extend(gy);
    }
    Ok(field)
}

/// Entries of the symmetric 2x2 gradient second-moment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StructureTensor {
    pub zxx: f64,
    pub zxy: f64,
    pub zyy: f64,
}

impl StructureTensor {
    pub fn min_eigenvalue(&self) -> f64 {
        let tr = self.zxx + self.zyy;
        let disc = ((self.zxx - self.zyy).powi(2) + 4.0 * self.zxy * self.zxy).sqrt();
        (tr - disc) / 2.0
    }

    pub fn determinant(&self) -> f64 {
        self.zxx * self.zyy - self.zxy * self.zxy
    }

    fn accumulate(&mut self, gx: f64, gy: f64) {
        self.zxx += gx * gx;
        self.zxy += gx * gy;
        self.zyy += gy * gy;
    }

    /// Solve `Z d = e` by the closed-form inverse; `None` when singular.
    pub fn solve(&self, e: Point2, det_eps: f64) -> Option<Point2> {
        let det = self.determinant();
        if det.abs() < det_eps {
            return None;
        }
        Some(Point2::new(
            (self.zyy * e.x - self.zxy * e.y) / det,
            (self.zxx * e.y - self.zxy * e.x) / det,
        ))
    }
}

/// Window sum of gradient outer products around `center` (unit weights).
/// Window samples that fall outside the frame are skipped.
pub fn structure_tensor(grad: &GradientField, center: Point2, window_half: usize) -> StructureTensor {
    structure_tensor_counted(grad, center, window_half).0
}

fn structure_tensor_counted(
    grad: &GradientField,
    center: Point2,
    window_half: usize,
) -> (StructureTensor, usize) {
    let r = window_half as isize;
    let mut z = StructureTensor::default();
    let mut n = 0;
    for dy in -r..=r {
        for dx in -r..=r {
            let p = Point2::new(center.x + dx as f64, center.y + dy as f64);
            if let Some((gx, gy)) = grad.sample(p) {
                z.accumulate(gx, gy);
                n += 1;
            }
        }
    }
    (z, n)
}

/// True iff the smaller eigenvalue of `z` exceeds `lambda_threshold`.
pub fn is_trackable(z: &StructureTensor, lambda_threshold: f64) -> bool {
    z.min_eigenvalue() > lambda_threshold
}

/// Minimum eigenvalue of the window tensor centred on every pixel, computed
/// with summed-area tables. Windows are clipped at the frame border.
pub fn min_eigenvalue_map(grad: &GradientField, window_half: usize) -> Vec<f64> {
    let (w, h) = (grad.width, grad.height);
    let stride = w + 1;
    let mut sxx = vec![0.0; stride * (h + 1)];
    let mut sxy = vec![0.0; stride * (h + 1)];
    let mut syy = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let (mut rxx, mut rxy, mut ryy) = (0.0, 0.0, 0.0);
        for x in 0..w {
            let (gx, gy) = grad.at(x, y);
            rxx += gx * gx;
            rxy += gx * gy;
            ryy += gy * gy;
            let i = (y + 1) * stride + x + 1;
            sxx[i] = sxx[i - stride] + rxx;
            sxy[i] = sxy[i - stride] + rxy;
            syy[i] = syy[i - stride] + ryy;
        }
    }
    let rows: Vec<Vec<f64>> = par::map_range(h, |y| {
        let y0 = y.saturating_sub(window_half);
        let y1 = (y + window_half + 1).min(h);
        (0..w)
            .map(|x| {
                let x0 = x.saturating_sub(window_half);
                let x1 = (x + window_half + 1).min(w);
                let rect = |s: &[f64]| {
                    s[y1 * stride + x1] - s[y0 * stride + x1] - s[y1 * stride + x0]
                        + s[y0 * stride + x0]
                };
                StructureTensor {
                    zxx: rect(&sxx),
                    zxy: rect(&sxy),
                    zyy: rect(&syy),
                }
                .min_eigenvalue()
            })
            .collect()
    });
    rows.concat()
}

/// How the eigenvalue threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaThreshold {
    /// Fraction of the frame's largest min-eigenvalue.
    Relative(f64),
    Absolute(f64),
}

impl LambdaThreshold {
    pub fn resolve(&self, grad: &GradientField, window_half: usize) -> f64 {
        match *self {
            LambdaThreshold::Absolute(v) => v,
            LambdaThreshold::Relative(f) => {
                let max = min_eigenvalue_map(grad, window_half)
                    .into_iter()
                    .fold(0.0, f64::max);
                f * max
            }
        }
    }
}

impl std::fmt::Display for LambdaThreshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaThreshold::Relative(v) => write!(f, "rel:{v}"),
            LambdaThreshold::Absolute(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for LambdaThreshold {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad lambda `{s}` (use a number or rel:<fraction>)"));
        match s.strip_prefix("rel:") {
            Some(v) => v.parse().map(LambdaThreshold::Relative).map_err(|_| bad()),
            None => s.parse().map(LambdaThreshold::Absolute).map_err(|_| bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KltParams {
    pub window_half: usize,
    pub max_iter: usize,
    /// Stop once the update norm drops below this (pixels).
    pub tol: f64,
    pub lambda: LambdaThreshold,
    /// Mean absolute intensity difference above which a track is lost.
    pub residual_bound: f64,
    /// Consecutive zero-motion frames before a point is flagged lost.
    pub stationary_frames: usize,
    pub det_eps: f64,
}

impl Default for KltParams {
    fn default() -> Self {
        Self {
            window_half: 7,
            max_iter: 30,
            tol: 0.03,
            lambda: LambdaThreshold::Relative(0.01),
            residual_bound: 0.1,
            stationary_frames: 3,
            det_eps: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Live,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossReason {
    /// Window texture too weak (aperture problem or flat region).
    Untrackable,
    /// More than half of the window fell outside the frame.
    Border,
    LeftFrame,
    Residual,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub position: Point2,
    pub status: PointStatus,
    pub residual: f64,
    pub iterations_used: usize,
    pub loss: Option<LossReason>,
}

impl TrackedPoint {
    fn lost(position: Point2, reason: LossReason, iterations_used: usize, residual: f64) -> Self {
        Self {
            position,
            status: PointStatus::Lost,
            residual,
            iterations_used,
            loss: Some(reason),
        }
    }

    pub fn is_live(&self) -> bool {
        self.status == PointStatus::Live
    }
}

/// A frame with its gradient and resolved eigenvalue threshold.
#[derive(Debug, Clone)]
pub struct PreparedFrame<'a> {
    pub frame: &'a GrayFrame,
    pub grad: GradientField,
    pub lambda: f64,
}

impl<'a> PreparedFrame<'a> {
    pub fn new(frame: &'a GrayFrame, params: &KltParams) -> Result<Self> {
        let grad = image_gradients(frame)?;
        let lambda = params.lambda.resolve(&grad, params.window_half);
        Ok(Self {
            frame,
            grad,
            lambda,
        })
    }
}

/// Track one point from `prev` to `curr`.
pub fn track_point(
    prev: &GrayFrame,
    curr: &GrayFrame,
    pt: Point2,
    params: &KltParams,
) -> Result<TrackedPoint> {
    let prepared = PreparedFrame::new(prev, params)?;
    Ok(track_point_prepared(&prepared, curr, pt, params))
}

pub fn track_point_prepared(
    prev: &PreparedFrame<'_>,
    curr: &GrayFrame,
    pt: Point2,
    params: &KltParams,
) -> TrackedPoint {
    let r = params.window_half as isize;
    let total = ((2 * r + 1) * (2 * r + 1)) as usize;
    let mut offsets = Vec::with_capacity(total);
    let mut template = Vec::with_capacity(total);
    let mut grads = Vec::with_capacity(total);
    let mut z = StructureTensor::default();
    for dy in -r..=r {
        for dx in -r..=r {
            let off = Point2::new(dx as f64, dy as f64);
            let p = pt + off;
            let (Some(i), Some(g)) = (prev.frame.sample(p.x, p.y), prev.grad.sample(p)) else {
                continue;
            };
            offsets.push(off);
            template.push(i);
            grads.push(g);
            z.accumulate(g.0, g.1);
        }
    }
    if offsets.len() * 2 < total {
        return TrackedPoint::lost(pt, LossReason::Border, 0, f64::NAN);
    }
    if z.determinant() < params.det_eps || !is_trackable(&z, prev.lambda) {
        return TrackedPoint::lost(pt, LossReason::Untrackable, 0, f64::NAN);
    }

    let mut d = Point2::default();
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        iterations += 1;
        let mut e = Point2::default();
        for ((off, &i), &(gx, gy)) in offsets.iter().zip(&template).zip(&grads) {
            let q = pt + *off + d;
            if let Some(j) = curr.sample(q.x, q.y) {
                let diff = i - j;
                e.x += diff * gx;
                e.y += diff * gy;
            }
        }
        let Some(step) = z.solve(e, params.det_eps) else {
            return TrackedPoint::lost(pt, LossReason::Untrackable, iterations, f64::NAN);
        };
        d = d + step;
        if step.norm() < params.tol {
            break;
        }
    }

    let position = pt + d;
    let in_frame = position.x >= 0.0
        && position.y >= 0.0
        && position.x <= (curr.width - 1) as f64
        && position.y <= (curr.height - 1) as f64;
    if !in_frame {
        return TrackedPoint::lost(pt, LossReason::LeftFrame, iterations, f64::NAN);
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (off, &i) in offsets.iter().zip(&template) {
        let q = position + *off;
        if let Some(j) = curr.sample(q.x, q.y) {
            sum += (i - j).abs();
            n += 1;
        }
    }
    let residual = if n == 0 { f64::INFINITY } else { sum / n as f64 };
    if residual > params.residual_bound {
        return TrackedPoint::lost(pt, LossReason::Residual, iterations, residual);
    }
    TrackedPoint {
        position,
        status: PointStatus::Live,
        residual,
        iterations_used: iterations,
        loss: None,
    }
}

/// Track every point independently. `stationary` holds one zero-motion
/// counter per point and is updated in place; a point that has not moved at
/// all for `params.stationary_frames` consecutive frames is flagged lost.
pub fn track_dominant_points(
    prev: &PreparedFrame<'_>,
    curr: &GrayFrame,
    pts: &[Point2],
    stationary: &mut [usize],
    params: &KltParams,
) -> Vec<TrackedPoint> {
    assert_eq!(pts.len(), stationary.len());
    let mut tracked = par::map_slice(pts, |&p| track_point_prepared(prev, curr, p, params));
    for ((t, &p), count) in tracked.iter_mut().zip(pts).zip(stationary.iter_mut()) {
        if t.position == p {
            *count += 1;
        } else {
            *count = 0;
        }
        if t.is_live() && params.stationary_frames > 0 && *count >= params.stationary_frames {
            t.status = PointStatus::Lost;
            t.loss = Some(LossReason::Stationary);
        }
    }
    tracked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> GrayFrame {
        GrayFrame::from_fn(w, h, 0, f)
    }

    /// Smooth deterministic texture, evaluated continuously so shifted
    /// copies are exact.
    fn texture(x: f64, y: f64) -> f64 {
        0.5 + 0.2 * (0.31 * x + 0.17 * y).sin()
            + 0.15 * (0.23 * x - 0.29 * y + 1.0).cos()
            + 0.1 * (0.41 * y + 0.5).sin() * (0.37 * x).cos()
    }

    #[test]
    fn gradients_of_constant_and_ramps() {
        let c = ramp(5, 5, |_, _| 0.4);
        let g = image_gradients(&c).unwrap();
        assert!(g.gx.iter().chain(&g.gy).all(|&v| v == 0.0));

        let r = ramp(6, 5, |x, _| x as f64 / 255.0);
        let g = image_gradients(&r).unwrap();
        for y in 1..4 {
            for x in 1..5 {
                assert!((g.at(x, y).0 - 1.0 / 255.0).abs() < 1e-15);
                assert_eq!(g.at(x, y).1, 0.0);
            }
        }
        // one-sided border difference of a ramp is the same slope
        assert!((g.at(0, 2).0 - 1.0 / 255.0).abs() < 1e-15);

        let r = ramp(6, 6, |x, y| (x + y) as f64 / 255.0);
        let g = image_gradients(&r).unwrap();
        let (gx, gy) = g.at(2, 3);
        assert!((gx - 1.0 / 255.0).abs() < 1e-15 && (gy - 1.0 / 255.0).abs() < 1e-15);

        assert!(image_gradients(&ramp(2, 5, |_, _| 0.0)).is_err());
    }

    #[test]
    fn tensor_examples() {
        let zero = image_gradients(&ramp(9, 9, |_, _| 0.3)).unwrap();
        assert_eq!(structure_tensor(&zero, Point2::new(4.0, 4.0), 2), StructureTensor::default());

        let g = image_gradients(&ramp(9, 9, |x, _| x as f64 / 255.0)).unwrap();
        let z = structure_tensor(&g, Point2::new(4.0, 4.0), 2);
        assert!((z.zxx - 25.0 / (255.0 * 255.0)).abs() < 1e-15);
        assert_eq!(z.zxy, 0.0);
        assert_eq!(z.zyy, 0.0);
        assert!(!is_trackable(&z, 1e-12));
    }

    #[test]
    fn checkerboard_window_has_positive_min_eigenvalue() {
        let f = ramp(9, 9, |x, y| if (x / 2 + y / 2) % 2 == 0 { 1.0 } else { 0.0 });
        let g = image_gradients(&f).unwrap();
        let z = structure_tensor(&g, Point2::new(4.0, 4.0), 2);
        // brute-force eigenvalues via the characteristic polynomial roots,
        // bracketed by bisection
        let charp = |l: f64| (z.zxx - l) * (z.zyy - l) - z.zxy * z.zxy;
        let (mut lo, mut hi) = (-1.0, (z.zxx + z.zyy) / 2.0);
        for _ in 0..200 {
            let mid = (lo + hi) / 2.0;
            if charp(lo).signum() == charp(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(z.zxx > 0.0 && z.zyy > 0.0);
        assert!(lo > 0.0);
        assert!((z.min_eigenvalue() - lo).abs() < 1e-9);
    }

    #[test]
    fn trackability_examples() {
        assert!(!is_trackable(&StructureTensor::default(), 0.001));
        let diag = StructureTensor {
            zxx: 4.0,
            zxy: 0.0,
            zyy: 9.0,
        };
        assert!(is_trackable(&diag, 3.0));
        assert!(!is_trackable(&diag, 4.0));
    }

    #[test]
    fn identical_frames_give_zero_motion() {
        let f = ramp(32, 32, |x, y| texture(x as f64, y as f64));
        let t = track_point(&f, &f, Point2::new(16.0, 16.0), &KltParams::default()).unwrap();
        assert!(t.is_live());
        assert_eq!(t.position, Point2::new(16.0, 16.0));
        assert_eq!(t.iterations_used, 1);
    }

    #[test]
    fn recovers_one_column_shift() {
        let prev = ramp(32, 32, |x, y| texture(x as f64, y as f64));
        let curr = ramp(32, 32, |x, y| texture(x as f64 - 1.0, y as f64));
        let t = track_point(&prev, &curr, Point2::new(16.0, 16.0), &KltParams::default()).unwrap();
        assert!(t.is_live());
        assert!((t.position - Point2::new(17.0, 16.0)).norm() < 0.25, "{t:?}");
    }

    #[test]
    fn uniform_region_is_lost() {
        let f = ramp(32, 32, |x, _| if x > 28 { 1.0 } else { 0.0 });
        let t = track_point(&f, &f, Point2::new(10.0, 10.0), &KltParams::default()).unwrap();
        assert_eq!(t.loss, Some(LossReason::Untrackable));
    }

    #[test]
    fn stationary_points_are_dropped() {
        let f = ramp(32, 32, |x, y| texture(x as f64, y as f64));
        let params = KltParams::default();
        let prepared = PreparedFrame::new(&f, &params).unwrap();
        let pts = [Point2::new(12.0, 12.0), Point2::new(20.0, 18.0)];
        let mut counters = [0, 0];
        for round in 1..=3 {
            let out = track_dominant_points(&prepared, &f, &pts, &mut counters, &params);
            assert_eq!(counters, [round, round]);
            assert!(out.iter().all(|t| t.position == pts[0] || t.position == pts[1]));
            assert_eq!(out.iter().all(TrackedPoint::is_live), round < 3);
        }
    }

    #[test]
    fn min_eigen_map_matches_direct_tensor() {
        let f = ramp(20, 16, |x, y| texture(x as f64 * 1.7, y as f64 * 1.3));
        let g = image_gradients(&f).unwrap();
        let map = min_eigenvalue_map(&g, 3);
        for &(x, y) in &[(0usize, 0usize), (5, 7), (19, 15), (10, 2)] {
            let z = structure_tensor(&g, Point2::new(x as f64, y as f64), 3);
            assert!((map[y * 20 + x] - z.min_eigenvalue()).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!("rel:0.01".parse::<LambdaThreshold>().unwrap(), LambdaThreshold::Relative(0.01));
        assert_eq!("0.5".parse::<LambdaThreshold>().unwrap(), LambdaThreshold::Absolute(0.5));
        assert!("x".parse::<LambdaThreshold>().is_err());
    }
}
