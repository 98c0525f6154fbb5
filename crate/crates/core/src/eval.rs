//! Scoring a track against ground truth.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// Intersection over union of two rectangles with positive area.
pub fn overlap_score(a: &Rect, b: &Rect) -> Result<f64> {
    if !(a.area() > 0.0 && b.area() > 0.0) {
        return Err(Error::ZeroArea);
    }
    if a == b {
        return Ok(1.0);
    }
    let inter = a.intersection_area(b);
    // edge arithmetic can overshoot by an ulp
    Ok((inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0))
}

/// IoU, counting a degenerate box as no overlap.
fn iou_or_zero(a: &Rect, b: &Rect) -> f64 {
    overlap_score(a, b).unwrap_or(0.0)
}

/// Rule deciding whether a frame with both a box and a truth counts as a hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuccessRule {
    /// Overlap at or above the threshold.
    Iou(f64),
    /// Center distance at most the box-to-truth area ratio.
    CenterRatio,
}

impl SuccessRule {
    pub fn hit(&self, tracked: &Rect, truth: &Rect) -> bool {
        match *self {
            SuccessRule::Iou(t) => iou_or_zero(tracked, truth) >= t,
            SuccessRule::CenterRatio => {
                truth.area() > 0.0 && tracked.center().dist(truth.center()) <= tracked.area() / truth.area()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionCounts {
    pub true_detections: usize,
    pub false_detections: usize,
    pub missed: usize,
    /// Frames with truth present.
    pub truth_frames: usize,
}

impl DetectionCounts {
    fn pct(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64 * 100.0
        }
    }

    pub fn td(&self) -> f64 {
        Self::pct(self.true_detections, self.truth_frames)
    }

    pub fn fd(&self) -> f64 {
        Self::pct(self.false_detections, self.true_detections + self.false_detections)
    }

    pub fn md(&self) -> f64 {
        Self::pct(self.missed, self.true_detections + self.missed)
    }
}

fn check_lengths(boxes: &[Option<Rect>], truth: &[Option<Rect>]) -> Result<()> {
    if boxes.len() != truth.len() {
        return Err(Error::LengthMismatch(boxes.len(), truth.len()));
    }
    Ok(())
}

pub fn detection_counts(boxes: &[Option<Rect>], truth: &[Option<Rect>], rule: SuccessRule) -> Result<DetectionCounts> {
    check_lengths(boxes, truth)?;
    let mut c = DetectionCounts::default();
    for (b, t) in boxes.iter().zip(truth) {
        if t.is_some() {
            c.truth_frames += 1;
        }
        match (b, t) {
            (Some(b), Some(t)) if rule.hit(b, t) => c.true_detections += 1,
            (Some(_), _) => c.false_detections += 1,
            (None, Some(_)) => c.missed += 1,
            (None, None) => {}
        }
    }
    Ok(c)
}

/// `(TD, FD, MD)` percentages.
pub fn td_fd_md(boxes: &[Option<Rect>], truth: &[Option<Rect>], rule: SuccessRule) -> Result<(f64, f64, f64)> {
    let c = detection_counts(boxes, truth, rule)?;
    Ok((c.td(), c.fd(), c.md()))
}

/// Center error per truth-present frame; `None` where no box was emitted.
fn center_errors(boxes: &[Option<Rect>], truth: &[Option<Rect>]) -> Vec<Option<f64>> {
    boxes
        .iter()
        .zip(truth)
        .filter_map(|(b, t)| t.map(|t| b.map(|b| b.center().dist(t.center()))))
        .collect()
}

/// IoU per truth-present frame, zero where no box was emitted.
fn ious(boxes: &[Option<Rect>], truth: &[Option<Rect>]) -> Vec<f64> {
    boxes
        .iter()
        .zip(truth)
        .filter_map(|(b, t)| t.map(|t| b.map_or(0.0, |b| iou_or_zero(&b, &t))))
        .collect()
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Fraction of truth-present frames with center error at most each threshold.
pub fn precision_curve(boxes: &[Option<Rect>], truth: &[Option<Rect>], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_lengths(boxes, truth)?;
    let errs = center_errors(boxes, truth);
    Ok(thresholds
        .iter()
        .map(|&t| (t, fraction(errs.iter().filter(|e| e.is_some_and(|e| e <= t)).count(), errs.len())))
        .collect())
}

/// Fraction of truth-present frames with IoU strictly above each threshold,
/// plus the mean IoU.
pub fn success_curve(
    boxes: &[Option<Rect>],
    truth: &[Option<Rect>],
    thresholds: &[f64],
) -> Result<(Vec<(f64, f64)>, f64)> {
    check_lengths(boxes, truth)?;
    let v = ious(boxes, truth);
    let curve = thresholds
        .iter()
        .map(|&t| (t, fraction(v.iter().filter(|&&x| x > t).count(), v.len())))
        .collect();
    let aos = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok((curve, aos))
}

/// Longest contiguous window in which at least fraction `f` of frames
/// succeed, relative to the sequence length. Frames without truth end a
/// window.
pub fn lsm(boxes: &[Option<Rect>], truth: &[Option<Rect>], iou_threshold: f64, f: f64) -> Result<f64> {
    check_lengths(boxes, truth)?;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Config(format!("LSM fraction must be in (0, 1], got {f}")));
    }
    let flags: Vec<Option<bool>> = boxes
        .iter()
        .zip(truth)
        .map(|(b, t)| t.map(|t| b.is_some_and(|b| iou_or_zero(&b, &t) >= iou_threshold)))
        .collect();
    Ok(fraction(longest_window(&flags, f), flags.len()))
}

/// Length of the longest window of `Some` flags whose success fraction is at
/// least `f`.
pub fn longest_window(flags: &[Option<bool>], f: f64) -> usize {
    let mut best = 0;
    let mut start = 0;
    while start < flags.len() {
        if flags[start].is_none() {
            start += 1;
            continue;
        }
        let end = flags[start..].iter().position(Option::is_none).map_or(flags.len(), |k| start + k);
        let run = &flags[start..end];
        let mut prefix = vec![0usize; run.len() + 1];
        for (i, s) in run.iter().enumerate() {
            prefix[i + 1] = prefix[i] + usize::from(*s == Some(true));
        }
        for i in 0..run.len() {
            for j in (i + best + 1..=run.len()).rev() {
                let hits = prefix[j] - prefix[i];
                if hits as f64 >= f * (j - i) as f64 - 1e-12 {
                    best = j - i;
                    break;
                }
            }
        }
        start = end;
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub rule: SuccessRule,
    /// Success cut used by LSM.
    pub iou_threshold: f64,
    pub lsm_fraction: f64,
    pub precision_thresholds: Vec<f64>,
    pub success_thresholds: Vec<f64>,
    /// Threshold reported as the headline precision.
    pub precision_at: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            rule: SuccessRule::Iou(0.5),
            iou_threshold: 0.5,
            lsm_fraction: 0.95,
            precision_thresholds: (0..=50).map(f64::from).collect(),
            success_thresholds: (0..=20).map(|i| f64::from(i) / 20.0).collect(),
            precision_at: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub frames: usize,
    pub counts: DetectionCounts,
    pub td: f64,
    pub fd: f64,
    pub md: f64,
    pub precision_curve: Vec<(f64, f64)>,
    pub success_curve: Vec<(f64, f64)>,
    pub aos: f64,
    pub lsm: f64,
    pub precision_at: (f64, f64),
    /// Per truth-present frame.
    pub ious: Vec<f64>,
    pub center_errors: Vec<Option<f64>>,
}

impl MetricReport {
    pub fn mean_center_error(&self) -> Option<f64> {
        let v: Vec<f64> = self.center_errors.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let c = &self.counts;
        let _ = writeln!(s, "frames {}", self.frames);
        let _ = writeln!(s, "truth_frames {}", c.truth_frames);
        let _ = writeln!(s, "true_detections {}", c.true_detections);
        let _ = writeln!(s, "false_detections {}", c.false_detections);
        let _ = writeln!(s, "missed_detections {}", c.missed);
        let _ = writeln!(s, "TD {:.4}", self.td);
        let _ = writeln!(s, "FD {:.4}", self.fd);
        let _ = writeln!(s, "MD {:.4}", self.md);
        let _ = writeln!(s, "AOS {:.6}", self.aos);
        let _ = writeln!(s, "LSM {:.6}", self.lsm);
        let _ = writeln!(s, "precision@{} {:.6}", self.precision_at.0, self.precision_at.1);
        match self.mean_center_error() {
            Some(e) => {
                let _ = writeln!(s, "mean_center_error {e:.6}");
            }
            None => {
                let _ = writeln!(s, "mean_center_error nan");
            }
        }
        s
    }
}

pub fn evaluate(boxes: &[Option<Rect>], truth: &[Option<Rect>], params: &EvalParams) -> Result<MetricReport> {
    let counts = detection_counts(boxes, truth, params.rule)?;
    let (success, aos) = success_curve(boxes, truth, &params.success_thresholds)?;
    let precision = precision_curve(boxes, truth, &params.precision_thresholds)?;
    let at = precision_curve(boxes, truth, &[params.precision_at])?[0];
    Ok(MetricReport {
        frames: boxes.len(),
        counts,
        td: counts.td(),
        fd: counts.fd(),
        md: counts.md(),
        precision_curve: precision,
        success_curve: success,
        aos,
        lsm: lsm(boxes, truth, params.iou_threshold, params.lsm_fraction)?,
        precision_at: at,
        ious: ious(boxes, truth),
        center_errors: center_errors(boxes, truth),
    })
}

fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("threshold,fraction\n");
    for (t, f) in curve {
        let _ = writeln!(s, "{t},{f:.6}");
    }
    s
}

/// Write `precision.csv`, `success.csv` and `summary.txt` into `out_dir`.
pub fn emit_plots(report: &MetricReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, body) in [
        ("precision.csv", curve_csv(&report.precision_curve)),
        ("success.csv", curve_csv(&report.success_curve)),
        ("summary.txt", report.summary()),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Option<Rect> {
        Some(Rect::new(x, y, w, h))
    }

    #[test]
    fn overlap_examples() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(overlap_score(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap_score(&a, &Rect::new(20.0, 0.0, 5.0, 5.0)).unwrap(), 0.0);
        let b = Rect::new(5.0, 0.0, 10.0, 10.0);
        assert!((overlap_score(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(overlap_score(&a, &Rect::new(0.0, 0.0, 0.0, 4.0)).is_err());
    }

    #[test]
    fn detection_percentages() {
        let c = DetectionCounts {
            true_detections: 8,
            false_detections: 2,
            missed: 0,
            truth_frames: 10,
        };
        assert_eq!(c.td(), 80.0);
        assert_eq!(c.fd(), 20.0);
        let c = DetectionCounts {
            true_detections: 9,
            false_detections: 0,
            missed: 1,
            truth_frames: 10,
        };
        assert_eq!(c.md(), 10.0);
        assert_eq!(DetectionCounts::default().td(), 0.0);
    }

    #[test]
    fn precision_examples() {
        let t = r(0.0, 0.0, 10.0, 10.0);
        let perfect = vec![t; 3];
        let c = precision_curve(&perfect, &perfect, &[0.0, 5.0, 20.0]).unwrap();
        assert!(c.iter().all(|&(_, f)| f == 1.0));

        let off = vec![r(25.0, 0.0, 10.0, 10.0); 3];
        let c = precision_curve(&off, &perfect, &[20.0, 25.0]).unwrap();
        assert_eq!(c, vec![(20.0, 0.0), (25.0, 1.0)]);

        let mixed = vec![r(5.0, 0.0, 10.0, 10.0), r(15.0, 0.0, 10.0, 10.0), r(30.0, 0.0, 10.0, 10.0)];
        let c = precision_curve(&mixed, &perfect, &[20.0]).unwrap();
        assert!((c[0].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn success_examples() {
        let t = r(0.0, 0.0, 10.0, 10.0);
        let truth = vec![t; 3];
        let (c, aos) = success_curve(&truth, &truth, &[0.0, 0.5, 0.99]).unwrap();
        assert!(c.iter().all(|&(_, f)| f == 1.0));
        assert_eq!(aos, 1.0);

        let far = vec![r(50.0, 50.0, 10.0, 10.0); 3];
        let (c, aos) = success_curve(&far, &truth, &[0.1, 0.5]).unwrap();
        assert!(c.iter().all(|&(_, f)| f == 0.0));
        assert_eq!(aos, 0.0);

        // IoU 0.2, 0.6, 0.8 with widths chosen against a 10x10 truth
        let boxes = vec![r(0.0, 0.0, 2.0, 10.0), r(0.0, 0.0, 6.0, 10.0), r(0.0, 0.0, 8.0, 10.0)];
        let (c, aos) = success_curve(&boxes, &truth, &[0.5]).unwrap();
        assert!((c[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((aos - 1.6 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lsm_examples() {
        let f = |v: &[u8]| v.iter().map(|&b| Some(b == 1)).collect::<Vec<_>>();
        assert_eq!(longest_window(&f(&[1, 1, 0, 1, 1, 1]), 1.0), 3);
        assert_eq!(longest_window(&f(&[1, 1, 1, 1]), 1.0), 4);
        assert_eq!(longest_window(&f(&[0, 0, 0]), 1.0), 0);
        assert_eq!(longest_window(&f(&[0, 0, 0]), 0.5), 0);
        // one miss in five meets F = 0.8
        assert_eq!(longest_window(&f(&[1, 1, 0, 1, 1]), 0.8), 5);
        let gap = vec![Some(true), None, Some(true), Some(true)];
        assert_eq!(longest_window(&gap, 0.5), 2);

        let t = r(0.0, 0.0, 10.0, 10.0);
        let truth = vec![t; 6];
        let boxes = vec![t, t, None, t, t, t];
        assert_eq!(lsm(&boxes, &truth, 0.5, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn literal_rule() {
        let truth = Rect::new(0.0, 0.0, 10.0, 10.0);
        let near = Rect::new(0.5, 0.0, 10.0, 10.0);
        let far = Rect::new(3.0, 0.0, 10.0, 10.0);
        assert!(SuccessRule::CenterRatio.hit(&near, &truth));
        assert!(!SuccessRule::CenterRatio.hit(&far, &truth));
    }

    #[test]
    fn mismatched_lengths_fail() {
        assert!(td_fd_md(&[None], &[], SuccessRule::Iou(0.5)).is_err());
    }
}
