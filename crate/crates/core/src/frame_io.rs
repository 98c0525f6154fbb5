//! Frame sequences, binarization, seed selection and ground-truth files.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Pixel, Rect};

/// Grayscale raster with intensities normalized to `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub index: usize,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>, index: usize) -> Self {
        assert_eq!(data.len(), width * height, "frame data length");
        Self {
            width,
            height,
            data,
            index,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64, index: usize) -> Self {
        Self::new(width, height, vec![value; width * height], index)
    }

    /// Build from a closure evaluated at every `(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        index: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data, index)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample. `None` when `(x, y)` lies outside `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Convert back to 8-bit luminance (rounded).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

pub(crate) fn bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> Option<f64> {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
        return None;
    }
    let x0 = (x.floor() as usize).min(width.saturating_sub(2));
    let y0 = (y.floor() as usize).min(height.saturating_sub(2));
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let a = data[y0 * width + x0];
    let b = data[y0 * width + x1];
    let c = data[y1 * width + x0];
    let d = data[y1 * width + x1];
    Some(a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy)
}

/// Boolean foreground mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask data length");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Foreground test with out-of-range coordinates treated as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    /// Foreground pixel with at least one background 8-neighbor (the image
    /// border counts as background).
    pub fn is_boundary(&self, x: usize, y: usize) -> bool {
        if !self.get(x, y) {
            return false;
        }
        let (xi, yi) = (x as isize, y as isize);
        (-1..=1).any(|dy| {
            (-1..=1).any(|dx| (dx != 0 || dy != 0) && !self.get_signed(xi + dx, yi + dy))
        })
    }
}

/// Per-frame target rectangles; `None` marks frames where the target is absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthTrack {
    pub rects: Vec<Option<Rect>>,
}

impl GroundTruthTrack {
    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    /// Serialize as one `x,y,w,h` line per frame (`NaN,NaN,NaN,NaN` for absent).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rects {
            match r {
                Some(r) => out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_num(r.x),
                    fmt_num(r.y),
                    fmt_num(r.w),
                    fmt_num(r.h)
                )),
                None => out.push_str("NaN,NaN,NaN,NaN\n"),
            }
        }
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Pixel foreground iff intensity >= threshold.
pub fn binarize(frame: &GrayFrame, threshold: f64) -> BinaryImage {
    BinaryImage::new(
        frame.width,
        frame.height,
        frame.data.iter().map(|&v| v >= threshold).collect(),
    )
}

/// First foreground pixel in raster order that touches the background.
pub fn find_boundary_seed(image: &BinaryImage) -> Result<Pixel> {
    for y in 0..image.height {
        for x in 0..image.width {
            if image.is_boundary(x, y) {
                return Ok(Pixel::new(x, y));
            }
        }
    }
    Err(Error::NoTarget)
}

/// Compare strings so that embedded digit runs order numerically.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut ai, mut bi) = (a.chars().peekable(), b.chars().peekable());
    loop {
        match (ai.peek().copied(), bi.peek().copied()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(ca), Some(cb)) if ca.is_ascii_digit() && cb.is_ascii_digit() => {
                let mut na = String::new();
                while let Some(c) = ai.peek().copied().filter(char::is_ascii_digit) {
                    na.push(c);
                    ai.next();
                }
                let mut nb = String::new();
                while let Some(c) = bi.peek().copied().filter(char::is_ascii_digit) {
                    nb.push(c);
                    bi.next();
                }
                let ta = na.trim_start_matches('0');
                let tb = nb.trim_start_matches('0');
                let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            (Some(ca), Some(cb)) => {
                if ca != cb {
                    return ca.cmp(&cb);
                }
                ai.next();
                bi.next();
            }
        }
    }
}

/// Decode one image file to a normalized grayscale frame.
pub fn load_frame(path: &Path, index: usize) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    // `to_luma8` weights channels; the plain average is used for color input.
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let s = p.0[0] as u32 + p.0[1] as u32 + p.0[2] as u32;
                (s as f64 / 3.0).round() / 255.0
            })
            .collect(),
    };
    Ok(GrayFrame::new(w, h, data, index))
}

/// List the files in `dir` whose names match `pattern`, in natural order.
pub fn list_frames(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let pat = glob::Pattern::new(pattern).map_err(|_| Error::BadPattern(pattern.to_string()))?;
    let mut files: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_file())
        .filter_map(|entry| {
            let name = entry.file_name().to_string_lossy().into_owned();
            pat.matches(&name).then(|| (name, entry.path()))
        })
        .collect();
    if files.is_empty() {
        return Err(Error::NoFrames {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    files.sort_by(|a, b| natural_cmp(&a.0, &b.0));
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

/// Load every matching frame of a directory, naturally sorted.
pub fn load_frame_sequence(dir: impl AsRef<Path>, pattern: &str) -> Result<Vec<GrayFrame>> {
    let paths = list_frames(dir.as_ref(), pattern)?;
    let mut frames: Vec<GrayFrame> = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let frame = load_frame(path, i)?;
        if let Some(first) = frames.first() {
            if (first.width, first.height) != (frame.width, frame.height) {
                return Err(Error::MixedDimensions {
                    path: path.clone(),
                    want_w: first.width,
                    want_h: first.height,
                    got_w: frame.width,
                    got_h: frame.height,
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Write a frame as an 8-bit binary PGM.
pub fn save_pgm(frame: &GrayFrame, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend(frame.to_u8());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parse ground-truth text: one `x,y,w,h` (comma or tab separated) per line.
pub fn parse_ground_truth(text: &str, origin: &str) -> Result<GroundTruthTrack> {
    let mut rects = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line
            .split([',', '\t'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        if fields.iter().all(|f| f.eq_ignore_ascii_case("nan")) {
            rects.push(None);
            continue;
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| err(format!("not a number: `{f}`")))?;
            if !slot.is_finite() {
                return Err(err(format!("not a finite number: `{f}`")));
            }
        }
        if v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(err("width and height must be positive".into()));
        }
        rects.push(Some(Rect::new(v[0], v[1], v[2], v[3])));
    }
    Ok(GroundTruthTrack { rects })
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthTrack> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text, &path.display().to_string())
}
