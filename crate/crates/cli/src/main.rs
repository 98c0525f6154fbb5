use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualtrack::contour::{analyze, Mode};
use dualtrack::eval::{emit_plots, evaluate, EvalParams, MetricReport};
use dualtrack::frame_io::{binarize, list_frames, load_frame, load_frame_sequence, load_ground_truth, GrayFrame};
use dualtrack::synth::{write_scene, SceneSpec};
use dualtrack::tracker::{parse_result_csv, points_path, run, scored_boxes, write_result, ResultRow, TrackerConfig};
use dualtrack::{Error, Point2};
use image::{Rgb, RgbImage};

#[derive(Parser)]
#[command(name = "dualtrack", version, about = "Contour-point optical flow plus boundary particle swarms for single-target tracking")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: frames, groundtruth.txt and scene.txt.
    Synth {
        /// Scene description as key=value lines; the built-in scene if omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Track the target through a directory of frames.
    Track {
        frames_dir: PathBuf,
        /// Result CSV; the point dump goes next to it as <stem>.points.csv.
        #[arg(long, default_value = "result.csv")]
        out: PathBuf,
        /// Ground truth to score against once tracking finishes.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Frame file name pattern; defaults to *.pgm, then *.png.
        #[arg(long)]
        pattern: Option<String>,
        /// key=value file, overridden by flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        flags: TrackFlags,
    },
    /// Score a result file against ground truth.
    Eval {
        result: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Dump the dominant points of one frame as x,y,k,cos.
    Dominants {
        frame: PathBuf,
        #[arg(long, default_value = "static")]
        mode: String,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Draw boxes, dominant points and particles onto copies of the frames.
    Overlay {
        frames_dir: PathBuf,
        result: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        pattern: Option<String>,
    },
}

/// Tracker overrides, named exactly as the config keys.
#[derive(Args, Default)]
struct TrackFlags {
    /// static or variable
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Frame-1 binarization threshold in [0, 1].
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    init_margin: Option<String>,
    #[arg(long)]
    pso_w: Option<String>,
    #[arg(long)]
    pso_c1: Option<String>,
    #[arg(long)]
    pso_c2: Option<String>,
    /// int:LO:HI or uniform:LO:HI
    #[arg(long)]
    pso_r1: Option<String>,
    #[arg(long)]
    pso_r2: Option<String>,
    #[arg(long)]
    pso_vmin: Option<String>,
    #[arg(long)]
    pso_vmax: Option<String>,
    #[arg(long)]
    pso_pop: Option<String>,
    #[arg(long)]
    pso_accept_tol: Option<String>,
    #[arg(long)]
    pso_max_iter: Option<String>,
    #[arg(long)]
    pso_diverge_tol: Option<String>,
    #[arg(long)]
    pso_diverge_patience: Option<String>,
    #[arg(long)]
    pso_stall_reinit: Option<String>,
    #[arg(long)]
    klt_window: Option<String>,
    #[arg(long)]
    klt_iters: Option<String>,
    #[arg(long)]
    klt_tol: Option<String>,
    /// rel:FRACTION of the frame's strongest corner, or an absolute value.
    #[arg(long)]
    klt_lambda: Option<String>,
    #[arg(long)]
    klt_residual: Option<String>,
    #[arg(long)]
    klt_stationary: Option<String>,
    #[arg(long)]
    bbox_p: Option<String>,
    #[arg(long)]
    bbox_l: Option<String>,
    #[arg(long)]
    bbox_b: Option<String>,
    /// per-axis or diagonal
    #[arg(long)]
    bbox_order: Option<String>,
    /// geometric or literal
    #[arg(long)]
    bbox_axes: Option<String>,
}

impl TrackFlags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 28] {
        [
            ("mode", &self.mode),
            ("seed", &self.seed),
            ("threshold", &self.threshold),
            ("init-margin", &self.init_margin),
            ("pso-w", &self.pso_w),
            ("pso-c1", &self.pso_c1),
            ("pso-c2", &self.pso_c2),
            ("pso-r1", &self.pso_r1),
            ("pso-r2", &self.pso_r2),
            ("pso-vmin", &self.pso_vmin),
            ("pso-vmax", &self.pso_vmax),
            ("pso-pop", &self.pso_pop),
            ("pso-accept-tol", &self.pso_accept_tol),
            ("pso-max-iter", &self.pso_max_iter),
            ("pso-diverge-tol", &self.pso_diverge_tol),
            ("pso-diverge-patience", &self.pso_diverge_patience),
            ("pso-stall-reinit", &self.pso_stall_reinit),
            ("klt-window", &self.klt_window),
            ("klt-iters", &self.klt_iters),
            ("klt-tol", &self.klt_tol),
            ("klt-lambda", &self.klt_lambda),
            ("klt-residual", &self.klt_residual),
            ("klt-stationary", &self.klt_stationary),
            ("bbox-p", &self.bbox_p),
            ("bbox-l", &self.bbox_l),
            ("bbox-b", &self.bbox_b),
            ("bbox-order", &self.bbox_order),
            ("bbox-axes", &self.bbox_axes),
        ]
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn resolve_config(file: Option<&Path>, flags: &TrackFlags) -> Result<TrackerConfig, Error> {
    let mut cfg = TrackerConfig::default();
    if let Some(path) = file {
        cfg.apply_text(&read_text(path)?, &path.display().to_string())?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The given pattern, or the first of the default patterns that matches.
fn frame_pattern(dir: &Path, pattern: Option<&str>) -> Result<String, Error> {
    if let Some(p) = pattern {
        return Ok(p.to_string());
    }
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    for p in ["*.pgm", "*.png"] {
        if list_frames(dir, p).is_ok() {
            return Ok(p.to_string());
        }
    }
    Err(Error::NoFrames {
        dir: dir.to_path_buf(),
        pattern: "*.pgm or *.png".into(),
    })
}

fn score(rows: &[ResultRow], gt: &Path) -> Result<MetricReport, Error> {
    let truth = load_ground_truth(gt)?;
    let (start, boxes) = scored_boxes(rows, truth.len());
    evaluate(&boxes, &truth.rects[start..], &EvalParams::default())
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

const YELLOW: Rgb<u8> = Rgb([255, 255, 0]);
const GREEN: Rgb<u8> = Rgb([0, 255, 0]);
const RED: Rgb<u8> = Rgb([255, 0, 0]);

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn dot(img: &mut RgbImage, p: Point2, radius: i64, c: Rgb<u8>) {
    let (x, y) = (p.x.round() as i64, p.y.round() as i64);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            put(img, x + dx, y + dy, c);
        }
    }
}

fn outline(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, c: Rgb<u8>) {
    let (x0, y0, x1, y1) = (x0.round() as i64, y0.round() as i64, x1.round() as i64, y1.round() as i64);
    for x in x0..=x1 {
        put(img, x, y0, c);
        put(img, x, y1, c);
    }
    for y in y0..=y1 {
        put(img, x0, y, c);
        put(img, x1, y, c);
    }
}

fn to_rgb(frame: &GrayFrame) -> RgbImage {
    let gray = frame.to_u8();
    RgbImage::from_fn(frame.width as u32, frame.height as u32, |x, y| {
        let v = gray[y as usize * frame.width + x as usize];
        Rgb([v, v, v])
    })
}

/// `frame,kind,x,y` rows grouped by frame: (dominants, particles).
fn read_points(path: &Path, frames: usize) -> Result<Vec<(Vec<Point2>, Vec<Point2>)>, Error> {
    let text = read_text(path)?;
    let mut out = vec![(Vec::new(), Vec::new()); frames];
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("malformed point row `{line}`"),
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let frame: usize = f[0].parse().map_err(|_| bad())?;
        let p = Point2::new(f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?);
        let Some(slot) = out.get_mut(frame) else { continue };
        match f[1] {
            "dominant" => slot.0.push(p),
            "particle" => slot.1.push(p),
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

fn overlay(frames_dir: &Path, result: &Path, out_dir: &Path, pattern: Option<&str>) -> Result<usize, Error> {
    let paths = list_frames(frames_dir, &frame_pattern(frames_dir, pattern)?)?;
    let rows = parse_result_csv(&read_text(result)?, &result.display().to_string())?;
    let side = points_path(result);
    let points = if side.is_file() {
        Some(read_points(&side, paths.len())?)
    } else {
        eprintln!("dualtrack: no {}; drawing boxes only", side.display());
        None
    };
    create_dir(out_dir)?;
    for (i, path) in paths.iter().enumerate() {
        let mut img = to_rgb(&load_frame(path, i)?);
        if let Some((doms, parts)) = points.as_ref().and_then(|p| p.get(i)) {
            for &p in parts {
                dot(&mut img, p, 0, RED);
            }
            for &p in doms {
                dot(&mut img, p, 1, GREEN);
            }
        }
        for r in rows.iter().filter(|r| r.frame == i) {
            if let Some(b) = r.bbox {
                let rect = b.to_rect();
                outline(&mut img, rect.x, rect.y, rect.right(), rect.bottom(), YELLOW);
            }
        }
        let name = path.file_stem().map_or_else(|| format!("{i:04}"), |s| s.to_string_lossy().into_owned());
        let dest = out_dir.join(format!("{name}.png"));
        img.save(&dest).map_err(|source| Error::Image {
            path: dest.clone(),
            source,
        })?;
    }
    Ok(paths.len())
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Synth { spec, out_dir } => {
            let spec = match spec {
                Some(p) => SceneSpec::parse(&read_text(&p)?, &p.display().to_string())?,
                None => SceneSpec::default(),
            };
            let (frames, _) = write_scene(&spec, &out_dir)?;
            println!("wrote {} frames to {}", frames.len(), out_dir.display());
        }
        Command::Track {
            frames_dir,
            out,
            gt,
            pattern,
            config,
            print_config,
            flags,
        } => {
            let cfg = resolve_config(config.as_deref(), &flags)?;
            if print_config {
                print!("{}", cfg.describe());
                return Ok(());
            }
            let frames = load_frame_sequence(&frames_dir, &frame_pattern(&frames_dir, pattern.as_deref())?)?;
            let result = run(&frames, &cfg)?;
            write_result(&result, &out)?;
            eprintln!(
                "tracked {} of {} frames{}; wrote {}",
                result.frames.len(),
                frames.len(),
                result.lost_at.map_or(String::new(), |f| format!(" (lost at frame {f})")),
                out.display()
            );
            if let Some(gt) = gt {
                print!("{}", score(&result.rows(), &gt)?.summary());
            }
        }
        Command::Eval { result, gt, out_dir } => {
            let rows = parse_result_csv(&read_text(&result)?, &result.display().to_string())?;
            let report = score(&rows, &gt)?;
            create_dir(&out_dir)?;
            emit_plots(&report, &out_dir)?;
            print!("{}", report.summary());
        }
        Command::Dominants { frame, mode, threshold } => {
            let mode: Mode = mode.parse()?;
            let img = binarize(&load_frame(&frame, 0)?, threshold);
            let a = analyze(&img, mode)?;
            let mut s = String::from("x,y,k,cos\n");
            for d in &a.dominants.points {
                s.push_str(&format!("{},{},{},{:.6}\n", d.position.x, d.position.y, d.k, d.cosine + 0.0));
            }
            print!("{s}");
        }
        Command::Overlay {
            frames_dir,
            result,
            out_dir,
            pattern,
        } => {
            let n = overlay(&frames_dir, &result, &out_dir, pattern.as_deref())?;
            eprintln!("wrote {n} overlays to {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("dualtrack: error: {e}\nRun `dualtrack help` for usage.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("dualtrack: error: {e}");
            ExitCode::FAILURE
        }
    }
}
