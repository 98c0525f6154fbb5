//! Tracker configuration and its flat `key=value` text form.
//!
//! Keys match the long CLI flags without the leading dashes, and
//! [`TrackerConfig::describe`] emits every key, so its output can be fed
//! back in as a config file.

use crate::bbox::BoxParams;
use crate::contour::Mode;
use crate::error::{Error, Result};
use crate::klt::KltParams;
use crate::pso::PsoParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: Mode,
    /// Overrides the mode's default particle count when set.
    pub population: Option<usize>,
    /// `population` is taken from here only through [`Self::pso_params`].
    pub pso: PsoParams,
    pub klt: KltParams,
    pub bbox: BoxParams,
    pub rng_seed: u64,
    /// Particles start inside the frame-1 dominant-point bounds grown by this
    /// many pixels.
    pub init_margin: f64,
    pub binarize_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::new(Mode::Static)
    }
}

/// Every recognised key, in `describe` order.
pub const KEYS: &[&str] = &[
    "mode",
    "seed",
    "threshold",
    "init-margin",
    "pso-w",
    "pso-c1",
    "pso-c2",
    "pso-r1",
    "pso-r2",
    "pso-vmin",
    "pso-vmax",
    "pso-pop",
    "pso-accept-tol",
    "pso-max-iter",
    "pso-diverge-tol",
    "pso-diverge-patience",
    "pso-stall-reinit",
    "klt-window",
    "klt-iters",
    "klt-tol",
    "klt-lambda",
    "klt-residual",
    "klt-stationary",
    "bbox-p",
    "bbox-l",
    "bbox-b",
    "bbox-order",
    "bbox-axes",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for `{key}`: `{value}`")))
}

impl TrackerConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            population: None,
            pso: PsoParams::default(),
            klt: KltParams::default(),
            bbox: BoxParams::default(),
            rng_seed: 0,
            init_margin: 8.0,
            binarize_threshold: 0.5,
        }
    }

    pub fn effective_population(&self) -> usize {
        self.population.unwrap_or(self.mode.default_population())
    }

    /// PSO parameters with the particle count resolved.
    pub fn pso_params(&self) -> PsoParams {
        PsoParams {
            population: self.effective_population(),
            ..self.pso.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pso_params().validate()?;
        let k = &self.klt;
        if k.window_half == 0 || k.max_iter == 0 || !(k.tol > 0.0) || !(k.residual_bound > 0.0) {
            return Err(Error::Config("KLT window, iterations, tol and residual must be positive".into()));
        }
        if self.bbox.p == 0 || self.bbox.l == 0 || self.bbox.b == 0 {
            return Err(Error::Config("bbox counts must be positive".into()));
        }
        if !(self.init_margin >= 0.0) || !(0.0..=1.0).contains(&self.binarize_threshold) {
            return Err(Error::Config("init-margin must be >= 0 and threshold in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "mode" => self.mode = parse(key, v)?,
            "seed" => self.rng_seed = parse(key, v)?,
            "threshold" => self.binarize_threshold = parse(key, v)?,
            "init-margin" => self.init_margin = parse(key, v)?,
            "pso-w" => self.pso.w = parse(key, v)?,
            "pso-c1" => self.pso.c1 = parse(key, v)?,
            "pso-c2" => self.pso.c2 = parse(key, v)?,
            "pso-r1" => self.pso.r1 = parse(key, v)?,
            "pso-r2" => self.pso.r2 = parse(key, v)?,
            "pso-vmin" => self.pso.v_min = parse(key, v)?,
            "pso-vmax" => self.pso.v_max = parse(key, v)?,
            "pso-pop" => self.population = Some(parse(key, v)?),
            "pso-accept-tol" => self.pso.accept_tol = parse(key, v)?,
            "pso-max-iter" => self.pso.max_iter = parse(key, v)?,
            "pso-diverge-tol" => self.pso.diverge_tol = parse(key, v)?,
            "pso-diverge-patience" => self.pso.diverge_patience = parse(key, v)?,
            "pso-stall-reinit" => self.pso.stall_reinit = parse(key, v)?,
            "klt-window" => self.klt.window_half = parse(key, v)?,
            "klt-iters" => self.klt.max_iter = parse(key, v)?,
            "klt-tol" => self.klt.tol = parse(key, v)?,
            "klt-lambda" => self.klt.lambda = parse(key, v)?,
            "klt-residual" => self.klt.residual_bound = parse(key, v)?,
            "klt-stationary" => self.klt.stationary_frames = parse(key, v)?,
            "bbox-p" => self.bbox.p = parse(key, v)?,
            "bbox-l" => self.bbox.l = parse(key, v)?,
            "bbox-b" => self.bbox.b = parse(key, v)?,
            "bbox-order" => self.bbox.order = parse(key, v)?,
            "bbox-axes" => self.bbox.axes = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let wrap = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| wrap(format!("expected key=value, got `{line}`")))?;
            self.set(k.trim(), v).map_err(|e| wrap(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text, origin)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.pso;
        let k = &self.klt;
        let b = &self.bbox;
        Some(match key {
            "mode" => self.mode.name().to_string(),
            "seed" => self.rng_seed.to_string(),
            "threshold" => self.binarize_threshold.to_string(),
            "init-margin" => self.init_margin.to_string(),
            "pso-w" => p.w.to_string(),
            "pso-c1" => p.c1.to_string(),
            "pso-c2" => p.c2.to_string(),
            "pso-r1" => p.r1.to_string(),
            "pso-r2" => p.r2.to_string(),
            "pso-vmin" => p.v_min.to_string(),
            "pso-vmax" => p.v_max.to_string(),
            "pso-pop" => self.effective_population().to_string(),
            "pso-accept-tol" => p.accept_tol.to_string(),
            "pso-max-iter" => p.max_iter.to_string(),
            "pso-diverge-tol" => p.diverge_tol.to_string(),
            "pso-diverge-patience" => p.diverge_patience.to_string(),
            "pso-stall-reinit" => p.stall_reinit.to_string(),
            "klt-window" => k.window_half.to_string(),
            "klt-iters" => k.max_iter.to_string(),
            "klt-tol" => k.tol.to_string(),
            "klt-lambda" => k.lambda.to_string(),
            "klt-residual" => k.residual_bound.to_string(),
            "klt-stationary" => k.stationary_frames.to_string(),
            "bbox-p" => b.p.to_string(),
            "bbox-l" => b.l.to_string(),
            "bbox-b" => b.b.to_string(),
            "bbox-order" => b.order.to_string(),
            "bbox-axes" => b.axes.to_string(),
            _ => return None,
        })
    }

    /// Every resolved parameter as `key=value` lines, preceded by comments
    /// for the derived values.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "# group-size={}\n# population={}\n",
            self.mode.group_size(),
            self.effective_population()
        );
        for key in KEYS {
            out.push_str(key);
            out.push('=');
            out.push_str(&self.get(key).expect("every listed key is readable"));
            out.push('\n');
        }
        out
    }
}
