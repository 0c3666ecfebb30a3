//! Run configuration.
//!
//! A config is a JSON document. Lines whose first non-blank characters are
//! `//` are comments and are dropped before parsing. Unknown keys are
//! rejected. Every section may be omitted, in which case the defaults below
//! apply. The defaults are placeholder scales (nanometres, microseconds),
//! not measured material constants.
//!
//! ```text
//! physics     q0 (u/s), d (m²/s), r_s (m)
//! probe_grid  rows, cols, pitch (m), origin [x, y] (m)
//! scan        pattern, factor, seed, ratio, plan_file, dwell (s), dead_time (s)
//! sim_grid    pixel_side (m), origin, width, height      (derived when absent)
//! frames      interval (s), start (s), end (s)           (end defaults to scan end)
//! output      format (rawf32|pgm16|csv), directory, stem
//! threads     "auto" or a positive count
//! ```

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::geom::Point2;
use crate::kernel::PhysicalParams;
use crate::output::FrameFormat;
use crate::render::{FrameSchedule, SimulationGrid};
use crate::scan::{self, ProbeGrid, ScanPattern, ScanPlan};

/// Environment variable that overrides the configured thread count.
pub const THREADS_ENV: &str = "STEM_DIFFUSION_THREADS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub q0: f64,
    pub d: f64,
    pub r_s: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            q0: 1.0,
            d: 1e-12,
            r_s: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeGridConfig {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub origin: Point2,
}

impl Default for ProbeGridConfig {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            pitch: 2e-9,
            origin: Point2::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    #[default]
    Raster,
    Interleaved,
    Random,
    Subsampled,
    /// Replays a plan table from `plan_file`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub pattern: PatternKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_file: Option<PathBuf>,
    pub dwell: f64,
    pub dead_time: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            pattern: PatternKind::Raster,
            factor: None,
            seed: None,
            ratio: None,
            plan_file: None,
            dwell: 1e-5,
            dead_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimGridConfig {
    /// Defaults to a quarter of the probe pitch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_side: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramesConfig {
    pub interval: f64,
    pub start: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
}

impl Default for FramesConfig {
    fn default() -> Self {
        Self {
            interval: 1e-5,
            start: 0.0,
            end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: FrameFormat,
    pub directory: PathBuf,
    pub stem: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: FrameFormat::Rawf32,
            directory: PathBuf::from("frames"),
            stem: "frame".into(),
        }
    }
}

/// Worker count: `"auto"` (all cores) or an explicit count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

impl Threads {
    /// Pool size argument; `0` lets the pool pick.
    pub fn pool_size(self) -> usize {
        match self {
            Threads::Auto => 0,
            Threads::Count(n) => n,
        }
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => f.write_str("auto"),
            Threads::Count(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "auto" => Ok(Threads::Auto),
            n => match n.parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("expected \"auto\" or a positive count, got {s:?}")),
                Ok(n) => Ok(Threads::Count(n)),
            },
        }
    }
}

impl Serialize for Threads {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => s.serialize_str("auto"),
            Threads::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(de::Error::custom("threads must be >= 1 or \"auto\"")),
            Raw::Count(n) => Ok(Threads::Count(n as usize)),
            Raw::Name(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub physics: PhysicsConfig,
    pub probe_grid: ProbeGridConfig,
    pub scan: ScanConfig,
    pub sim_grid: SimGridConfig,
    pub frames: FramesConfig,
    pub output: OutputConfig,
    pub threads: Threads,
}

/// Removes full-line `//` comments.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| {
            if l.trim_start().starts_with("//") {
                ""
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(&strip_comments(text))?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialisation cannot fail")
    }

    /// Checks every value and builds the objects a run needs.
    pub fn resolve(&self) -> Result<Setup, ConfigError> {
        let p = &self.physics;
        positive("physics.q0", p.q0)?;
        positive("physics.d", p.d)?;
        positive("physics.r_s", p.r_s)?;
        let params =
            PhysicalParams::new(p.q0, p.d, p.r_s).map_err(|e| invalid("physics", e.to_string()))?;

        let g = &self.probe_grid;
        if g.rows == 0 {
            return Err(invalid("probe_grid.rows", "must be >= 1"));
        }
        if g.cols == 0 {
            return Err(invalid("probe_grid.cols", "must be >= 1"));
        }
        positive("probe_grid.pitch", g.pitch)?;
        finite_point("probe_grid.origin", g.origin)?;
        let probes = ProbeGrid::new(g.rows, g.cols, g.pitch, g.origin)
            .map_err(|e| invalid("probe_grid", e.to_string()))?;

        let s = &self.scan;
        positive("scan.dwell", s.dwell)?;
        if !(s.dead_time.is_finite() && s.dead_time >= 0.0) {
            return Err(invalid(
                "scan.dead_time",
                format!("must be >= 0, got {}", s.dead_time),
            ));
        }
        let plan = self.build_plan(&probes)?;

        let sg = &self.sim_grid;
        let pixel_side = sg.pixel_side.unwrap_or(g.pitch / 4.0);
        positive("sim_grid.pixel_side", pixel_side)?;
        let covering = SimulationGrid::covering(&probes, pixel_side)
            .map_err(|e| invalid("sim_grid", e.to_string()))?;
        if sg.width == Some(0) {
            return Err(invalid("sim_grid.width", "must be >= 1"));
        }
        if sg.height == Some(0) {
            return Err(invalid("sim_grid.height", "must be >= 1"));
        }
        let origin = sg.origin.unwrap_or(covering.origin());
        finite_point("sim_grid.origin", origin)?;
        let grid = SimulationGrid::new(
            origin,
            pixel_side,
            sg.width.unwrap_or(covering.width()),
            sg.height.unwrap_or(covering.height()),
        )
        .map_err(|e| invalid("sim_grid", e.to_string()))?;

        let f = &self.frames;
        positive("frames.interval", f.interval)?;
        if !(f.start.is_finite() && f.start >= 0.0) {
            return Err(invalid(
                "frames.start",
                format!("must be >= 0, got {}", f.start),
            ));
        }
        let end = f.end.unwrap_or_else(|| plan.end_time().max(f.start));
        if !(end.is_finite() && end >= f.start) {
            return Err(invalid(
                "frames.end",
                format!("must be >= frames.start ({}), got {end}", f.start),
            ));
        }
        let schedule = FrameSchedule::new(f.interval, f.start, end)
            .map_err(|e| invalid("frames", e.to_string()))?;

        if self.output.stem.is_empty() || self.output.stem.contains(['/', '\\']) {
            return Err(invalid(
                "output.stem",
                "must be a non-empty file name prefix",
            ));
        }

        Ok(Setup {
            params,
            probes,
            plan,
            grid,
            schedule,
            output: self.output.clone(),
            threads: self.threads,
        })
    }

    fn build_plan(&self, probes: &ProbeGrid) -> Result<ScanPlan, ConfigError> {
        let s = &self.scan;
        let unused = |key: &'static str, set: bool| {
            if set {
                Err(invalid(key, format!("not used by pattern {:?}", s.pattern)))
            } else {
                Ok(())
            }
        };
        let pattern = match s.pattern {
            PatternKind::Raster => ScanPattern::Raster,
            PatternKind::Interleaved => ScanPattern::Interleaved {
                factor: s
                    .factor
                    .ok_or_else(|| invalid("scan.factor", "required for interleaved"))?,
            },
            PatternKind::Random => ScanPattern::Random {
                seed: s.seed.unwrap_or(0),
            },
            PatternKind::Subsampled => ScanPattern::Subsampled {
                ratio: s
                    .ratio
                    .ok_or_else(|| invalid("scan.ratio", "required for subsampled"))?,
                seed: s.seed.unwrap_or(0),
            },
            PatternKind::Custom => {
                let path = s
                    .plan_file
                    .as_ref()
                    .ok_or_else(|| invalid("scan.plan_file", "required for custom"))?;
                let file = fs::File::open(path)
                    .map_err(|e| invalid("scan.plan_file", format!("{}: {e}", path.display())))?;
                return ScanPlan::read_table(io::BufReader::new(file))
                    .map_err(|e| invalid("scan.plan_file", e.to_string()));
            }
        };
        unused(
            "scan.factor",
            s.factor.is_some() && s.pattern != PatternKind::Interleaved,
        )?;
        unused(
            "scan.seed",
            s.seed.is_some() && !matches!(s.pattern, PatternKind::Random | PatternKind::Subsampled),
        )?;
        unused(
            "scan.ratio",
            s.ratio.is_some() && s.pattern != PatternKind::Subsampled,
        )?;
        unused("scan.plan_file", s.plan_file.is_some())?;
        scan::generate(probes, pattern, s.dwell, s.dead_time).map_err(|e| {
            let key = match s.pattern {
                PatternKind::Interleaved => "scan.factor",
                PatternKind::Subsampled => "scan.ratio",
                _ => "scan",
            };
            invalid(key, e.to_string())
        })
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be finite and > 0, got {v}")))
    }
}

fn finite_point(key: &'static str, p: Point2) -> Result<(), ConfigError> {
    if p.x.is_finite() && p.y.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, "coordinates must be finite"))
    }
}

/// Validated, ready-to-run form of a [`SimConfig`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: PhysicalParams,
    pub probes: ProbeGrid,
    pub plan: ScanPlan,
    pub grid: SimulationGrid,
    pub schedule: FrameSchedule,
    pub output: OutputConfig,
    pub threads: Threads,
}

/// Commented default config, as written by `make-config`.
pub fn commented_default() -> String {
    let body = SimConfig::default().to_json();
    let header = "\
// stem-diffusion configuration (JSON; lines starting with // are ignored).
// Units: SI throughout. Defaults are placeholder scales, not material data.
//
// physics.q0          deposition rate Q0 (u/s)
// physics.d           diffusion coefficient D (m^2/s)
// physics.r_s         probe radius r_s (m); the source variance is r_s^2
// probe_grid          rows x cols probe sites, spaced `pitch` (m) from `origin` [x, y]
// scan.pattern        raster | interleaved | random | subsampled | custom
// scan.factor         interleave stride (interleaved)
// scan.seed           RNG seed (random, subsampled); default 0
// scan.ratio          fraction of sites visited, in (0, 1] (subsampled)
// scan.plan_file      plan table to replay (custom)
// scan.dwell          dwell time per site (s)
// scan.dead_time      idle time between sites (s)
// sim_grid            optional: pixel_side (default pitch/4), origin, width, height;
//                     omitted values cover the probe grid with pixels centred on probes
// frames.interval     frame time (s); frames at start + k*interval up to `end`
// frames.end          optional, defaults to the end of the scan
// output.format       rawf32 | pgm16 | csv
// threads             \"auto\" or a worker count; STEM_DIFFUSION_THREADS overrides it
";
    format!("{header}{body}\n")
}
