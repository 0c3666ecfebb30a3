//! Runtime-scaling benchmark.
//!
//! Each cell renders a full raster sequence of `side × side` probes at one
//! frame interval into a [`NullSink`] and records the wall time. Frames are
//! never written, so the timing covers rendering only.
//!
//! Two normalisations are available:
//!
//! * [`Normalization::FixedPitch`] (default): pitch and pixel side stay
//!   fixed, so the scanned area, pixel count, scan duration and event count
//!   all grow with `N = side²`. Rendering cost then goes as
//!   `frames × events × pixels ∝ N³`.
//! * [`Normalization::FixedArea`]: the scanned area stays that of the
//!   largest side at the base pitch, pitch shrinks as `1/side`, and the
//!   pixel side stays fixed. Pixel count is constant so cost goes as `N²`.
//!
//! CSV columns (fixed): `n_probes,delta_t_s,delta_s_m,threads,wall_time_s,e1_calls`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::config::{ConfigError, PatternKind, SimConfig, SimGridConfig};
use crate::render::{self, NullSink};
use crate::sim::{self, SimError};
use crate::special::e1;

pub const CSV_HEADER: &str = "n_probes,delta_t_s,delta_s_m,threads,wall_time_s,e1_calls";
pub const MIN_SIZES: usize = 4;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least {MIN_SIZES} distinct probe grid sizes for a slope fit, got {0}")]
    TooFewSizes(usize),
    #[error("need at least one frame interval")]
    NoIntervals,
    #[error("benchmark cell {side}x{side}, delta_t {delta_t:e}: {source}")]
    Config {
        side: usize,
        delta_t: f64,
        #[source]
        source: ConfigError,
    },
    #[error(transparent)]
    Run(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    FixedPitch,
    FixedArea,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::FixedPitch => "fixed-pitch",
            Normalization::FixedArea => "fixed-area",
        })
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed-pitch" => Ok(Normalization::FixedPitch),
            "fixed-area" => Ok(Normalization::FixedArea),
            other => Err(format!(
                "unknown normalisation {other:?} (fixed-pitch|fixed-area)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    /// Probe grid sides; each cell uses `side × side` probes.
    pub sides: Vec<usize>,
    pub delta_ts: Vec<f64>,
    pub normalization: Normalization,
    /// Cells faster than this are repeated and averaged.
    pub min_cell_time: Duration,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            sides: vec![4, 8, 12, 16, 20],
            delta_ts: vec![1e-5, 2e-5],
            normalization: Normalization::FixedPitch,
            min_cell_time: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub n_probes: usize,
    pub delta_t: f64,
    pub delta_s: f64,
    pub threads: usize,
    /// Mean over `repeats` runs.
    pub wall_time: f64,
    pub e1_calls: u64,
    pub repeats: usize,
}

impl BenchmarkRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{},{:e},{}",
            self.n_probes, self.delta_t, self.delta_s, self.threads, self.wall_time, self.e1_calls
        )
    }
}

/// Least-squares slope of `ln(wall_time)` against `ln(n_probes)` for one frame interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub delta_t: f64,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub records: Vec<BenchmarkRecord>,
    pub fits: Vec<ScalingFit>,
    /// Measured mean cost of one `E1` evaluation (s).
    pub e1_call_cost: f64,
    pub normalization: Normalization,
}

impl BenchmarkResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{}", r.csv_row())?;
        }
        out.flush()
    }

    /// `wall(delta_t_a) / wall(delta_t_b)` at `n_probes`.
    pub fn wall_time_ratio(&self, n_probes: usize, delta_t_a: f64, delta_t_b: f64) -> Option<f64> {
        let find = |dt: f64| {
            self.records
                .iter()
                .find(|r| r.n_probes == n_probes && r.delta_t == dt)
                .map(|r| r.wall_time)
        };
        Some(find(delta_t_a)? / find(delta_t_b)?)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("normalisation {}\n", self.normalization);
        for f in &self.fits {
            s.push_str(&format!(
                "delta_t {:e} s: slope of ln(wall_time) vs ln(n_probes) = {:.3}\n",
                f.delta_t, f.slope
            ));
        }
        s.push_str(&format!("E1 cost {:.1} ns/call\n", self.e1_call_cost * 1e9));
        for r in &self.records {
            s.push_str(&format!(
                "n_probes {} delta_t {:e}: e1_calls x cost = {:.3} s of {:.3} s wall\n",
                r.n_probes,
                r.delta_t,
                r.e1_calls as f64 * self.e1_call_cost,
                r.wall_time
            ));
        }
        s
    }
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Mean wall time of one `e1` call over log-spaced arguments in `[1e−4, 30]`.
pub fn measure_e1_cost() -> f64 {
    let xs: Vec<f64> = (0..1024)
        .map(|i| 10f64.powf(-4.0 + 5.5 * i as f64 / 1023.0))
        .collect();
    let mut rounds = 0u64;
    let mut sink = 0.0;
    let started = Instant::now();
    while started.elapsed() < Duration::from_millis(50) {
        for &x in &xs {
            sink += e1(std::hint::black_box(x)).unwrap_or(0.0);
        }
        rounds += 1;
    }
    std::hint::black_box(sink);
    started.elapsed().as_secs_f64() / (rounds as f64 * xs.len() as f64)
}

/// Config for one benchmark cell: raster over `side × side` probes.
pub fn cell_config(
    base: &SimConfig,
    side: usize,
    delta_t: f64,
    normalization: Normalization,
    largest_side: usize,
) -> SimConfig {
    let mut cfg = base.clone();
    let base_pitch = base.probe_grid.pitch;
    let delta_s = base.sim_grid.pixel_side.unwrap_or(base_pitch / 4.0);
    cfg.probe_grid.rows = side;
    cfg.probe_grid.cols = side;
    if normalization == Normalization::FixedArea {
        cfg.probe_grid.pitch = base_pitch * largest_side as f64 / side as f64;
    }
    cfg.scan.pattern = PatternKind::Raster;
    cfg.scan.factor = None;
    cfg.scan.seed = None;
    cfg.scan.ratio = None;
    cfg.scan.plan_file = None;
    cfg.sim_grid = SimGridConfig {
        pixel_side: Some(delta_s),
        ..SimGridConfig::default()
    };
    if normalization == Normalization::FixedArea {
        // Same pixel lattice for every side: the one covering the largest grid.
        let span = base_pitch * largest_side as f64;
        let pixels = (span / delta_s - 1e-9).ceil().max(1.0) as usize;
        cfg.sim_grid.width = Some(pixels);
        cfg.sim_grid.height = Some(pixels);
        cfg.sim_grid.origin = Some(
            base.probe_grid
                .origin
                .offset(-0.5 * delta_s, -0.5 * delta_s),
        );
    }
    cfg.frames.interval = delta_t;
    cfg.frames.start = 0.0;
    cfg.frames.end = None;
    cfg
}

/// Runs every `(side, delta_t)` cell and fits the scaling slope per `delta_t`.
///
/// `progress` receives each record as it completes.
pub fn run_benchmark(
    base: &SimConfig,
    options: &BenchmarkOptions,
    mut progress: impl FnMut(&BenchmarkRecord),
) -> Result<BenchmarkResult, BenchError> {
    let mut sides = options.sides.clone();
    sides.sort_unstable();
    sides.dedup();
    if sides.len() < MIN_SIZES {
        return Err(BenchError::TooFewSizes(sides.len()));
    }
    if options.delta_ts.is_empty() {
        return Err(BenchError::NoIntervals);
    }
    let largest = *sides.last().expect("non-empty");
    let mut records = Vec::new();
    for &delta_t in &options.delta_ts {
        for &side in &sides {
            let cfg = cell_config(base, side, delta_t, options.normalization, largest);
            let setup = cfg.resolve().map_err(|source| BenchError::Config {
                side,
                delta_t,
                source,
            })?;
            let threads =
                render::with_threads(setup.threads.pool_size(), rayon::current_num_threads)
                    .map_err(SimError::from)?;
            let mut total = Duration::ZERO;
            let mut repeats = 0;
            let mut e1_calls = 0;
            while repeats == 0 || total < options.min_cell_time {
                let report = sim::run_with_sink(&setup, &mut NullSink)?;
                total += report.summary.wall_time;
                e1_calls = report.summary.e1_calls;
                repeats += 1;
            }
            let record = BenchmarkRecord {
                n_probes: side * side,
                delta_t,
                delta_s: setup.grid.pixel_side(),
                threads,
                wall_time: total.as_secs_f64() / repeats as f64,
                e1_calls,
                repeats,
            };
            progress(&record);
            records.push(record);
        }
    }
    let fits = options
        .delta_ts
        .iter()
        .map(|&delta_t| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.delta_t == delta_t)
                .map(|r| ((r.n_probes as f64).ln(), r.wall_time.ln()))
                .unzip();
            let (slope, intercept) = least_squares(&xs, &ys);
            ScalingFit {
                delta_t,
                slope,
                intercept,
            }
        })
        .collect();
    Ok(BenchmarkResult {
        records,
        fits,
        e1_call_cost: measure_e1_cost(),
        normalization: options.normalization,
    })
}
