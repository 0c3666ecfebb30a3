//! Cumulative field rendering.
//!
//! The field at pixel centre `r` and time `t` is the superposition
//! `ψ(r, t) = Σᵢ φᵢ(r, t)` over all events that have started by `t`.
//!
//! Work is split by pixel rows. Every row is produced by exactly one task
//! which walks the active events in plan order, so the floating-point
//! reduction order is fixed and frames are bitwise identical for any thread
//! count. Sequences render a batch of frames at a time, with `(frame, row)`
//! pairs as the parallel grain, and hand finished frames to the sink in
//! timestamp order from the calling thread.

use std::io;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Point2;
use crate::kernel::{at_probe_log, PhysicalParams};
use crate::scan::{ProbeGrid, ScanPlan};
use crate::special::e1_gap_with_log;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid simulation grid: {0}")]
    InvalidGrid(String),
    #[error("invalid frame schedule: {0}")]
    InvalidSchedule(String),
    #[error("render time must be finite and >= 0, got {0}")]
    InvalidTime(f64),
    #[error("frame has no pixels")]
    EmptyFrame,
    #[error("frame sink failed after {frames_written} complete frame(s): {source}")]
    Sink {
        frames_written: usize,
        #[source]
        source: io::Error,
    },
    #[error("could not build thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

/// Pixel lattice. Pixel `(col, row)` is sampled at its centre,
/// `origin + ((col + ½)·δs, (row + ½)·δs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    origin: Point2,
    pixel_side: f64,
    width: usize,
    height: usize,
}

impl SimulationGrid {
    pub fn new(
        origin: Point2,
        pixel_side: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, RenderError> {
        if !(pixel_side.is_finite() && pixel_side > 0.0) {
            return Err(RenderError::InvalidGrid(format!(
                "pixel_side must be > 0, got {pixel_side}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(RenderError::InvalidGrid(format!(
                "width and height must be >= 1, got {width}x{height}"
            )));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(RenderError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            origin,
            pixel_side,
            width,
            height,
        })
    }

    /// Grid spanning the probe lattice's scanned area with pixel centres
    /// landing on probe positions whenever `pitch` is a multiple of
    /// `pixel_side`.
    pub fn covering(probes: &ProbeGrid, pixel_side: f64) -> Result<Self, RenderError> {
        let half = 0.5 * pixel_side;
        let span = |n: usize| {
            ((n as f64 * probes.pitch() / pixel_side) - 1e-9)
                .ceil()
                .max(1.0)
        };
        Self::new(
            probes.origin().offset(-half, -half),
            pixel_side,
            span(probes.cols()) as usize,
            span(probes.rows()) as usize,
        )
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn pixel_side(&self) -> f64 {
        self.pixel_side
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> Point2 {
        self.origin.offset(
            (col as f64 + 0.5) * self.pixel_side,
            (row as f64 + 0.5) * self.pixel_side,
        )
    }

    /// Same grid cropped to at most `max_width × max_height` pixels.
    pub fn cropped(&self, max_width: usize, max_height: usize) -> Self {
        Self {
            width: self.width.min(max_width.max(1)),
            height: self.height.min(max_height.max(1)),
            ..*self
        }
    }
}

/// Frame `f` is rendered at `start + f·interval` for every `f` with
/// timestamp not past `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSchedule {
    interval: f64,
    start: f64,
    end: f64,
}

impl FrameSchedule {
    pub fn new(interval: f64, start: f64, end: f64) -> Result<Self, RenderError> {
        if !(interval.is_finite() && interval > 0.0) {
            return Err(RenderError::InvalidSchedule(format!(
                "interval must be > 0, got {interval}"
            )));
        }
        if !(start.is_finite() && start >= 0.0) {
            return Err(RenderError::InvalidSchedule(format!(
                "start must be >= 0, got {start}"
            )));
        }
        if !(end.is_finite() && end >= start) {
            return Err(RenderError::InvalidSchedule(format!(
                "end must be >= start ({start}), got {end}"
            )));
        }
        Ok(Self {
            interval,
            start,
            end,
        })
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// `⌊(end − start)/interval⌋ + 1`, tolerant to a last timestamp that
    /// misses `end` by binary rounding only.
    pub fn frame_count(&self) -> usize {
        ((self.end - self.start) / self.interval + 1e-9).floor() as usize + 1
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        self.start + frame as f64 * self.interval
    }
}

/// Cumulative concentration `ψ` (u/m²) on a pixel grid at one instant.
/// Values are row-major, `values[row·width + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFrame {
    pub timestamp: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Number of events started by `timestamp`.
    pub events_active: usize,
}

impl FieldFrame {
    pub fn zeros(grid: &SimulationGrid, timestamp: f64) -> Self {
        Self {
            timestamp,
            width: grid.width(),
            height: grid.height(),
            values: vec![0.0; grid.len()],
            events_active: 0,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Largest pixel value and its linear index; ties go to the lowest index.
pub fn max_field(frame: &FieldFrame) -> Result<(usize, f64), RenderError> {
    let mut it = frame.values.iter().copied().enumerate();
    let mut best = it.next().ok_or(RenderError::EmptyFrame)?;
    for (i, v) in it {
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

/// Per-frame view of one active event, with the frame-invariant pieces of
/// the kernel precomputed.
struct ActiveEvent {
    x: f64,
    y: f64,
    inv_wide: f64,
    inv_narrow: f64,
    /// `ln(wide/narrow)`: the at-probe value and the log term of every
    /// off-probe `E1` difference.
    log_ratio: f64,
}

struct FrameContext {
    timestamp: f64,
    events: Vec<ActiveEvent>,
}

impl FrameContext {
    fn new(plan: &ScanPlan, params: &PhysicalParams, t: f64) -> Self {
        let started = plan.events().partition_point(|e| e.start() <= t);
        let events = plan.events()[..started]
            .iter()
            .map(|ev| {
                let elapsed = t - ev.start();
                let narrow_elapsed = if t <= ev.end() {
                    0.0
                } else {
                    elapsed - ev.dwell()
                };
                let p = ev.position();
                ActiveEvent {
                    x: p.x,
                    y: p.y,
                    inv_wide: 1.0 / params.spread(elapsed),
                    inv_narrow: 1.0 / params.spread(narrow_elapsed),
                    log_ratio: at_probe_log(t, ev, params),
                }
            })
            .collect();
        Self {
            timestamp: t,
            events,
        }
    }
}

/// Fills one pixel row; returns the number of `E1` evaluations requested
/// (two per off-probe event–pixel pair).
fn render_row(
    grid: &SimulationGrid,
    ctx: &FrameContext,
    params: &PhysicalParams,
    row: usize,
    out: &mut [f64],
) -> u64 {
    let coincide_sq = params.coincidence_radius_sq();
    let prefactor = params.prefactor();
    let mut pairs = 0u64;
    for (col, slot) in out.iter_mut().enumerate() {
        let c = grid.pixel_center(col, row);
        let mut acc = 0.0;
        for ev in &ctx.events {
            let dx = c.x - ev.x;
            let dy = c.y - ev.y;
            let rho_sq = dx * dx + dy * dy;
            if rho_sq <= coincide_sq {
                acc += ev.log_ratio;
            } else {
                pairs += 1;
                acc += e1_gap_with_log(rho_sq * ev.inv_wide, rho_sq * ev.inv_narrow, ev.log_ratio);
            }
        }
        *slot = prefactor * acc;
    }
    2 * pairs
}

fn check_time(t: f64) -> Result<(), RenderError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(RenderError::InvalidTime(t))
    }
}

/// Renders `ψ` at time `t` using the ambient rayon pool.
pub fn render_frame(
    grid: &SimulationGrid,
    plan: &ScanPlan,
    params: &PhysicalParams,
    t: f64,
) -> Result<FieldFrame, RenderError> {
    render_frame_counted(grid, plan, params, t).map(|(frame, _)| frame)
}

fn render_frame_counted(
    grid: &SimulationGrid,
    plan: &ScanPlan,
    params: &PhysicalParams,
    t: f64,
) -> Result<(FieldFrame, u64), RenderError> {
    check_time(t)?;
    let ctx = FrameContext::new(plan, params, t);
    let mut frame = FieldFrame::zeros(grid, t);
    frame.events_active = ctx.events.len();
    let calls = frame
        .values
        .par_chunks_mut(grid.width())
        .enumerate()
        .map(|(row, out)| render_row(grid, &ctx, params, row, out))
        .sum();
    Ok((frame, calls))
}

/// Consumer of rendered frames, called in timestamp order from one thread.
/// `Send` so a sequence can be driven from inside a dedicated pool.
pub trait FrameSink: Send {
    fn write_frame(&mut self, index: usize, frame: &FieldFrame) -> io::Result<()>;

    /// Called once after the last frame.
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Discards frames; used for timing runs.
#[derive(Debug, Default)]
pub struct NullSink;

impl FrameSink for NullSink {
    fn write_frame(&mut self, _index: usize, _frame: &FieldFrame) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps every frame in memory.
#[derive(Debug, Default)]
pub struct CollectSink {
    pub frames: Vec<FieldFrame>,
}

impl FrameSink for CollectSink {
    fn write_frame(&mut self, _index: usize, frame: &FieldFrame) -> io::Result<()> {
        self.frames.push(frame.clone());
        Ok(())
    }
}

/// Location of the largest value seen over a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frame: usize,
    pub timestamp: f64,
    pub pixel: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub frames: usize,
    pub wall_time: Duration,
    /// `E1` evaluations requested by the kernel over the whole sequence.
    pub e1_calls: u64,
    pub peak: Option<Peak>,
}

/// Renders every frame of `schedule` and streams them to `sink`.
///
/// On a sink failure, the frames before the failing one have been handed to
/// the sink and `finish` is not called.
pub fn render_sequence(
    grid: &SimulationGrid,
    plan: &ScanPlan,
    params: &PhysicalParams,
    schedule: &FrameSchedule,
    sink: &mut dyn FrameSink,
) -> Result<RenderSummary, RenderError> {
    let started = Instant::now();
    let total = schedule.frame_count();
    let batch = (2 * rayon::current_num_threads()).max(1);
    let mut e1_calls = 0u64;
    let mut peak: Option<Peak> = None;
    let mut next = 0;
    while next < total {
        let stop = (next + batch).min(total);
        let contexts: Vec<FrameContext> = (next..stop)
            .map(|f| FrameContext::new(plan, params, schedule.timestamp(f)))
            .collect();
        let mut frames: Vec<FieldFrame> = contexts
            .iter()
            .map(|ctx| FieldFrame {
                events_active: ctx.events.len(),
                ..FieldFrame::zeros(grid, ctx.timestamp)
            })
            .collect();
        let tasks: Vec<(&FrameContext, usize, &mut [f64])> = contexts
            .iter()
            .zip(frames.iter_mut())
            .flat_map(|(ctx, frame)| {
                frame
                    .values
                    .chunks_mut(grid.width())
                    .enumerate()
                    .map(move |(row, out)| (ctx, row, out))
            })
            .collect();
        e1_calls += tasks
            .into_par_iter()
            .map(|(ctx, row, out)| render_row(grid, ctx, params, row, out))
            .sum::<u64>();
        for (offset, frame) in frames.iter().enumerate() {
            let index = next + offset;
            let (pixel, value) = max_field(frame)?;
            if peak.is_none_or(|p| value > p.value) {
                peak = Some(Peak {
                    frame: index,
                    timestamp: frame.timestamp,
                    pixel,
                    value,
                });
            }
            sink.write_frame(index, frame)
                .map_err(|source| RenderError::Sink {
                    frames_written: index,
                    source,
                })?;
        }
        next = stop;
    }
    sink.finish().map_err(|source| RenderError::Sink {
        frames_written: total,
        source,
    })?;
    Ok(RenderSummary {
        frames: total,
        wall_time: started.elapsed(),
        e1_calls,
        peak,
    })
}

/// Runs `f` inside a dedicated pool of `threads` workers (`0` = all cores).
pub fn with_threads<R: Send>(
    threads: usize,
    f: impl FnOnce() -> R + Send,
) -> Result<R, RenderError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    Ok(pool.install(f))
}

/// Total `E1` evaluations for rendering `plan` on `grid` at `t`.
pub fn count_e1_calls(
    grid: &SimulationGrid,
    plan: &ScanPlan,
    params: &PhysicalParams,
    t: f64,
) -> Result<u64, RenderError> {
    render_frame_counted(grid, plan, params, t).map(|(_, calls)| calls)
}
