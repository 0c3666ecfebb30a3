//! Orchestration behind the `simulate` and `validate` subcommands.

use std::fmt::Write as _;
use std::io;
use std::time::Duration;

use thiserror::Error;

use crate::config::Setup;
use crate::kernel::{PhysicalParams, ProbeEvent};
use crate::render::{self, render_frame, FrameSink, RenderError, RenderSummary};
use crate::verify::{self, VerifyError, FICK_THRESHOLD, REFERENCE_MAX_EVENTS, REFERENCE_MAX_SIDE};

/// Relative tolerance of the mass check.
pub const MASS_TOLERANCE: f64 = 1e-4;
/// Per-pixel relative tolerance of the renderer-vs-reference check.
pub const REFERENCE_TOLERANCE: f64 = 1e-10;
pub const FICK_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot open output directory: {0}")]
    Output(#[source] io::Error),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Oracle(#[from] VerifyError),
}

/// What a `simulate` run produced.
#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub summary: RenderSummary,
    pub pixels: (usize, usize),
    pub events: usize,
}

impl SimulationReport {
    /// One-line human summary.
    pub fn summary_line(&self, setup: &Setup) -> String {
        let s = &self.summary;
        let mut line = format!(
            "frames {} events {} pixels {}x{} wall_time_s {:.3}",
            s.frames,
            self.events,
            self.pixels.0,
            self.pixels.1,
            s.wall_time.as_secs_f64()
        );
        match s.peak {
            Some(p) => {
                let (col, row) = (p.pixel % self.pixels.0, p.pixel / self.pixels.0);
                let at = setup.grid.pixel_center(col, row);
                let _ = write!(
                    line,
                    " peak {:e} u/m^2 at pixel ({col}, {row}) = ({:e}, {:e}) m, t = {:e} s (frame {})",
                    p.value, at.x, at.y, p.timestamp, p.frame
                );
            }
            None => line.push_str(" peak none"),
        }
        line
    }
}

/// Renders the configured sequence into `sink`.
pub fn run_with_sink(
    setup: &Setup,
    sink: &mut dyn FrameSink,
) -> Result<SimulationReport, SimError> {
    let summary = render::with_threads(setup.threads.pool_size(), || {
        render::render_sequence(
            &setup.grid,
            &setup.plan,
            &setup.params,
            &setup.schedule,
            sink,
        )
    })??;
    Ok(SimulationReport {
        summary,
        pixels: (setup.grid.width(), setup.grid.height()),
        events: setup.plan.len(),
    })
}

/// Renders the configured sequence to files in the configured format.
pub fn run_simulation(setup: &Setup) -> Result<SimulationReport, SimError> {
    let out = &setup.output;
    let mut sink = out
        .format
        .sink(&out.directory, &out.stem)
        .map_err(SimError::Output)?;
    run_with_sink(setup, sink.as_mut())
}

/// Test hooks that deliberately break the kernel under validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Corruption {
    /// Evaluate the kernel with `−Q0` while expectations keep `+Q0`.
    pub flip_q0_sign: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
    pub wall_time: Duration,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {}: {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        let _ = writeln!(
            s,
            "validate {} ({} checks, {:.3} s)",
            if self.pass() { "PASS" } else { "FAIL" },
            self.checks.len(),
            self.wall_time.as_secs_f64()
        );
        s
    }
}

/// Runs the oracle suite against the configured parameters and plan.
///
/// The residual and mass checks use the middle event of the plan. The
/// reference comparison crops the grid and plan to the oracle limits and
/// compares at the middle of that event's dwell, at its end, and after the
/// last cropped event.
pub fn validate(
    setup: &Setup,
    seed: u64,
    corruption: Corruption,
) -> Result<ValidationReport, SimError> {
    let started = std::time::Instant::now();
    let honest = setup.params;
    let kernel_params = if corruption.flip_q0_sign {
        PhysicalParams::new_unchecked(-honest.q0(), honest.d(), honest.r_s())
    } else {
        honest
    };
    let mut report = ValidationReport {
        checks: Vec::new(),
        notes: Vec::new(),
        wall_time: Duration::ZERO,
    };
    let events = setup.plan.events();
    if events.is_empty() {
        report.notes.push("no events: checks pass vacuously".into());
        for name in ["fick_residual", "mass_integral", "reference_frame"] {
            report.checks.push(CheckResult {
                name,
                pass: true,
                detail: "no events".into(),
            });
        }
        report.wall_time = started.elapsed();
        return Ok(report);
    }
    let event = &events[events.len() / 2];

    let samples = verify::random_fick_samples(event, &kernel_params, FICK_SAMPLES, seed);
    let fick = verify::fick_residual(event, &kernel_params, &samples, FICK_THRESHOLD);
    report.checks.push(CheckResult {
        name: "fick_residual",
        pass: fick.pass,
        detail: format!(
            "{} samples, {} rejected, max relative residual {:e} (threshold {:e})",
            fick.points.len(),
            fick.rejected.len(),
            fick.max_residual,
            fick.threshold
        ),
    });

    report
        .checks
        .push(mass_check(event, &honest, &kernel_params)?);
    report.checks.push(reference_check(
        setup,
        event,
        &kernel_params,
        &mut report.notes,
    )?);
    report.wall_time = started.elapsed();
    Ok(report)
}

fn mass_check(
    event: &ProbeEvent,
    honest: &PhysicalParams,
    kernel: &PhysicalParams,
) -> Result<CheckResult, SimError> {
    let times = [
        event.start() + 0.5 * event.dwell(),
        event.end() + 2.0 * event.dwell(),
    ];
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for t in times {
        let expected = verify::expected_mass(event, honest, t);
        let radius = verify::mass_truncation_radius(event, honest, t, verify::MASS_TAIL_FRACTION);
        let mass = verify::mass_integral(event, kernel, t, radius)?;
        let rel = ((mass - expected) / expected).abs();
        worst = worst.max(rel);
        let _ = write!(detail, "t={t:e}: {mass:e} vs {expected:e} (rel {rel:e}); ");
    }
    detail.push_str(&format!("tolerance {MASS_TOLERANCE:e}"));
    Ok(CheckResult {
        name: "mass_integral",
        pass: worst <= MASS_TOLERANCE,
        detail,
    })
}

fn reference_check(
    setup: &Setup,
    event: &ProbeEvent,
    params: &PhysicalParams,
    notes: &mut Vec<String>,
) -> Result<CheckResult, SimError> {
    let grid = setup.grid.cropped(REFERENCE_MAX_SIDE, REFERENCE_MAX_SIDE);
    let plan = setup.plan.truncated(REFERENCE_MAX_EVENTS);
    if grid != setup.grid || plan.len() != setup.plan.len() {
        notes.push(format!(
            "reference comparison cropped to {}x{} pixels and {} events",
            grid.width(),
            grid.height(),
            plan.len()
        ));
    }
    let mut times = vec![plan.end_time() + event.dwell()];
    if event.end() <= plan.end_time() {
        times.insert(0, event.end());
        times.insert(0, event.start() + 0.5 * event.dwell());
    }
    let mut worst = 0.0f64;
    for &t in &times {
        let fast = render_frame(&grid, &plan, params, t)?;
        let slow = verify::reference_frame(&grid, &plan, params, t)?;
        worst = worst.max(verify::max_relative_difference(&fast, &slow));
    }
    Ok(CheckResult {
        name: "reference_frame",
        pass: worst <= REFERENCE_TOLERANCE,
        detail: format!(
            "{} timestamps, max relative pixel difference {worst:e} (tolerance {REFERENCE_TOLERANCE:e})",
            times.len()
        ),
    })
}
