//! Closed-form simulation of the damage-diffusion field left behind by a
//! scanning electron probe.
//!
//! * [`special`]: exponential integral `E1` and a cancellation-safe difference.
//! * [`kernel`]: single-probe field in the beam-on, beam-off and at-probe regimes.
//! * [`scan`]: raster, interleaved, random and subsampled probe trajectories.
//! * [`render`]: parallel, deterministic rendering of the cumulative field.
//! * [`output`]: frame file formats.
//! * [`verify`]: independent oracles (quadrature, PDE residual, mass, brute force).
//! * [`config`], [`sim`], [`bench`](mod@bench): configuration, orchestration and the
//!   runtime-scaling harness behind the `stem-diffusion` binary.

// Reference constants keep every digit of their source.
#![allow(clippy::excessive_precision)]

pub mod bench;
pub mod config;
pub mod geom;
pub mod kernel;
pub mod output;
pub mod render;
pub mod scan;
pub mod sim;
pub mod special;
pub mod verify;

pub use config::SimConfig;
pub use geom::Point2;
pub use kernel::{phi, phi_at_probe, phi_off, phi_on, FieldQuery, PhysicalParams, ProbeEvent};
pub use render::{
    max_field, render_frame, render_sequence, FieldFrame, FrameSchedule, FrameSink, SimulationGrid,
};
pub use scan::{interleaved, random_scan, raster, subsampled, ProbeGrid, ScanPattern, ScanPlan};
pub use special::{e1, e1_diff};
