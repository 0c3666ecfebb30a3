//! Single-probe diffusion field.
//!
//! A Gaussian probe of radius `r_s` switched on at `r_i` for a dwell `τ`
//! deposits diffusing species at rate `Q0`. With `ρ² = ‖r − r_i‖²`,
//! `Δ = t − t_i` and `c(s) = 2·D_s + 4·D·s`, the field is
//!
//! ```text
//! on  (t_i ≤ t ≤ t_i + τ):  Q0/(4πD) · [E1(ρ²/c(Δ)) − E1(ρ²/c(0))]
//! off (t > t_i + τ):        Q0/(4πD) · [E1(ρ²/c(Δ)) − E1(ρ²/c(Δ − τ))]
//! ```
//!
//! and at the probe position itself the `ρ → 0` limits
//! `Q0/(4πD) · ln((D_s + 2DΔ)/D_s)` and
//! `Q0/(4πD) · ln((D_s + 2DΔ)/(D_s + 2D(Δ − τ)))`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geom::Point2;
use crate::special::e1_diff_unchecked;

/// Query points closer than this fraction of `r_s` to the probe position use
/// the at-probe formula.
pub const COINCIDENCE_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("query time {time} is outside the {regime} interval of the event")]
    WrongRegime { time: f64, regime: &'static str },
    #[error("query point coincides with the probe position; use the at-probe formula")]
    CoincidentPoint,
}

fn check(
    name: &'static str,
    value: f64,
    ok: bool,
    reason: &'static str,
) -> Result<(), KernelError> {
    if ok {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Deposition rate `Q0` (u/s), diffusion coefficient `D` (m²/s) and probe
/// radius `r_s` (m). `D_s = r_s²` is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    q0: f64,
    d: f64,
    r_s: f64,
}

impl PhysicalParams {
    pub fn new(q0: f64, d: f64, r_s: f64) -> Result<Self, KernelError> {
        check(
            "q0",
            q0,
            q0.is_finite() && q0 > 0.0,
            "must be finite and > 0",
        )?;
        check("d", d, d.is_finite() && d > 0.0, "must be finite and > 0")?;
        check(
            "r_s",
            r_s,
            r_s.is_finite() && r_s > 0.0,
            "must be finite and > 0",
        )?;
        Ok(Self { q0, d, r_s })
    }

    /// Bypasses validation. Only meant for fault-injection in the
    /// verification tooling (e.g. a sign-flipped `Q0`).
    #[doc(hidden)]
    pub fn new_unchecked(q0: f64, d: f64, r_s: f64) -> Self {
        Self { q0, d, r_s }
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn r_s(&self) -> f64 {
        self.r_s
    }

    /// Squared probe radius `D_s = r_s²` (m²).
    pub fn d_s(&self) -> f64 {
        self.r_s * self.r_s
    }

    /// Common prefactor `Q0 / (4πD)`.
    pub fn prefactor(&self) -> f64 {
        self.q0 / (4.0 * PI * self.d)
    }

    /// Kernel variance scale `2·D_s + 4·D·elapsed` (m²).
    pub fn spread(&self, elapsed: f64) -> f64 {
        2.0 * self.d_s() + 4.0 * self.d * elapsed
    }

    /// Squared coincidence radius below which the at-probe formula applies.
    pub fn coincidence_radius_sq(&self) -> f64 {
        let r = COINCIDENCE_FRACTION * self.r_s;
        r * r
    }
}

/// One probe activation: position `r_i` (m), start `t_i` (s), dwell `τ_i` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeEvent {
    position: Point2,
    start: f64,
    dwell: f64,
}

impl ProbeEvent {
    pub fn new(position: Point2, start: f64, dwell: f64) -> Result<Self, KernelError> {
        check(
            "position.x",
            position.x,
            position.x.is_finite(),
            "must be finite",
        )?;
        check(
            "position.y",
            position.y,
            position.y.is_finite(),
            "must be finite",
        )?;
        check(
            "start",
            start,
            start.is_finite() && start >= 0.0,
            "must be finite and >= 0",
        )?;
        check(
            "dwell",
            dwell,
            dwell.is_finite() && dwell > 0.0,
            "must be finite and > 0",
        )?;
        Ok(Self {
            position,
            start,
            dwell,
        })
    }

    pub fn position(&self) -> Point2 {
        self.position
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    /// Time at which the beam switches off.
    pub fn end(&self) -> f64 {
        self.start + self.dwell
    }

    /// Beam-on interval `[start, end]`, both ends inclusive.
    pub fn is_on(&self, time: f64) -> bool {
        time >= self.start && time <= self.end()
    }
}

/// Observation point `r` (m) and time `t` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldQuery {
    pub point: Point2,
    pub time: f64,
}

impl FieldQuery {
    pub fn new(point: Point2, time: f64) -> Result<Self, KernelError> {
        check(
            "time",
            time,
            time.is_finite() && time >= 0.0,
            "must be finite and >= 0",
        )?;
        Ok(Self { point, time })
    }
}

fn is_coincident(query: &FieldQuery, event: &ProbeEvent, params: &PhysicalParams) -> bool {
    query.point.distance_sq(event.position) <= params.coincidence_radius_sq()
}

/// Beam-on field at a point away from the probe.
pub fn phi_on(
    query: &FieldQuery,
    event: &ProbeEvent,
    params: &PhysicalParams,
) -> Result<f64, KernelError> {
    if !event.is_on(query.time) {
        return Err(KernelError::WrongRegime {
            time: query.time,
            regime: "beam-on",
        });
    }
    if is_coincident(query, event, params) {
        return Err(KernelError::CoincidentPoint);
    }
    Ok(on_unchecked(query, event, params))
}

/// Beam-off field at a point away from the probe.
pub fn phi_off(
    query: &FieldQuery,
    event: &ProbeEvent,
    params: &PhysicalParams,
) -> Result<f64, KernelError> {
    if query.time <= event.end() {
        return Err(KernelError::WrongRegime {
            time: query.time,
            regime: "beam-off",
        });
    }
    if is_coincident(query, event, params) {
        return Err(KernelError::CoincidentPoint);
    }
    Ok(off_unchecked(query, event, params))
}

/// Field at the probe position itself, in either regime.
pub fn phi_at_probe(
    time: f64,
    event: &ProbeEvent,
    params: &PhysicalParams,
) -> Result<f64, KernelError> {
    if time.is_nan() || time < event.start {
        return Err(KernelError::WrongRegime {
            time,
            regime: "post-activation",
        });
    }
    Ok(params.prefactor() * at_probe_log(time, event, params))
}

/// Dispatcher over all regimes: zero before activation, the at-probe formula
/// on coincident points, otherwise beam-on (boundary inclusive) or beam-off.
pub fn phi(query: &FieldQuery, event: &ProbeEvent, params: &PhysicalParams) -> f64 {
    if query.time < event.start {
        0.0
    } else if is_coincident(query, event, params) {
        params.prefactor() * at_probe_log(query.time, event, params)
    } else if query.time <= event.end() {
        on_unchecked(query, event, params)
    } else {
        off_unchecked(query, event, params)
    }
}

fn on_unchecked(query: &FieldQuery, event: &ProbeEvent, params: &PhysicalParams) -> f64 {
    let rho_sq = query.point.distance_sq(event.position);
    let elapsed = query.time - event.start;
    let wide = params.spread(elapsed);
    let narrow = params.spread(0.0);
    params.prefactor() * e1_diff_unchecked(rho_sq / wide, rho_sq / narrow)
}

fn off_unchecked(query: &FieldQuery, event: &ProbeEvent, params: &PhysicalParams) -> f64 {
    let rho_sq = query.point.distance_sq(event.position);
    let elapsed = query.time - event.start;
    let since_off = elapsed - event.dwell;
    let wide = params.spread(elapsed);
    let narrow = params.spread(since_off);
    params.prefactor() * e1_diff_unchecked(rho_sq / wide, rho_sq / narrow)
}

/// `ln` part of the at-probe formula, without the `Q0/(4πD)` prefactor.
pub(crate) fn at_probe_log(time: f64, event: &ProbeEvent, params: &PhysicalParams) -> f64 {
    let elapsed = time - event.start;
    let d_s = params.d_s();
    let two_d = 2.0 * params.d;
    if time <= event.end() {
        (two_d * elapsed / d_s).ln_1p()
    } else {
        let since_off = elapsed - event.dwell;
        (two_d * event.dwell / (d_s + two_d * since_off)).ln_1p()
    }
}
