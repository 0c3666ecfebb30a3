//! Independent numerical oracles for the closed-form model.
//!
//! Nothing in here calls into the `E1` implementation or the optimised
//! renderer: `E1` is re-derived by adaptive Gauss–Kronrod quadrature of its
//! defining integral, frames are rebuilt by a plain pixels × events loop over
//! the kernel dispatcher, the diffusion equation is checked by finite
//! differences, and deposited mass by radial quadrature.
//!
//! Everything here is single-threaded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::Point2;
use crate::kernel::{phi, FieldQuery, PhysicalParams, ProbeEvent};
use crate::render::{FieldFrame, SimulationGrid};
use crate::scan::ScanPlan;

/// Largest grid side the brute-force reference accepts.
pub const REFERENCE_MAX_SIDE: usize = 64;
/// Largest plan the brute-force reference accepts.
pub const REFERENCE_MAX_EVENTS: usize = 256;
/// Default acceptance threshold for the relative diffusion-equation residual.
pub const FICK_THRESHOLD: f64 = 1e-3;
/// Largest admissible analytic tail bound, relative to the expected mass.
pub const MASS_TAIL_FRACTION: f64 = 1e-6;

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {segments} segments")]
    NoConvergence {
        estimate: f64,
        error: f64,
        segments: usize,
    },
    #[error("oracle argument out of range: {0}")]
    Domain(String),
    #[error("truncation radius too small: tail bound {tail:e} exceeds {limit:e}")]
    TruncationTooSmall { tail: f64, limit: f64 },
    #[error("reference oracle limited to {max_side}x{max_side} pixels and {max_events} events, got {width}x{height} and {events}")]
    ScaleGuard {
        max_side: usize,
        max_events: usize,
        width: usize,
        height: usize,
        events: usize,
    },
}

// 15-point Kronrod nodes on [0, 1] (symmetric), with the embedded 7-point
// Gauss weights at the odd positions.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
/// Stops when the summed error estimate is below
/// `max(abs_tol, rel_tol·|estimate|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, VerifyError> {
    let (value, error) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !(total.is_finite() && total_err.is_finite()) {
            return Err(VerifyError::NoConvergence {
                estimate: total,
                error: total_err,
                segments: heap.len(),
            });
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(VerifyError::NoConvergence {
                estimate: total,
                error: total_err,
                segments: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = kronrod15(&f, worst.a, mid);
        let (rv, re) = kronrod15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        // Re-summing avoids drift from the running updates.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// `E1(x)` straight from its defining integral.
///
/// With `u = x·eˢ` the integral becomes `∫₀^∞ exp(−x·eˢ) ds`, which is
/// truncated where the integrand drops below `e⁻⁷⁶⁰`. Tolerance is relative
/// `1e−12`; an absolute floor would swamp the tiny values at large `x`.
pub fn quadrature_e1(x: f64) -> Result<f64, VerifyError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(VerifyError::Domain(format!(
            "quadrature_e1 needs x > 0, got {x}"
        )));
    }
    let upper = (760.0 / x).ln().max(1.0);
    integrate(|s| (-x * s.exp()).exp(), 0.0, upper, 1e-300, 1e-12)
}

/// Why a residual sample was not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    CoincidentPoint,
    RegimeBoundary,
}

/// Finite-difference check of `∂φ/∂t = D∇²φ (+ source during dwell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub points: Vec<FieldQuery>,
    pub residuals: Vec<f64>,
    pub rejected: Vec<(FieldQuery, RejectReason)>,
    pub max_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ResidualReport {
    /// Plain-text form: a summary line, then one line per sample.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "fick_residual samples {} rejected {} max_residual {:e} threshold {:e} pass {}",
            self.points.len(),
            self.rejected.len(),
            self.max_residual,
            self.threshold,
            self.pass
        );
        for (q, r) in self.points.iter().zip(&self.residuals) {
            let _ = writeln!(
                s,
                "sample {:e} {:e} {:e} residual {:e}",
                q.point.x, q.point.y, q.time, r
            );
        }
        for (q, why) in &self.rejected {
            let _ = writeln!(
                s,
                "rejected {:e} {:e} {:e} {:?}",
                q.point.x, q.point.y, q.time, why
            );
        }
        s
    }

    /// Reads `(max_residual, threshold, pass)` back from [`to_text`](Self::to_text).
    pub fn parse_summary(text: &str) -> Option<(f64, f64, bool)> {
        let words: Vec<&str> = text.lines().next()?.split_whitespace().collect();
        let field = |key: &str| {
            words
                .iter()
                .position(|w| *w == key)
                .and_then(|i| words.get(i + 1))
                .copied()
        };
        Some((
            field("max_residual")?.parse().ok()?,
            field("threshold")?.parse().ok()?,
            field("pass")?.parse().ok()?,
        ))
    }
}

// Fourth-order central stencils.
fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

/// Step actually realised by `x + h` in floating point.
fn realised(x: f64, h: f64) -> f64 {
    (x + h) - x
}

/// Gaussian deposition rate density `Q0/(2π·D_s)·exp(−ρ²/(2·D_s))` (u/(m²·s)).
pub fn source_density(rho_sq: f64, params: &PhysicalParams) -> f64 {
    let d_s = params.d_s();
    params.q0() / (2.0 * PI * d_s) * (-rho_sq / (2.0 * d_s)).exp()
}

fn residual_at(
    q: &FieldQuery,
    event: &ProbeEvent,
    params: &PhysicalParams,
) -> Result<f64, RejectReason> {
    let rho_sq = q.point.distance_sq(event.position());
    if rho_sq <= params.coincidence_radius_sq() {
        return Err(RejectReason::CoincidentPoint);
    }
    let t = q.time;
    let (start, end) = (event.start(), event.end());
    // Spatial step follows the narrowest kernel component still active; the
    // time step stays within the current regime.
    let (narrow, dt, source) = if t < start {
        (params.spread(0.0), 1e-3 * (start - t), 0.0)
    } else if t > start && t < end {
        let dt = 1e-3 * (t - start);
        if t + 2.0 * dt >= end {
            return Err(RejectReason::RegimeBoundary);
        }
        (params.spread(0.0), dt, source_density(rho_sq, params))
    } else if t > end {
        let since_off = t - end;
        (params.spread(since_off), 1e-3 * since_off, 0.0)
    } else {
        return Err(RejectReason::RegimeBoundary);
    };
    let h = 1e-3 * narrow.sqrt();
    let (x, y) = (q.point.x, q.point.y);
    let at = |px: f64, py: f64, pt: f64| {
        phi(
            &FieldQuery {
                point: Point2::new(px, py),
                time: pt,
            },
            event,
            params,
        )
    };
    let hx = realised(x, h);
    let hy = realised(y, h);
    let kt = realised(t, dt);
    if hx == 0.0 || hy == 0.0 || kt == 0.0 {
        return Err(RejectReason::RegimeBoundary);
    }
    let dphi_dt = d1(|s| at(x, y, s), t, kt);
    let lap = d2(|s| at(s, y, t), x, hx) + d2(|s| at(x, s, t), y, hy);
    let d = params.d();
    let scale = dphi_dt.abs().max((d * lap).abs()).max(1e-300);
    Ok((dphi_dt - d * lap - source).abs() / scale)
}

/// Relative residual of the diffusion equation at each sample.
///
/// After the beam switches off the field obeys `∂φ/∂t = D∇²φ`. During the
/// dwell the probe keeps injecting species, so the Gaussian deposition rate
/// ([`source_density`]) is added to the right-hand side. Samples on the
/// probe position or too close to a regime change for the stencil are
/// rejected and listed.
pub fn fick_residual(
    event: &ProbeEvent,
    params: &PhysicalParams,
    samples: &[FieldQuery],
    threshold: f64,
) -> ResidualReport {
    let mut report = ResidualReport {
        points: Vec::new(),
        residuals: Vec::new(),
        rejected: Vec::new(),
        max_residual: 0.0,
        threshold,
        pass: true,
    };
    for q in samples {
        match residual_at(q, event, params) {
            Ok(r) => {
                report.points.push(*q);
                report.residuals.push(r);
                if r.is_nan() || r > report.max_residual {
                    report.max_residual = r;
                }
            }
            Err(why) => report.rejected.push((*q, why)),
        }
    }
    report.pass = report.max_residual <= threshold;
    report
}

/// Random residual samples around `event`: half inside the dwell, half
/// after it, at distances of 0.1–3 kernel widths.
pub fn random_fick_samples(
    event: &ProbeEvent,
    params: &PhysicalParams,
    count: usize,
    seed: u64,
) -> Vec<FieldQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = event.dwell();
    (0..count)
        .map(|i| {
            let elapsed = if i % 2 == 0 {
                tau * rng.gen_range(0.05..0.9)
            } else {
                tau * (1.0 + 10f64.powf(rng.gen_range(-2.0..1.5)))
            };
            let width = params.spread(elapsed).sqrt();
            let rho = width * rng.gen_range(0.1..3.0);
            let angle = rng.gen_range(0.0..2.0 * PI);
            FieldQuery {
                point: event
                    .position()
                    .offset(rho * angle.cos(), rho * angle.sin()),
                time: event.start() + elapsed,
            }
        })
        .collect()
}

/// Mass the model says has been deposited by time `t`: `Q0·min(Δ, τ)`.
pub fn expected_mass(event: &ProbeEvent, params: &PhysicalParams, t: f64) -> f64 {
    let elapsed = (t - event.start()).clamp(0.0, event.dwell());
    params.q0() * elapsed
}

/// Analytic upper bound on the mass outside radius `radius`, from
/// `φ ≤ Q0/(4πD)·E1(ρ²/c)` and `∫_y^∞ E1 ≤ e^{−y}`.
pub fn mass_tail_bound(event: &ProbeEvent, params: &PhysicalParams, t: f64, radius: f64) -> f64 {
    if t <= event.start() {
        return 0.0;
    }
    let wide = params.spread(t - event.start());
    params.q0().abs() * wide * (-radius * radius / wide).exp() / (4.0 * params.d())
}

/// Smallest radius whose tail bound is `fraction` of the expected mass,
/// padded by one kernel variance.
pub fn mass_truncation_radius(
    event: &ProbeEvent,
    params: &PhysicalParams,
    t: f64,
    fraction: f64,
) -> f64 {
    let wide = params.spread((t - event.start()).max(0.0));
    let deposited = expected_mass(event, params, t).abs() / params.q0().abs();
    if deposited <= 0.0 {
        return wide.sqrt();
    }
    let ratio = wide / (4.0 * params.d() * fraction * deposited);
    (wide * (ratio.ln().max(0.0) + 1.0)).sqrt()
}

/// `2π ∫₀^R φ(ρ) ρ dρ`, integrated in `s = ρ²` where the kernel is smooth.
pub fn mass_integral(
    event: &ProbeEvent,
    params: &PhysicalParams,
    t: f64,
    truncation_radius: f64,
) -> Result<f64, VerifyError> {
    if !(truncation_radius.is_finite() && truncation_radius > 0.0) {
        return Err(VerifyError::Domain(format!(
            "truncation radius must be > 0, got {truncation_radius}"
        )));
    }
    if t <= event.start() {
        return Ok(0.0);
    }
    let expected = expected_mass(event, params, t).abs();
    let tail = mass_tail_bound(event, params, t, truncation_radius);
    let limit = MASS_TAIL_FRACTION * expected;
    if tail >= limit {
        return Err(VerifyError::TruncationTooSmall { tail, limit });
    }
    let origin = event.position();
    let integrand = |s: f64| {
        let q = FieldQuery {
            point: origin.offset(s.max(0.0).sqrt(), 0.0),
            time: t,
        };
        PI * phi(&q, event, params)
    };
    integrate(
        integrand,
        0.0,
        truncation_radius * truncation_radius,
        1e-300,
        1e-10,
    )
}

/// Brute-force `ψ`: every pixel, every event, straight through the kernel
/// dispatcher, summed in plan order.
pub fn reference_frame(
    grid: &SimulationGrid,
    plan: &ScanPlan,
    params: &PhysicalParams,
    t: f64,
) -> Result<FieldFrame, VerifyError> {
    if grid.width() > REFERENCE_MAX_SIDE
        || grid.height() > REFERENCE_MAX_SIDE
        || plan.len() > REFERENCE_MAX_EVENTS
    {
        return Err(VerifyError::ScaleGuard {
            max_side: REFERENCE_MAX_SIDE,
            max_events: REFERENCE_MAX_EVENTS,
            width: grid.width(),
            height: grid.height(),
            events: plan.len(),
        });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(VerifyError::Domain(format!("time must be >= 0, got {t}")));
    }
    let mut values = Vec::with_capacity(grid.len());
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let q = FieldQuery {
                point: grid.pixel_center(col, row),
                time: t,
            };
            let mut sum = 0.0;
            for ev in plan.events() {
                sum += phi(&q, ev, params);
            }
            values.push(sum);
        }
    }
    Ok(FieldFrame {
        timestamp: t,
        width: grid.width(),
        height: grid.height(),
        values,
        events_active: plan.events().iter().filter(|e| e.start() <= t).count(),
    })
}

/// Largest per-pixel relative difference between two frames of equal shape.
/// Pixels where both values are zero count as equal.
pub fn max_relative_difference(a: &FieldFrame, b: &FieldFrame) -> f64 {
    assert_eq!(
        (a.width, a.height),
        (b.width, b.height),
        "frame shapes differ"
    );
    a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| {
            if x == y {
                0.0
            } else {
                (x - y).abs() / y.abs().max(x.abs()).max(1e-300)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::{raster, ProbeGrid, ScanPattern};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn integrate_polynomial_and_exponential() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-300, 1e-14).unwrap();
        assert!(rel(v, 9.0) < 1e-14);
        let v = integrate(|x: f64| (-x).exp(), 0.0, 50.0, 1e-300, 1e-13).unwrap();
        assert!(rel(v, 1.0 - (-50f64).exp()) < 1e-13);
        // ∫₀¹ ln(x) dx = −1, endpoint singularity
        let v = integrate(|x: f64| x.ln(), 0.0, 1.0, 1e-300, 1e-10).unwrap();
        assert!(rel(v, -1.0) < 1e-9);
    }

    #[test]
    fn integrate_reports_non_convergence() {
        let err = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-300, 1e-12).unwrap_err();
        assert!(matches!(err, VerifyError::NoConvergence { .. }));
    }

    #[test]
    fn quadrature_e1_values() {
        // 30-digit references
        let v = quadrature_e1(1.0).unwrap();
        assert!(rel(v, 0.219_383_934_395_520_273_677) < 1e-12, "{v}");
        let v = quadrature_e1(1e-8).unwrap();
        assert!(rel(v, 17.843_465_089_050_832_586_537) < 1e-12, "{v}");
        let v = quadrature_e1(50.0).unwrap();
        assert!(v < 1e-23);
        assert!(rel(v, 3.783_264_029_550_459_018_699e-24) < 1e-11, "{v}");
        assert!(quadrature_e1(0.1).unwrap() > quadrature_e1(0.2).unwrap());
        assert!(quadrature_e1(0.0).is_err());
        assert!(quadrature_e1(-1.0).is_err());
    }

    #[test]
    fn quadrature_e1_agrees_with_closed_form_implementation() {
        for x in [1e-6, 0.3, 0.999, 1.001, 3.0, 12.0, 40.0] {
            let q = quadrature_e1(x).unwrap();
            let s = crate::special::e1(x).unwrap();
            assert!(rel(s, q) < 1e-10, "x = {x}: {s} vs {q}");
        }
    }

    fn unit_event() -> (ProbeEvent, PhysicalParams) {
        (
            ProbeEvent::new(Point2::new(0.0, 0.0), 0.0, 1.0).unwrap(),
            PhysicalParams::new(1.0, 1.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn fick_well_separated_samples() {
        let (ev, p) = unit_event();
        let samples = [
            FieldQuery::new(Point2::new(2.0, 0.0), 0.5).unwrap(),
            FieldQuery::new(Point2::new(1.2, 1.6), 3.0).unwrap(),
        ];
        let report = fick_residual(&ev, &p, &samples, FICK_THRESHOLD);
        assert!(report.pass, "{}", report.to_text());
        assert_eq!(report.residuals.len(), 2);
    }

    #[test]
    fn fick_before_start_is_zero() {
        let ev = ProbeEvent::new(Point2::new(0.0, 0.0), 2.0, 1.0).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0).unwrap();
        let q = FieldQuery::new(Point2::new(1.0, 0.0), 1.0).unwrap();
        let report = fick_residual(&ev, &p, &[q], FICK_THRESHOLD);
        assert_eq!(report.residuals, vec![0.0]);
    }

    #[test]
    fn fick_rejects_boundary_and_coincident() {
        let (ev, p) = unit_event();
        let samples = [
            FieldQuery::new(Point2::new(0.0, 0.0), 0.5).unwrap(),
            FieldQuery::new(Point2::new(1.0, 0.0), 1.0).unwrap(),
            FieldQuery::new(Point2::new(1.0, 0.0), 0.0).unwrap(),
            FieldQuery::new(Point2::new(1.0, 0.0), 0.9999).unwrap(),
        ];
        let report = fick_residual(&ev, &p, &samples, FICK_THRESHOLD);
        assert!(report.points.is_empty());
        let reasons: Vec<RejectReason> = report.rejected.iter().map(|r| r.1).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::CoincidentPoint,
                RejectReason::RegimeBoundary,
                RejectReason::RegimeBoundary,
                RejectReason::RegimeBoundary
            ]
        );
    }

    #[test]
    fn dwell_residual_accounts_for_source() {
        // The dwell-time field is not source-free: dropping the source term
        // must show up as a large residual near the probe.
        let (ev, p) = unit_event();
        let q = FieldQuery::new(Point2::new(1.0, 0.5), 0.5).unwrap();
        let rho_sq = q.point.distance_sq(ev.position());
        let with_source = fick_residual(&ev, &p, &[q], FICK_THRESHOLD).max_residual;
        assert!(with_source < 1e-6);
        assert!(source_density(rho_sq, &p) > 0.01);
    }

    #[test]
    fn report_text_summary() {
        let (ev, p) = unit_event();
        let samples = random_fick_samples(&ev, &p, 10, 3);
        let report = fick_residual(&ev, &p, &samples, FICK_THRESHOLD);
        let (max, thr, pass) = ResidualReport::parse_summary(&report.to_text()).unwrap();
        assert_eq!(max, report.max_residual);
        assert_eq!(thr, FICK_THRESHOLD);
        assert_eq!(pass, report.pass);
    }

    #[test]
    fn mass_examples() {
        let (ev, p) = unit_event();
        for t in [0.4, 1.0, 5.0] {
            let r = mass_truncation_radius(&ev, &p, t, 1e-8);
            let m = mass_integral(&ev, &p, t, r).unwrap();
            let want = expected_mass(&ev, &p, t);
            assert!(rel(m, want) < 1e-6, "t = {t}: {m} vs {want}");
        }
        assert_eq!(mass_integral(&ev, &p, 0.0, 10.0).unwrap(), 0.0);
        assert!(matches!(
            mass_integral(&ev, &p, 0.5, 1.0),
            Err(VerifyError::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn reference_frame_symmetry_and_guard() {
        let p = PhysicalParams::new(1.0, 1e-12, 1e-9).unwrap();
        let g = SimulationGrid::new(Point2::new(-4e-9, -4e-9), 1e-9, 8, 8).unwrap();
        let ev = ProbeEvent::new(Point2::new(0.0, 0.0), 0.0, 1e-5).unwrap();
        let plan = ScanPlan::from_events(vec![ev], ScanPattern::Custom, 1e-5, 0.0).unwrap();
        let f = reference_frame(&g, &plan, &p, 5e-6).unwrap();
        let quad = [f.get(3, 3), f.get(4, 3), f.get(3, 4), f.get(4, 4)];
        for v in quad {
            assert!(rel(v, quad[0]) < 1e-12);
        }
        let empty = reference_frame(&g, &ScanPlan::empty(), &p, 1.0).unwrap();
        assert!(empty.values.iter().all(|&v| v == 0.0));

        let big = SimulationGrid::new(Point2::default(), 1e-9, 65, 8).unwrap();
        assert!(matches!(
            reference_frame(&big, &plan, &p, 1.0),
            Err(VerifyError::ScaleGuard { .. })
        ));
        let probes = ProbeGrid::new(17, 16, 1e-9, Point2::default()).unwrap();
        let long = raster(&probes, 1e-5, 0.0).unwrap();
        assert!(reference_frame(&g, &long, &p, 1.0).is_err());
    }
}
