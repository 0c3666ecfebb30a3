//! Exponential integral of order one.
//!
//! `E1(x) = ∫ₓ^∞ e⁻ᵘ/u du` is the only special function appearing in the
//! closed-form diffusion kernels. It is evaluated with the classical split:
//!
//! * `x ≤ 1`: power series `−γ − ln x + Σₙ (−1)ⁿ⁺¹ xⁿ / (n·n!)`
//! * `x > 1`: continued fraction `e⁻ˣ / (x + 1 − 1²/(x + 3 − 2²/(x + 5 − …)))`
//!   evaluated with the modified Lentz algorithm.
//!
//! The kernels never need `E1` alone but always a difference `E1(a) − E1(b)`,
//! which [`e1_diff`] evaluates without catastrophic cancellation.

use std::sync::OnceLock;

use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_60;

/// Arguments at or above this value give `E1(x)` below the smallest
/// subnormal double; [`e1`] returns exactly zero there.
pub const E1_UNDERFLOW: f64 = 740.0;

const SERIES_LIMIT: f64 = 1.0;
const TERM_TOL: f64 = 1e-16;
const MAX_ITER: usize = 200;
const FPMIN: f64 = 1e-300;

/// Degree at which the series for `x ≤ 1` is truncated: the first dropped
/// term is below `1/19! ≈ 8e−18` relative to the retained sum.
const SERIES_DEGREE: usize = 18;

/// `SERIES_COEF[n] = (−1)ⁿ⁺¹/(n·n!)` for `n ≥ 1`; index 0 is zero.
const SERIES_COEF: [f64; SERIES_DEGREE + 1] = {
    let mut coef = [0.0; SERIES_DEGREE + 1];
    let mut inv_fact = 1.0;
    let mut sign = 1.0;
    let mut n = 1;
    while n <= SERIES_DEGREE {
        inv_fact /= n as f64;
        coef[n] = sign * inv_fact / n as f64;
        sign = -sign;
        n += 1;
    }
    coef
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("E1 argument must be finite and non-negative, got {0}")]
    Domain(f64),
    #[error("E1 continued fraction failed to converge for x = {0}")]
    NoConvergence(f64),
}

/// Exponential integral `E1(x)` for `x ≥ 0`.
///
/// Returns `+∞` at zero and exactly `0.0` once the result underflows.
pub fn e1(x: f64) -> Result<f64, SpecialError> {
    if !x.is_finite() || x < 0.0 {
        return Err(SpecialError::Domain(x));
    }
    if x == 0.0 {
        return Ok(f64::INFINITY);
    }
    if x >= E1_UNDERFLOW {
        return Ok(0.0);
    }
    if x <= SERIES_LIMIT {
        Ok(e1_series(x))
    } else {
        e1_continued_fraction(x)
    }
}

fn e1_series(x: f64) -> f64 {
    -EULER_GAMMA - x.ln() + entire_part(x)
}

/// `Σₙ (−1)ⁿ⁺¹ xⁿ/(n·n!)`, i.e. `E1(x) + γ + ln x`, by Horner's rule.
fn entire_part(x: f64) -> f64 {
    let mut acc = 0.0;
    for &coef in SERIES_COEF.iter().rev() {
        acc = coef + x * acc;
    }
    acc
}

fn e1_continued_fraction(x: f64) -> Result<f64, SpecialError> {
    let mut b = x + 1.0;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < TERM_TOL {
            return Ok(h * (-x).exp());
        }
    }
    Err(SpecialError::NoConvergence(x))
}

/// `E1(a) − E1(b)` for `a, b ≥ 0`, accurate where the two terms nearly cancel.
///
/// Three routes are used:
/// * both arguments `≤ 1`: the logarithms of the two series are combined
///   analytically, `ln(b/a) + Σₙ (−1)ⁿ⁺¹ (aⁿ − bⁿ)/(n·n!)`, with `aⁿ − bⁿ`
///   built by a recurrence that never subtracts nearby numbers;
/// * arguments within one unit of each other (and not too far apart relative
///   to the smaller one): Gauss–Legendre quadrature of `∫ₐᵇ e⁻ᵘ/u du`;
/// * otherwise the two values are subtracted directly, which loses at most a
///   small constant factor.
///
/// `(0, 0)` is defined as `0`; a single zero argument gives `±∞`.
pub fn e1_diff(a: f64, b: f64) -> Result<f64, SpecialError> {
    if !a.is_finite() || a < 0.0 {
        return Err(SpecialError::Domain(a));
    }
    if !b.is_finite() || b < 0.0 {
        return Err(SpecialError::Domain(b));
    }
    Ok(e1_diff_unchecked(a, b))
}

/// [`e1_diff`] without argument validation, for hot loops whose arguments
/// are non-negative and finite by construction.
#[inline]
pub(crate) fn e1_diff_unchecked(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    sign * ordered_gap(lo, hi, || ((hi - lo) / lo).ln_1p())
}

/// `E1(lo) − E1(hi)` for `0 ≤ lo < hi` when the caller already knows
/// `ln(hi/lo)` (the kernels do: it depends only on the two spreads).
#[inline]
pub(crate) fn e1_gap_with_log(lo: f64, hi: f64, log_ratio: f64) -> f64 {
    if lo == hi {
        return 0.0;
    }
    ordered_gap(lo, hi, || log_ratio)
}

#[inline(always)]
fn ordered_gap(lo: f64, hi: f64, log_ratio: impl FnOnce() -> f64) -> f64 {
    if lo >= E1_UNDERFLOW {
        return 0.0;
    }
    if lo == 0.0 {
        return f64::INFINITY;
    }
    let width = hi - lo;
    if hi <= SERIES_LIMIT {
        log_ratio() - width * series_divided_difference(lo, hi)
    } else if width <= 1.0 && width <= 2.0 * lo {
        quadrature_gap(lo, width)
    } else {
        direct_gap(lo, hi)
    }
}

/// For `hi ≤ 1`, `E1(lo) − E1(hi) = ln(hi/lo) − (hi − lo)·Δ` where `Δ` is the
/// divided difference of the entire part of the series between `lo` and
/// `hi`. `Δ` comes out of a joint Horner pass over both arguments, so the
/// nearly equal series values are never subtracted.
fn series_divided_difference(lo: f64, hi: f64) -> f64 {
    let mut at_hi = 0.0;
    let mut divided = 0.0;
    for &coef in SERIES_COEF.iter().rev() {
        divided = lo * divided + at_hi;
        at_hi = coef + hi * at_hi;
    }
    divided
}

/// `∫_lo^{lo+width} e⁻ᵘ/u du = e^{−lo} ∫₀^width e⁻ˢ/(lo + s) ds`.
fn quadrature_gap(lo: f64, width: f64) -> f64 {
    // Nearest singularity of the integrand sits at s = −lo; its distance in
    // half-widths sets the Bernstein ellipse and so the rule size.
    let reach = 1.0 + 2.0 * lo / width;
    let rule = if reach >= 50.0 {
        gauss_legendre(8)
    } else if reach >= 5.0 {
        gauss_legendre(12)
    } else {
        gauss_legendre(20)
    };
    let half = 0.5 * width;
    let mut sum = 0.0;
    for (&node, &weight) in rule.nodes.iter().zip(&rule.weights) {
        let s = half * (node + 1.0);
        sum += weight * (-s).exp() / (lo + s);
    }
    (-lo).exp() * half * sum
}

fn direct_gap(lo: f64, hi: f64) -> f64 {
    let upper = if hi >= E1_UNDERFLOW {
        0.0
    } else if hi <= SERIES_LIMIT {
        e1_series(hi)
    } else {
        e1_cf_or_nan(hi)
    };
    let lower = if lo <= SERIES_LIMIT {
        e1_series(lo)
    } else {
        e1_cf_or_nan(lo)
    };
    lower - upper
}

fn e1_cf_or_nan(x: f64) -> f64 {
    e1_continued_fraction(x).unwrap_or(f64::NAN)
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn gauss_legendre(n: usize) -> &'static Rule {
    static R8: OnceLock<Rule> = OnceLock::new();
    static R12: OnceLock<Rule> = OnceLock::new();
    static R20: OnceLock<Rule> = OnceLock::new();
    let cell = match n {
        8 => &R8,
        12 => &R12,
        20 => &R20,
        _ => unreachable!("unsupported rule size {n}"),
    };
    cell.get_or_init(|| legendre_rule(n))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `Pₙ`.
fn legendre_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            deriv = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / deriv;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}
