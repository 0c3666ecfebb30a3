use proptest::prelude::*;
use stem_diffusion::kernel::{
    phi, phi_at_probe, phi_off, phi_on, FieldQuery, PhysicalParams, ProbeEvent,
};
use stem_diffusion::Point2;

fn params_strategy() -> impl Strategy<Value = PhysicalParams> {
    (-1.0f64..1.0, -13.0f64..-10.0, -10.0f64..-8.0).prop_map(|(lq, ld, lr)| {
        PhysicalParams::new(10f64.powf(lq), 10f64.powf(ld), 10f64.powf(lr)).unwrap()
    })
}

/// Event at the origin starting at `start` with dwell `tau`.
fn event(start: f64, tau: f64) -> ProbeEvent {
    ProbeEvent::new(Point2::new(0.0, 0.0), start, tau).unwrap()
}

fn at(x: f64, y: f64, t: f64) -> FieldQuery {
    FieldQuery::new(Point2::new(x, y), t).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn non_negative_and_finite(p in params_strategy(), k in 0.0f64..5.0, frac in 0.0f64..4.0, ang in 0.0f64..6.3) {
        let tau = 1e-5;
        let ev = event(1e-6, tau);
        let rho = k * p.r_s();
        let q = at(rho * ang.cos(), rho * ang.sin(), 1e-6 + frac * tau);
        let v = phi(&q, &ev, &p);
        prop_assert!(v.is_finite() && v >= 0.0, "{v}");
    }

    #[test]
    fn radially_symmetric(p in params_strategy(), k in 0.05f64..5.0, frac in 0.01f64..4.0, ang in 0.0f64..6.3) {
        let tau = 1e-5;
        let ev = event(0.0, tau);
        let rho = k * p.r_s();
        let t = frac * tau;
        let a = phi(&at(rho, 0.0, t), &ev, &p);
        let b = phi(&at(rho * ang.cos(), rho * ang.sin(), t), &ev, &p);
        prop_assert!(rel(b, a) < 1e-12, "{a:e} vs {b:e}");
    }

    #[test]
    fn decreasing_with_distance(p in params_strategy(), k in 0.05f64..4.0, step in 0.01f64..1.0, frac in 0.01f64..4.0) {
        let tau = 1e-5;
        let ev = event(0.0, tau);
        let t = frac * tau;
        let near = phi(&at(k * p.r_s(), 0.0, t), &ev, &p);
        let far = phi(&at(k * (1.0 + step) * p.r_s(), 0.0, t), &ev, &p);
        prop_assert!(near >= far, "{near:e} < {far:e}");
        let centre = phi(&at(0.0, 0.0, t), &ev, &p);
        prop_assert!(centre >= near);
    }

    #[test]
    fn grows_during_dwell(p in params_strategy(), k in 0.0f64..4.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let tau = 1e-5;
        let ev = event(0.0, tau);
        let (t0, t1) = if a < b { (a * tau, b * tau) } else { (b * tau, a * tau) };
        let x = k * p.r_s();
        prop_assert!(phi(&at(x, 0.0, t0), &ev, &p) <= phi(&at(x, 0.0, t1), &ev, &p));
    }

    #[test]
    fn probe_centre_decays_after_dwell(p in params_strategy(), a in 1.0f64..10.0, b in 1.0f64..10.0) {
        let tau = 1e-5;
        let ev = event(0.0, tau);
        let (t0, t1) = if a < b { (a * tau, b * tau) } else { (b * tau, a * tau) };
        prop_assert!(phi_at_probe(t0, &ev, &p).unwrap() >= phi_at_probe(t1, &ev, &p).unwrap());
    }

    // Within ±1e−9·τ the branches legitimately drift apart by about
    // 1e−9·2Dτ/D_s near the probe, so the scales stay where 2Dτ/D_s ≲ 1e3.
    #[test]
    fn continuous_at_dwell_end(
        (p, tau) in (-13.0f64..-11.0, -9.0f64..-8.5, -6.0f64..-5.0).prop_map(|(ld, lr, lt)| {
            (PhysicalParams::new(1.0, 10f64.powf(ld), 10f64.powf(lr)).unwrap(), 10f64.powf(lt))
        }),
        k in 0.01f64..5.0,
    ) {
        let ev = event(0.5 * tau, tau);
        let x = k * p.r_s();
        let on = phi_on(&at(x, 0.0, ev.end() - 1e-9 * tau), &ev, &p).unwrap();
        let off = phi_off(&at(x, 0.0, ev.end() + 1e-9 * tau), &ev, &p).unwrap();
        prop_assert!(rel(off, on) <= 1e-6, "{on:e} vs {off:e}");
    }

    #[test]
    fn approaches_probe_value(p in params_strategy(), frac in 0.01f64..4.0) {
        let tau = 1e-5;
        let ev = event(0.0, tau);
        let t = frac * tau;
        let centre = phi_at_probe(t, &ev, &p).unwrap();
        let close = phi(&at(1e-6 * p.r_s(), 0.0, t), &ev, &p);
        prop_assert!(rel(close, centre) < 1e-9, "{close:e} vs {centre:e}");
    }

    #[test]
    fn zero_before_start(p in params_strategy(), k in 0.0f64..5.0, before in 1e-9f64..1e-5) {
        let ev = event(1e-5, 1e-5);
        prop_assert_eq!(phi(&at(k * p.r_s(), 0.0, 1e-5 - before), &ev, &p), 0.0);
    }
}

#[test]
fn regime_errors() {
    let p = PhysicalParams::new(1.0, 1e-12, 1e-9).unwrap();
    let ev = event(0.0, 1e-5);
    assert!(phi_on(&at(1e-9, 0.0, 2e-5), &ev, &p).is_err());
    assert!(phi_off(&at(1e-9, 0.0, 1e-5), &ev, &p).is_err());
    assert!(phi_on(&at(0.0, 0.0, 5e-6), &ev, &p).is_err());
    assert!(phi_at_probe(-1e-6, &event(1e-6, 1e-5), &p).is_err());
    assert!(PhysicalParams::new(1.0, -1e-12, 1e-9).is_err());
    assert!(PhysicalParams::new(1.0, 1e-12, 0.0).is_err());
    assert!(ProbeEvent::new(Point2::new(0.0, 0.0), 0.0, 0.0).is_err());
}
