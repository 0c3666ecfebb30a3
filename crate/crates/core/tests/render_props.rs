use proptest::prelude::*;
use stem_diffusion::kernel::{phi_at_probe, PhysicalParams, ProbeEvent};
use stem_diffusion::render::{
    render_frame, render_sequence, with_threads, CollectSink, FrameSchedule, SimulationGrid,
};
use stem_diffusion::scan::{self, ProbeGrid, ScanPattern, ScanPlan};
use stem_diffusion::verify::{max_relative_difference, reference_frame};
use stem_diffusion::Point2;

const DWELL: f64 = 1e-5;

fn params() -> PhysicalParams {
    PhysicalParams::new(1.0, 1e-12, 1e-9).unwrap()
}

fn probes(side: usize) -> ProbeGrid {
    ProbeGrid::new(side, side, 2e-9, Point2::default()).unwrap()
}

fn split(plan: &ScanPlan, at: usize) -> (ScanPlan, ScanPlan) {
    let (a, b) = plan.events().split_at(at);
    (
        ScanPlan::from_events(a.to_vec(), ScanPattern::Custom, DWELL, 0.0).unwrap(),
        ScanPlan::from_events(b.to_vec(), ScanPattern::Custom, DWELL, 0.0).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn superposition(seed in any::<u64>(), cut in 1usize..15, frac in 0.0f64..1.5) {
        let g = probes(4);
        let plan = scan::random_scan(&g, seed, DWELL, 0.0).unwrap();
        let grid = SimulationGrid::covering(&g, 1e-9).unwrap();
        let t = plan.events()[cut].start() + frac * plan.end_time();
        let (a, b) = split(&plan, cut);
        let whole = render_frame(&grid, &plan, &params(), t).unwrap();
        let fa = render_frame(&grid, &a, &params(), t).unwrap();
        let fb = render_frame(&grid, &b, &params(), t).unwrap();
        for ((w, x), y) in whole.values.iter().zip(&fa.values).zip(&fb.values) {
            let sum = x + y;
            prop_assert!((w - sum).abs() <= 1e-12 * sum.abs(), "{w:e} vs {sum:e}");
        }
    }

    #[test]
    fn nested_prefixes_never_decrease(seed in any::<u64>(), frac in 0.0f64..1.2) {
        let g = probes(3);
        let plan = scan::random_scan(&g, seed, DWELL, 0.0).unwrap();
        let grid = SimulationGrid::covering(&g, 1e-9).unwrap();
        let t = frac * plan.end_time();
        let mut previous = render_frame(&grid, &plan.truncated(0), &params(), t).unwrap();
        for j in 1..=plan.len() {
            let frame = render_frame(&grid, &plan.truncated(j), &params(), t).unwrap();
            for (a, b) in previous.values.iter().zip(&frame.values) {
                prop_assert!(b >= a);
            }
            prop_assert!(frame.values.iter().all(|v| v.is_finite() && *v >= 0.0));
            previous = frame;
        }
    }

    #[test]
    fn matches_reference(seed in any::<u64>(), frac in 0.0f64..1.3) {
        let g = probes(4);
        let plan = scan::random_scan(&g, seed, DWELL, 1e-6).unwrap();
        let grid = SimulationGrid::covering(&g, 5e-10).unwrap();
        let t = frac * plan.end_time();
        let fast = render_frame(&grid, &plan, &params(), t).unwrap();
        let slow = reference_frame(&grid, &plan, &params(), t).unwrap();
        prop_assert!(max_relative_difference(&fast, &slow) <= 1e-10);
    }
}

#[test]
fn probe_pixel_grows_during_its_dwell() {
    let g = probes(3);
    let plan = scan::raster(&g, DWELL, 0.0).unwrap();
    let grid = SimulationGrid::covering(&g, 1e-9).unwrap();
    let ev = plan.events()[4];
    let (col, row) = (2, 2);
    assert_eq!(grid.pixel_center(col, row), ev.position());
    let mut last = -1.0;
    for k in 0..=20 {
        let t = ev.start() + ev.dwell() * k as f64 / 20.0;
        let v = render_frame(&grid, &plan, &params(), t)
            .unwrap()
            .get(col, row);
        assert!(v >= last, "k = {k}");
        last = v;
    }
}

#[test]
fn single_event_pixel_equals_probe_value() {
    let ev = ProbeEvent::new(Point2::new(0.0, 0.0), 0.0, DWELL).unwrap();
    let plan = ScanPlan::from_events(vec![ev], ScanPattern::Custom, DWELL, 0.0).unwrap();
    let grid = SimulationGrid::new(Point2::new(-0.5e-9, -0.5e-9), 1e-9, 1, 1).unwrap();
    for t in [0.0, 0.3 * DWELL, DWELL, 3.0 * DWELL] {
        let v = render_frame(&grid, &plan, &params(), t).unwrap().values[0];
        assert_eq!(v, phi_at_probe(t, &ev, &params()).unwrap());
    }
}

#[test]
fn sequences_identical_across_thread_counts() {
    let g = probes(4);
    let plan = scan::interleaved(&g, 3, DWELL, 0.0).unwrap();
    let grid = SimulationGrid::covering(&g, 5e-10).unwrap();
    let schedule = FrameSchedule::new(DWELL / 2.0, 0.0, plan.end_time()).unwrap();
    let run = |threads| {
        with_threads(threads, || {
            let mut sink = CollectSink::default();
            render_sequence(&grid, &plan, &params(), &schedule, &mut sink).unwrap();
            sink.frames
        })
        .unwrap()
    };
    let one = run(1);
    assert_eq!(one.len(), schedule.frame_count());
    for threads in [2, 3, 5] {
        let other = run(threads);
        for (a, b) in one.iter().zip(&other) {
            let bits = |f: &stem_diffusion::FieldFrame| {
                f.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            };
            assert_eq!(bits(a), bits(b), "threads = {threads}");
        }
    }
}
