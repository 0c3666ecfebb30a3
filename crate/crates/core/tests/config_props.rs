use std::path::PathBuf;

use proptest::prelude::*;
use stem_diffusion::config::{
    FramesConfig, OutputConfig, PatternKind, PhysicsConfig, ProbeGridConfig, ScanConfig, SimConfig,
    SimGridConfig, Threads,
};
use stem_diffusion::output::FrameFormat;
use stem_diffusion::Point2;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3f64..1e3, (-20.0f64..20.0).prop_map(|e| 10f64.powf(e))]
}

fn config_strategy() -> impl Strategy<Value = SimConfig> {
    let physics =
        (finite(), finite(), finite()).prop_map(|(q0, d, r_s)| PhysicsConfig { q0, d, r_s });
    let probes = (0usize..50, 0usize..50, finite(), finite(), finite()).prop_map(
        |(rows, cols, pitch, x, y)| ProbeGridConfig {
            rows,
            cols,
            pitch,
            origin: Point2::new(x, y),
        },
    );
    let pattern = prop_oneof![
        Just(PatternKind::Raster),
        Just(PatternKind::Interleaved),
        Just(PatternKind::Random),
        Just(PatternKind::Subsampled),
        Just(PatternKind::Custom),
    ];
    let scan = (
        pattern,
        proptest::option::of(0usize..100),
        proptest::option::of(any::<u64>()),
        proptest::option::of(finite()),
        proptest::option::of("[a-z]{1,8}\\.txt"),
        finite(),
        finite(),
    )
        .prop_map(
            |(pattern, factor, seed, ratio, plan, dwell, dead_time)| ScanConfig {
                pattern,
                factor,
                seed,
                ratio,
                plan_file: plan.map(PathBuf::from),
                dwell,
                dead_time,
            },
        );
    let sim_grid = (
        proptest::option::of(finite()),
        proptest::option::of((finite(), finite())),
        proptest::option::of(1usize..500),
        proptest::option::of(1usize..500),
    )
        .prop_map(|(pixel_side, origin, width, height)| SimGridConfig {
            pixel_side,
            origin: origin.map(|(x, y)| Point2::new(x, y)),
            width,
            height,
        });
    let frames =
        (finite(), finite(), proptest::option::of(finite())).prop_map(|(interval, start, end)| {
            FramesConfig {
                interval,
                start,
                end,
            }
        });
    let output = (
        prop_oneof![
            Just(FrameFormat::Rawf32),
            Just(FrameFormat::Pgm16),
            Just(FrameFormat::Csv)
        ],
        "[a-z/]{1,12}",
        "[a-z_]{1,8}",
    )
        .prop_map(|(format, dir, stem)| OutputConfig {
            format,
            directory: PathBuf::from(dir),
            stem,
        });
    let threads = prop_oneof![Just(Threads::Auto), (1usize..64).prop_map(Threads::Count)];
    (physics, probes, scan, sim_grid, frames, output, threads).prop_map(
        |(physics, probe_grid, scan, sim_grid, frames, output, threads)| SimConfig {
            physics,
            probe_grid,
            scan,
            sim_grid,
            frames,
            output,
            threads,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn serialise_then_parse_is_identity(cfg in config_strategy()) {
        let text = cfg.to_json();
        let back = SimConfig::from_json(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn comments_are_ignored() {
    let text = "// header\n{\n  // inline section note\n  \"physics\": {\"q0\": 2.0}\n}\n";
    let cfg = SimConfig::from_json(text).unwrap();
    assert_eq!(cfg.physics.q0, 2.0);
    assert_eq!(cfg.physics.d, 1e-12);
}

#[test]
fn invalid_values_name_their_key() {
    let cases = [
        (r#"{"physics": {"d": -1e-12}}"#, "physics.d"),
        (r#"{"physics": {"r_s": 0}}"#, "physics.r_s"),
        (r#"{"probe_grid": {"rows": 0}}"#, "probe_grid.rows"),
        (r#"{"probe_grid": {"pitch": -2e-9}}"#, "probe_grid.pitch"),
        (r#"{"scan": {"dwell": 0}}"#, "scan.dwell"),
        (r#"{"scan": {"dead_time": -1}}"#, "scan.dead_time"),
        (r#"{"scan": {"pattern": "custom"}}"#, "scan.plan_file"),
        (r#"{"sim_grid": {"width": 0}}"#, "sim_grid.width"),
        (r#"{"frames": {"interval": 0}}"#, "frames.interval"),
        (r#"{"frames": {"start": 1, "end": 0.5}}"#, "frames.end"),
        (r#"{"output": {"stem": ""}}"#, "output.stem"),
    ];
    for (text, key) in cases {
        let err = SimConfig::from_json(text).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains(key), "{text}: {err}");
    }
}

#[test]
fn malformed_documents_rejected() {
    assert!(SimConfig::from_json(r#"{"physics": {"q0": "one"}}"#).is_err());
    assert!(SimConfig::from_json(r#"{"scan": {"pattern": "spiral"}}"#).is_err());
    assert!(SimConfig::from_json(r#"{"output": {"format": "png"}}"#).is_err());
    assert!(SimConfig::from_json("{").is_err());
}
