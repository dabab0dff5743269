use ofnav_core::Execution;
use ofnav_harness::report::{read_aggregate_csv, read_frames_csv, write_frames_csv};
use ofnav_harness::{
    export_report, run_oracle, run_pipeline_with, Aggregates, OracleDepth, RunReport,
    ScenarioConfig,
};
use ofnav_sim::ScenarioKind;
use std::fs::File;

fn small(kind: ScenarioKind) -> ScenarioConfig {
    let mut c = ScenarioConfig::preset(kind);
    c.resolution = 128;
    c.frame_rate = 1.0;
    c.noise.camera_sigma = 4.0;
    c.noise.attitude_sigma = 1e-4;
    c.noise.rate_sigma = 1e-4;
    c.noise.range_sigma = 1e-3;
    c
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300),
        (None, None) => true,
        _ => false,
    }
}

fn same_aggregates(a: &Aggregates, b: &Aggregates) -> bool {
    close(a.mean_abs_error, b.mean_abs_error)
        && close(a.rel_mean, b.rel_mean)
        && close(a.rel_max, b.rel_max)
        && close(a.rel_min, b.rel_min)
        && close(a.rel_std, b.rel_std)
        && close(a.rel_max_all, b.rel_max_all)
        && (a.n_frames, a.n_excluded, a.n_failed) == (b.n_frames, b.n_excluded, b.n_failed)
}

#[test]
fn summary_matches_frames_on_disk() {
    let r = run_pipeline_with(&small(ScenarioKind::Crater), Execution::Parallel).unwrap();
    assert_eq!(r.frames.len(), 60);
    let dir = tempfile::tempdir().unwrap();
    let files = export_report(&r, dir.path()).unwrap();
    let frames = read_frames_csv(File::open(&files.frames).unwrap()).unwrap();
    let summary = read_aggregate_csv(File::open(&files.summary).unwrap()).unwrap();
    let recomputed = Aggregates::from_frames(&frames);
    assert!(
        same_aggregates(&recomputed, &summary),
        "{recomputed:?}\n{summary:?}"
    );
    assert!(same_aggregates(&r.aggregates, &summary));

    let svg = std::fs::read_to_string(&files.plot).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count()
            >= 4
    );
}

#[test]
fn empty_report_is_header_only() {
    let r = RunReport::new("empty", Vec::new());
    let mut buf = Vec::new();
    write_frames_csv(&mut buf, &r.frames).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("t,est_vx"));
    let dir = tempfile::tempdir().unwrap();
    let files = export_report(&r, dir.path()).unwrap();
    let a = read_aggregate_csv(File::open(&files.summary).unwrap()).unwrap();
    assert_eq!(a.n_frames, 0);
    assert!(a.rel_mean.is_none());
    roxmltree::Document::parse(&std::fs::read_to_string(&files.plot).unwrap()).unwrap();
}

#[test]
fn reports_are_deterministic_for_any_execution() {
    let cfg = small(ScenarioKind::Incline);
    let a = run_pipeline_with(&cfg, Execution::Parallel).unwrap();
    let b = run_pipeline_with(&cfg, Execution::Sequential).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (
        export_report(&a, da.path()).unwrap(),
        export_report(&b, db.path()).unwrap(),
    );
    for (x, y) in [
        (&fa.frames, &fb.frames),
        (&fa.summary, &fb.summary),
        (&fa.plot, &fb.plot),
    ] {
        assert_eq!(
            std::fs::read(x).unwrap(),
            std::fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn oracle_is_exact_on_every_scenario() {
    for kind in ScenarioKind::ALL {
        let mut cfg = ScenarioConfig::preset(kind);
        cfg.resolution = 256;
        // About a hundred pairs per scenario.
        let dur = ofnav_sim::ScenarioSpec::preset(kind).trajectory.duration();
        cfg.frame_rate = 100.0 / dur;
        let r = run_oracle(&cfg, OracleDepth::Exact, Execution::Parallel).unwrap();
        let a = &r.aggregates;
        assert_eq!(a.n_failed, 0, "{kind}");
        assert!(a.n_frames >= 99, "{kind}");
        assert!(a.rel_max.unwrap() < 1e-8, "{kind}: {:?}", a.rel_max);
    }
}
