use floodrisk::pipeline::{run, PipelineConfig, PipelineError, PipelineStage, RunOptions, StageStatus};
use floodrisk::Execution;
use floodrisk_oracle::world::{World, WorldSpec};
use std::path::Path;

fn fixture(dir: &Path) -> PipelineConfig {
    let world = World::generate(&WorldSpec::default()).unwrap();
    let cfg = world.write_dir(dir, 200, 200).unwrap();
    PipelineConfig::load(&cfg).unwrap()
}

fn opts(stages: &[PipelineStage], exec: Execution) -> RunOptions {
    RunOptions {
        stages: stages.to_vec(),
        exec: Some(exec),
        timestamp: Some("2020-01-01T00:00:00Z".into()),
        ..Default::default()
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn ingest_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    run(&cfg, &opts(&[PipelineStage::Ingest], Execution::Sequential)).unwrap();
    let out = &cfg.output_dir;
    assert!(out.join("events.csv").exists());
    assert!(out.join("manifests/ingest.json").exists());
    let m: serde_json::Value = serde_json::from_slice(&read(out, "manifests/ingest.json")).unwrap();
    assert_eq!(m["stage"], "ingest");
    assert_eq!(m["timestamp"], "2020-01-01T00:00:00Z");
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_upstream_is_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let err = run(&cfg, &opts(&[PipelineStage::Trend], Execution::Sequential)).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput { stage: PipelineStage::Trend, .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn full_run_is_deterministic_and_skips_unchanged_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture(tmp.path());
    let all = PipelineStage::ALL;
    let first = run(&cfg, &opts(&all, Execution::Parallel)).unwrap();
    assert!(first.stages.iter().all(|(_, s)| *s == StageStatus::Ran));

    let out_a = cfg.output_dir.clone();
    let table = String::from_utf8(read(&out_a, "table1.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 6, "{table}");
    assert!(lines[0].starts_with("start_year,reported:events,reported:area"));
    for y in ["1870", "1900", "1930", "1950", "1970"] {
        assert!(lines.iter().any(|l| l.starts_with(y)));
    }
    for name in [
        "series/reported_events.csv",
        "series/gap_filled_losses_wealth.csv",
        "series/underreporting_corrected_events.csv",
        "period_sums.csv",
        "quintile_events.csv",
        "summary.json",
    ] {
        assert!(out_a.join(name).exists(), "{name}");
    }
    let series = String::from_utf8(read(&out_a, "series/normalized_fatalities.csv")).unwrap();
    assert!(series.starts_with("# variable: fatalities\n# stage: normalized\n# units: persons per year\nyear,value\n"));

    // unchanged inputs: every stage is skipped
    let again = run(&cfg, &opts(&all, Execution::Parallel)).unwrap();
    assert!(again.stages.iter().all(|(_, s)| *s == StageStatus::UpToDate));

    // a second run elsewhere, sequential, gives identical files
    cfg.output_dir = tmp.path().join("out_seq");
    run(&cfg, &opts(&all, Execution::Sequential)).unwrap();
    for name in [
        "events.csv",
        "footprints.csv",
        "normalized.csv",
        "relative_damages.csv",
        "dependence.csv",
        "filled.csv",
        "gapfill_samples.bin",
        "severity.csv",
        "underreporting_factors.csv",
        "trends.csv",
        "series.csv",
        "bands.csv",
        "table1.csv",
        "period_sums.csv",
        "quintile_events.csv",
        "summary.json",
        "regional_totals.csv",
    ] {
        assert!(read(&out_a, name) == read(&cfg.output_dir, name), "{name} differs");
    }

    // a different seed changes the stochastic outputs
    cfg.output_dir = tmp.path().join("out_seed");
    let mut o = opts(&all, Execution::Parallel);
    o.seed_override = Some(99);
    run(&cfg, &o).unwrap();
    assert!(read(&out_a, "trends.csv") != read(&cfg.output_dir, "trends.csv"));
    assert!(read(&out_a, "events.csv") == read(&cfg.output_dir, "events.csv"));
}
