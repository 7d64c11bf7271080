use floodrisk_oracle::world::{World, WorldSpec};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn floodrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floodrisk"))
        .args(args)
        .env("RUST_LOG", "error")
        .env("SOURCE_DATE_EPOCH", "1577836800")
        .output()
        .unwrap()
}

fn fixture(dir: &Path) -> PathBuf {
    World::generate(&WorldSpec::default())
        .unwrap()
        .write_dir(dir, 100, 100)
        .unwrap()
}

#[test]
fn stage_subcommand_and_missing_upstream() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let cfg = cfg.to_str().unwrap();

    let out = floodrisk(&["normalize", "--config", cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage normalize"));

    let out = floodrisk(&["ingest", "--config", cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(tmp.path().join("out/manifests/ingest.json")).unwrap();
    assert!(manifest.contains("2020-01-01T00:00:00Z"));

    let out = floodrisk(&["run", "--stages", "ingest,plot", "--config", cfg]);
    assert_eq!(out.status.code(), Some(1));
    let out = floodrisk(&["ingest", "--config", "/nonexistent/floodrisk.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_all_stages_with_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let out = floodrisk(&["run", "--config", cfg.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("out/table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    let manifest = std::fs::read_to_string(tmp.path().join("out/manifests/trend.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"));
}

#[test]
fn precip_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("daily.csv");
    let mut text = String::from("cell,date,precip_mm\n");
    let start = chrono_free_days(2000, 2011);
    for (i, date) in start.iter().enumerate() {
        // one spike per year on a flat background
        let v = if i % 365 == 100 { 80.0 + (i / 365) as f64 } else { 1.0 };
        text.push_str(&format!("c1,{date},{v}\n"));
    }
    std::fs::write(&input, text).unwrap();
    let outdir = tmp.path().join("precip");
    let out = floodrisk(&[
        "precip",
        "--input",
        input.to_str().unwrap(),
        "--durations",
        "1,3",
        "--output",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = std::fs::read_to_string(outdir.join("extreme_precipitation_1d.csv")).unwrap();
    assert!(s.starts_with("# variable: extreme_precipitation\n"));
    let total: f64 = s
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("year"))
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    // 12 years at a 5-year return period
    assert_eq!(total, 2.0);
    assert!(outdir.join("precip_trends.csv").exists());
}

/// ISO dates of every day from Jan 1 of `first` to Dec 31 of `last`.
fn chrono_free_days(first: i32, last: i32) -> Vec<String> {
    let mut out = Vec::new();
    for y in first..=last {
        let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        let lens = [31, if leap { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
        for (m, &n) in lens.iter().enumerate() {
            for d in 1..=n {
                out.push(format!("{y}-{:02}-{d:02}", m + 1));
            }
        }
    }
    out
}
