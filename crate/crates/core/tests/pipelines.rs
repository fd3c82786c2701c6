//! End-to-end runs of the experiment pipelines.

use std::path::Path;
use std::time::Instant;

use thicket::config::ExperimentConfig;
use thicket::experiment::run_experiment;
use thicket::Error;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn smoke_is_fast_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&configs().join("smoke.toml")).unwrap();
    cfg.out = Some(tmp.path().to_path_buf());
    let start = Instant::now();
    let bundle = run_experiment(&cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(
        bundle.passed,
        "{:?}",
        bundle.failures().map(|c| c.summary()).collect::<Vec<_>>()
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["schema"], "v1");
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["provenance"].is_string()));
}

#[test]
fn same_seed_gives_identical_csv() {
    let run = |seed: u64| {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::load(&configs().join("smoke.toml")).unwrap();
        cfg.seed = seed;
        cfg.out = Some(tmp.path().to_path_buf());
        run_experiment(&cfg).unwrap();
        csv_files(tmp.path())
    };
    let a = run(5);
    assert!(!a.is_empty());
    assert_eq!(a, run(5));
    assert_ne!(a, run(6));
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn bad_configs_are_config_errors() {
    let base = std::fs::read_to_string(configs().join("smoke.toml")).unwrap();
    let unknown = base.replace("smoke", "no-such-pipeline");
    let cfg = ExperimentConfig::from_toml(&unknown).unwrap();
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    let typo = format!("{base}replica = 3\n");
    assert!(matches!(
        ExperimentConfig::from_toml(&typo),
        Err(Error::Config(_))
    ));
}
