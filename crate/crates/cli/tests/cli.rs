use std::path::Path;
use std::process::Command;

fn thicket(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_thicket"))
        .args(args)
        .output()
        .expect("run thicket")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn smoke_experiment_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    let out = thicket(&[
        "experiment",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn config_flag_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    let out = thicket(&[
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        tmp.path().to_str().unwrap(),
        "experiment",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = std::fs::read_to_string(tmp.path().join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 9"));
}

#[test]
fn config_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"smoke\"\nregime = \"2d\"\npreset = \"box-unit-rate\"\nreplicas = 1\nseed = 1\ncolour = 2\n").unwrap();
    assert_eq!(
        thicket(&["experiment", bad.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        thicket(&["experiment", "/no/such/file.toml"]).status.code(),
        Some(3)
    );
    assert_eq!(
        thicket(&["walk", "--n", "3", "--start", "9:9"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(thicket(&["walk", "--bogus"]).status.code(), Some(3));
}

#[test]
fn resource_limits_exit_four() {
    let out = thicket(&["green", "--dim", "3", "--n", "400"]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn statistical_failure_exits_two() {
    // thick points at a = 1.4 on tiny boxes: the fitted exponent cannot match
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("fractal.toml");
    std::fs::write(
        &cfg,
        "experiment = \"fractal-2d\"\nregime = \"2d\"\npreset = \"box-unit-rate\"\nn = [4, 5, 6]\na = [1.4]\nreplicas = 10\nseed = 1\n",
    )
    .unwrap();
    let out = thicket(&[
        "experiment",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn ad_hoc_subcommands_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["green", "--n", "3", "--site", "1:0", "--out", dir],
        vec![
            "walk",
            "--n",
            "4",
            "--replicas",
            "3",
            "--seed",
            "2",
            "--out",
            dir,
        ],
        vec![
            "gff",
            "--n",
            "2",
            "--samples",
            "4",
            "--pinned",
            "--seed",
            "2",
            "--out",
            dir,
        ],
        vec![
            "iso",
            "ray-knight",
            "--n",
            "1",
            "--replicas",
            "2000",
            "--u",
            "1",
            "--seed",
            "2",
        ],
        vec![
            "thick", "--dim", "3", "--n", "4", "--a", "0.5", "--seed", "2", "--out", dir,
        ],
        vec![
            "limits", "--bank", "200", "--dt", "1e-3", "--seed", "2", "--out", dir,
        ],
    ] {
        let out = thicket(&args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "green.f64",
        "summary.csv",
        "local_times.csv",
        "gff.f64",
        "nu_0.csv",
        "tau_bank.f64",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}
