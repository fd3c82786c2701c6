//! Acceptance suite: runs the shipped configs and prints one line per
//! criterion. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thicket::config::ExperimentConfig;
use thicket::experiment::{run_experiment, ReportBundle};

struct Criterion {
    id: u8,
    title: &'static str,
    configs: &'static [&'static str],
    budget_s: f64,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "exact combinatorics",
        configs: &["combinatorics"],
        budget_s: 1.0,
    },
    Criterion {
        id: 2,
        title: "Green operator exactness",
        configs: &["green-exactness"],
        budget_s: 120.0,
    },
    Criterion {
        id: 3,
        title: "exponential local-time law",
        configs: &["exp-law"],
        budget_s: 60.0,
    },
    Criterion {
        id: 4,
        title: "hitting identity",
        configs: &["hitting"],
        budget_s: 300.0,
    },
    Criterion {
        id: 5,
        title: "Eisenbaum isomorphism",
        configs: &["eisenbaum"],
        budget_s: 300.0,
    },
    Criterion {
        id: 6,
        title: "second Ray-Knight isomorphism",
        configs: &["ray-knight"],
        budget_s: 300.0,
    },
    Criterion {
        id: 7,
        title: "excursion independence",
        configs: &["independence"],
        budget_s: 120.0,
    },
    Criterion {
        id: 8,
        title: "d = 3 limit laws",
        configs: &["hd-limits"],
        budget_s: 1800.0,
    },
    Criterion {
        id: 9,
        title: "2D fractal exponent",
        configs: &["fractal-2d"],
        budget_s: 1200.0,
    },
    Criterion {
        id: 10,
        title: "q-kernel consistency",
        configs: &["q-kernel"],
        budget_s: 600.0,
    },
];

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

struct Run {
    bundle: ReportBundle,
    seconds: f64,
    csv: BTreeMap<String, Vec<u8>>,
}

fn run(name: &str, scratch: &Path) -> Result<Run, String> {
    let mut cfg = ExperimentConfig::load(&config_dir().join(format!("{name}.toml")))
        .map_err(|e| e.to_string())?;
    let dir = scratch.join(format!(
        "{name}-{}",
        scratch.read_dir().map(|d| d.count()).unwrap_or(0)
    ));
    cfg.out = Some(dir.clone());
    let start = Instant::now();
    let bundle = run_experiment(&cfg).map_err(|e| e.to_string())?;
    Ok(Run {
        bundle,
        seconds: start.elapsed().as_secs_f64(),
        csv: csv_bytes(&dir),
    })
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut first: BTreeMap<String, Run> = BTreeMap::new();
    let mut failed = Vec::new();

    for c in CRITERIA {
        let mut seconds = 0.0;
        let mut checks = 0;
        let mut problems = Vec::new();
        for &name in c.configs {
            match run(name, scratch.path()) {
                Ok(r) => {
                    seconds += r.seconds;
                    checks += r.bundle.checks.len();
                    problems.extend(r.bundle.failures().map(|f| f.summary()));
                    first.insert(name.to_string(), r);
                }
                Err(e) => problems.push(format!("{name}: {e}")),
            }
        }
        if seconds > c.budget_s {
            problems.push(format!(
                "runtime {seconds:.1}s over the {}s budget",
                c.budget_s
            ));
        }
        let verdict = if problems.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} {} ({checks} checks, {seconds:.1}s of {}s)",
            c.id, c.title, c.budget_s
        );
        for p in &problems {
            println!("    {p}");
        }
        if !problems.is_empty() {
            failed.push(c.id);
        }
    }

    // determinism: every shipped config, run twice with its own seed
    let mut names: Vec<String> = std::fs::read_dir(config_dir())
        .expect("configs directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            let stem = p.file_stem()?.to_string_lossy().into_owned();
            (p.extension()? == "toml").then_some(stem)
        })
        .collect();
    names.sort();
    let mut problems = Vec::new();
    let start = Instant::now();
    for name in &names {
        let again = || run(name, scratch.path());
        let a = match first.remove(name) {
            Some(r) => Ok(r),
            None => again(),
        };
        match (a, again()) {
            (Ok(a), Ok(b)) => {
                if a.csv.is_empty() {
                    problems.push(format!("{name}: no CSV output"));
                } else if a.csv != b.csv {
                    let differ: Vec<&String> = a
                        .csv
                        .keys()
                        .filter(|k| a.csv.get(*k) != b.csv.get(*k))
                        .collect();
                    problems.push(format!("{name}: CSV differs on rerun: {differ:?}"));
                }
                if !a.bundle.passed {
                    problems.push(format!(
                        "{name}: {} failing checks",
                        a.bundle.failures().count()
                    ));
                }
            }
            (Err(e), _) | (_, Err(e)) => problems.push(format!("{name}: {e}")),
        }
    }
    let verdict = if problems.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "criterion 11 {verdict} determinism ({} configs rerun, {:.1}s)",
        names.len(),
        start.elapsed().as_secs_f64()
    );
    for p in &problems {
        println!("    {p}");
    }
    if !problems.is_empty() {
        failed.push(11);
    }

    if failed.is_empty() {
        println!("all criteria pass");
    } else {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
