use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thicket::config::{ExperimentConfig, GraphPreset, Params, RegimeKind};
use thicket::experiment::{execute, run_experiment};
use thicket::gff::{write_samples, Gff};
use thicket::green::{exact_green, lattice_green_constant};
use thicket::lattice::{build_box, BoxLattice, RateModel, StepDistribution};
use thicket::limits::{critical_count_pmf, gumbel_cdf, sample_tau_bank, TimeConvention};
use thicket::rng::{map_replicas_with, Purpose, RngFactory};
use thicket::stats::{StatReport, Verdict};
use thicket::thick::{nu_measure, thick_set_2d, thick_set_hd};
use thicket::walker::{write_local_times_csv, write_summary_csv, Walker};
use thicket::Error;

const EXIT_STAT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "thicket",
    version,
    about = "Local times, Green functions and thick points of random walks"
)]
struct Cli {
    /// Master seed; overrides the config file. Without it, ad hoc
    /// subcommands draw a fresh seed and print it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rates {
    UnitRate,
    UnitConductance,
}

impl From<Rates> for RateModel {
    fn from(r: Rates) -> Self {
        match r {
            Rates::UnitRate => RateModel::UnitRate,
            Rates::UnitConductance => RateModel::UnitConductance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Identity {
    Eisenbaum,
    RayKnight,
}

#[derive(Subcommand)]
enum Command {
    /// Exact Dirichlet Green function of a box.
    Green {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "unit-rate")]
        rates: Rates,
        /// Site x as colon-separated coordinates, e.g. 0:1.
        #[arg(long)]
        site: Option<String>,
    },
    /// Walks started at a site and killed on leaving the box.
    Walk {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        #[arg(long)]
        start: Option<String>,
        #[arg(long, value_enum, default_value = "unit-rate")]
        rates: Rates,
    },
    /// Discrete Gaussian free field samples on a box.
    Gff {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        samples: u64,
        /// Pin the field at the origin of the finite graph instead of
        /// imposing Dirichlet boundary values.
        #[arg(long)]
        pinned: bool,
    },
    /// Monte Carlo check of an isomorphism identity on a small box.
    Iso {
        #[arg(value_enum)]
        identity: Identity,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        replicas: u64,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        u: Vec<f64>,
    },
    /// Thick points of walks from the origin of a unit-rate box.
    Thick {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        a: f64,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
    },
    /// Limit laws in d ≥ 3 from a Brownian exit-time bank.
    Limits {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        bank: u64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Points at which to evaluate the Gumbel mixture CDF.
        #[arg(long, value_delimiter = ',', default_value = "-2,0,2,4")]
        t: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        kmax: u32,
    },
    /// Run a configured experiment pipeline.
    Experiment {
        /// Config file; `--config` works too.
        path: Option<PathBuf>,
    },
}

enum Failure {
    Lib(Error),
    Usage(String),
    Io(std::io::Error),
    Statistical,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Statistical) => ExitCode::from(EXIT_STAT),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Budget { .. } | Error::JumpCeiling(_) => EXIT_RESOURCE,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Outcome {
    // exploratory runs draw a fresh seed and print it so they can be replayed
    let seed = || {
        cli.seed.unwrap_or_else(|| {
            let s = entropy_seed();
            eprintln!("seed: {s}");
            s
        })
    };
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Green {
            dim,
            n,
            rates,
            site,
        } => green(*dim, *n, *rates, site.as_deref(), out),
        Command::Walk {
            dim,
            n,
            replicas,
            start,
            rates,
        } => walk(*dim, *n, *replicas, start.as_deref(), *rates, seed(), out),
        Command::Gff {
            dim,
            n,
            samples,
            pinned,
        } => gff(*dim, *n, *samples, *pinned, seed(), out),
        Command::Iso {
            identity,
            dim,
            n,
            replicas,
            s,
            u,
        } => {
            let experiment = match identity {
                Identity::Eisenbaum => "eisenbaum",
                Identity::RayKnight => "ray-knight",
            };
            let cfg = ExperimentConfig {
                experiment: experiment.into(),
                regime: RegimeKind::Isomorphism,
                preset: GraphPreset::BoxUnitRate,
                dim: *dim,
                n: vec![*n],
                a: Vec::new(),
                replicas: *replicas,
                seed: seed(),
                dt: 1e-4,
                out: out.map(Path::to_path_buf),
                params: Params {
                    s: *s,
                    u: u.clone(),
                    ..Params::default()
                },
            };
            if out.is_some() {
                let bundle = run_experiment(&cfg)?;
                report(&bundle.checks)
            } else {
                report(&execute(&cfg)?.checks)
            }
        }
        Command::Thick {
            dim,
            n,
            a,
            replicas,
        } => thick(*dim, *n, *a, *replicas, seed(), out),
        Command::Limits {
            dim,
            bank,
            dt,
            t,
            kmax,
        } => limits(*dim, *bank, *dt, t, *kmax, seed(), out),
        Command::Experiment { path } => {
            let path = path
                .as_ref()
                .or(cli.config.as_ref())
                .ok_or_else(|| Failure::Usage("experiment needs a config file".into()))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = &cli.out {
                cfg.out = Some(o.clone());
            }
            let bundle = run_experiment(&cfg)?;
            println!("wrote {}", cfg.output_dir().display());
            report(&bundle.checks)
        }
    }
}

fn entropy_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ (u64::from(std::process::id()) << 32)
}

fn report(checks: &[StatReport]) -> Outcome {
    for c in checks {
        println!("{}", c.summary());
    }
    let failed = checks.iter().filter(|c| c.verdict == Verdict::Fail).count();
    let gated = checks
        .iter()
        .filter(|c| c.verdict != Verdict::ReportOnly)
        .count();
    println!("{} of {gated} gated checks passed", gated - failed);
    if failed > 0 {
        Err(Failure::Statistical)
    } else {
        Ok(())
    }
}

fn parse_site(text: &str, dim: usize) -> Result<Vec<i64>, Failure> {
    let site: Vec<i64> = text
        .split(':')
        .map(|p| p.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Usage(format!("bad site '{text}': {e}")))?;
    if site.len() != dim {
        return Err(Failure::Usage(format!(
            "site '{text}' needs {dim} coordinates"
        )));
    }
    Ok(site)
}

fn vertex(b: &BoxLattice, site: Option<&str>) -> Result<u32, Failure> {
    match site {
        None => Ok(b.origin()),
        Some(s) => {
            let x = parse_site(s, b.dim())?;
            b.vertex_at(&x)
                .filter(|&v| b.domain.contains(v))
                .ok_or_else(|| Failure::Usage(format!("site {s} is not inside the box")))
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn green(dim: usize, n: usize, rates: Rates, site: Option<&str>, out: Option<&Path>) -> Outcome {
    let b = build_box(dim, n, rates.into())?;
    let x = vertex(&b, site)?;
    let g = exact_green(&b.graph, &b.domain)?;
    let inv = g.invariants();
    println!("interior sites: {}", g.len());
    println!("symmetry defect: {:.3e}", inv.symmetry_defect);
    println!("residual: {:.3e}", inv.residual);
    println!("min pivot: {:.6e}", inv.min_pivot);
    println!("G(x,x) = {:.10}", g.at(x, x).expect("x is interior"));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let digest = g.write_binary(&dir.join("green.f64"))?;
        println!(
            "wrote {} (sha256 {digest})",
            dir.join("green.f64").display()
        );
    }
    Ok(())
}

fn walk(
    dim: usize,
    n: usize,
    replicas: u64,
    start: Option<&str>,
    rates: Rates,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    let b = build_box(dim, n, rates.into())?;
    let x = vertex(&b, start)?;
    let factory = RngFactory::new(seed);
    let fields = map_replicas_with(
        replicas,
        || Walker::for_box(&b),
        |w, r| w.run_until_exit(x, &mut factory.stream(Purpose::Walk, r), r),
    )
    .into_iter()
    .collect::<thicket::Result<Vec<_>>>()?;
    match out {
        Some(dir) => {
            let mut s = create(dir, "summary.csv")?;
            write_summary_csv(&fields, &mut s)?;
            s.flush()?;
            let mut l = create(dir, "local_times.csv")?;
            write_local_times_csv(&fields, &mut l)?;
            l.flush()?;
            println!("wrote {}", dir.display());
        }
        None => write_summary_csv(&fields, std::io::stdout().lock())?,
    }
    Ok(())
}

fn gff(dim: usize, n: usize, samples: u64, pinned: bool, seed: u64, out: Option<&Path>) -> Outcome {
    let b = build_box(dim, n, RateModel::UnitRate)?;
    let field = if pinned {
        let inner = b.graph.restrict(&b.domain);
        let pin = b.domain.slot(b.origin()).expect("origin is interior") as u32;
        Gff::pinned(&inner, pin)?
    } else {
        Gff::from_domain(&b.graph, &b.domain)?
    };
    let draws = field.sample_many(samples, &RngFactory::new(seed), Purpose::Field);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("gff.f64");
            let digest = write_samples(&path, &field, &draws)?;
            println!("wrote {} (sha256 {digest})", path.display());
        }
        None => {
            let mut o = std::io::stdout().lock();
            let sites: Vec<String> = field.sites().iter().map(|&v| site_label(&b, v)).collect();
            writeln!(o, "sample,{}", sites.join(","))?;
            for (i, d) in draws.iter().enumerate() {
                let vals: Vec<String> = d.iter().map(|v| v.to_string()).collect();
                writeln!(o, "{i},{}", vals.join(","))?;
            }
        }
    }
    Ok(())
}

fn site_label(b: &BoxLattice, v: u32) -> String {
    let parts: Vec<String> = b.site(v).iter().map(|c| c.to_string()).collect();
    parts.join(":")
}

fn thick(dim: usize, n: usize, a: f64, replicas: u64, seed: u64, out: Option<&Path>) -> Outcome {
    let b = build_box(dim, n, RateModel::UnitRate)?;
    let factory = RngFactory::new(seed);
    let origin = b.origin();
    let fields = map_replicas_with(
        replicas,
        || Walker::for_box(&b),
        |w, r| w.run_until_exit(origin, &mut factory.stream(Purpose::Walk, r), r),
    )
    .into_iter()
    .collect::<thicket::Result<Vec<_>>>()?;
    let g = if dim == 2 {
        StepDistribution::nearest_neighbor().potential_slope()
    } else {
        lattice_green_constant(dim)?.value
    };
    println!("replica,visited,max_local_time,threshold,thick");
    for f in &fields {
        let set = if dim == 2 {
            thick_set_2d(f, a, g, n)?
        } else {
            thick_set_hd(f, a, g, n)?
        };
        let max = f.max().map(|m| m.1).unwrap_or(0.0);
        println!(
            "{},{},{max},{},{}",
            f.replica,
            f.visited(),
            set.threshold,
            set.len()
        );
    }
    if let (Some(dir), true) = (out, dim >= 3) {
        for f in &fields {
            let m = nu_measure(f, dim, a.min(1.0), g, n)?;
            let mut w = create(dir, &format!("nu_{}.csv", f.replica))?;
            m.write_csv(&mut w)?;
            w.flush()?;
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn limits(
    dim: usize,
    n: u64,
    dt: f64,
    t: &[f64],
    kmax: u32,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    let g = lattice_green_constant(dim)?.value;
    let bank = sample_tau_bank(dim, n, dt, &RngFactory::new(seed))?
        .to_convention(TimeConvention::WalkScaled);
    let m = bank.moments();
    println!("g = {g:.6}");
    println!(
        "E[tau] = {:.6} (se {:.1e}), E[tau]/g = {:.6}",
        m.mean(),
        m.se(),
        m.mean() / g
    );
    println!("t,gumbel_cdf");
    for &x in t {
        println!("{x},{:.6}", gumbel_cdf(x, &bank, g)?);
    }
    println!("k,critical_pmf");
    for k in 0..=kmax {
        println!("{k},{:.6}", critical_count_pmf(k, &bank, g)?);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let digest = bank.save(&dir.join("tau_bank.f64"))?;
        println!(
            "wrote {} (sha256 {digest})",
            dir.join("tau_bank.f64").display()
        );
    }
    Ok(())
}
