use rand::seq::index::sample;

use super::{Section, Table};
use crate::config::{ExperimentConfig, GraphPreset};
use crate::error::{Error, Result};
use crate::green::exact_green;
use crate::lattice::{build_box, BoxLattice, RateModel, StepDistribution, VertexId};
use crate::rng::{map_replicas, map_replicas_with, Purpose, RngFactory};
use crate::stats::{
    bonferroni_z, chi_square_independence, correlation, ks_test, loglog_slope, median,
    quantile_sorted, Provenance, StatReport, Statistic, BASE_Z, DEFAULT_ALPHA,
};
use crate::thick::thick_set_2d;
use crate::walker::{run_step_walk_2d, Walker};

fn first_radius(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.n.first().copied().ok_or_else(|| {
        Error::Config(format!(
            "experiment '{}' needs a box radius in `n`",
            cfg.experiment
        ))
    })
}

fn planar_box(cfg: &ExperimentConfig) -> Result<BoxLattice> {
    let model = match cfg.preset {
        GraphPreset::BoxUnitRate => RateModel::UnitRate,
        GraphPreset::BoxUnitConductance => RateModel::UnitConductance,
        other => {
            return Err(Error::Config(format!(
                "experiment '{}' needs a box preset, got {other:?}",
                cfg.experiment
            )))
        }
    };
    build_box(cfg.dim, first_radius(cfg)?, model)
}

fn site_label(b: &BoxLattice, v: VertexId) -> String {
    b.site(v)
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(":")
}

/// `count` distinct interior slots chosen uniformly from the selection stream.
fn random_slots(factory: &RngFactory, len: usize, count: usize) -> Result<Vec<usize>> {
    if count > len {
        return Err(Error::Config(format!(
            "cannot pick {count} distinct sites out of {len}"
        )));
    }
    let mut rng = factory.stream(Purpose::Selection, 0);
    Ok(sample(&mut rng, len, count).into_vec())
}

/// ℓ_x^{τ_N} from x against Exp(mean G_N(x,x)) for random x.
pub(super) fn exp_law(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let b = planar_box(cfg)?;
    let green = exact_green(&b.graph, &b.domain)?;
    let slots = random_slots(factory, b.domain.len(), cfg.params.points)?;
    let mut out = Section::default();
    let mut table = Table::new(
        "exp_law",
        &[
            "site",
            "green_diagonal",
            "mean",
            "median",
            "ks",
            "threshold",
        ],
    );
    for (i, &slot) in slots.iter().enumerate() {
        let x = b.domain.interior()[slot];
        let g = green.get(slot, slot);
        let sub = factory.derive(i as u64);
        let samples: Vec<f64> = map_replicas_with(
            cfg.replicas,
            || Walker::for_box(&b),
            |w, r| {
                w.run_until_exit(x, &mut sub.stream(Purpose::Walk, r), r)
                    .map(|f| f.get(x))
            },
        )
        .into_iter()
        .collect::<Result<_>>()?;
        let rep = ks_test(
            format!("exp-law-{}", site_label(&b, x)),
            &samples,
            |t| if t <= 0.0 { 0.0 } else { 1.0 - (-t / g).exp() },
            DEFAULT_ALPHA,
            Provenance::Derived,
        )?;
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        table.push(row![
            site_label(&b, x),
            g,
            mean,
            median(&samples),
            rep.value,
            rep.threshold
        ]);
        out.checks
            .push(rep.with_note(format!("target Exp(mean {g:.6})")));
    }
    out.tables.push(table);
    Ok(out)
}

/// P_x(τ_y < τ_N) against G_N(x,y)/G_N(y,y) for random pairs.
pub(super) fn hitting(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let b = planar_box(cfg)?;
    let green = exact_green(&b.graph, &b.domain)?;
    let slots = random_slots(factory, b.domain.len(), 2 * cfg.params.points)?;
    let mut out = Section::default();
    let mut table = Table::new(
        "hitting",
        &[
            "source",
            "target",
            "hits",
            "n",
            "estimate",
            "se",
            "target_probability",
            "z",
        ],
    );
    for (i, pair) in slots.chunks(2).enumerate() {
        let (sx, sy) = (pair[0], pair[1]);
        let (x, y) = (b.domain.interior()[sx], b.domain.interior()[sy]);
        let want = green.get(sx, sy) / green.get(sy, sy);
        let sub = factory.derive(i as u64);
        let walker = Walker::for_box(&b);
        let hits: Vec<bool> = map_replicas(cfg.replicas, |r| {
            walker.hits_before_exit(x, y, &mut sub.stream(Purpose::Walk, r))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let k = hits.iter().filter(|&&h| h).count() as f64;
        let n = cfg.replicas as f64;
        let p = k / n;
        let se = (want * (1.0 - want) / n).sqrt();
        let rep = StatReport::z_test(
            format!("hitting-{}-to-{}", site_label(&b, x), site_label(&b, y)),
            p,
            se,
            cfg.replicas,
            want,
            Provenance::Derived,
            BASE_Z,
        );
        table.push(row![
            site_label(&b, x),
            site_label(&b, y),
            k,
            n,
            p,
            se,
            want,
            rep.value
        ]);
        out.checks.push(rep);
    }
    out.tables.push(table);
    Ok(out)
}

/// Start of the independence experiment: the site (⌊N/2⌋, ⌊N/4⌋, 0, …),
/// off-center so that the exit law is not symmetric.
fn independence_start(b: &BoxLattice) -> Result<VertexId> {
    let n = b.radius() as i64;
    let mut x = vec![0i64; b.dim()];
    x[0] = n / 2;
    if b.dim() > 1 {
        x[1] = n / 4;
    }
    b.vertex_at(&x)
        .ok_or_else(|| Error::Config("independence start lies outside the box".into()))
}

/// ℓ_x^{τ_A} against functions of the exit vertex, started from x.
pub(super) fn independence(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let b = planar_box(cfg)?;
    let x = independence_start(&b)?;
    let n = b.radius() as i64;
    let runs: Vec<(f64, Vec<i64>)> = map_replicas_with(
        cfg.replicas,
        || Walker::for_box(&b),
        |w, r| {
            let f = w.run_until_exit(x, &mut factory.stream(Purpose::Walk, r), r)?;
            let e = f
                .exit_vertex()
                .ok_or_else(|| Error::InvalidArgument("walk did not exit".into()))?;
            Ok((f.get(x), b.site(e)))
        },
    )
    .into_iter()
    .collect::<Result<_>>()?;
    // face class: axis·2 + (negative side)
    let face = |s: &[i64]| -> usize {
        let axis = s
            .iter()
            .position(|c| c.abs() > n)
            .expect("exit sites lie outside the box");
        2 * axis + usize::from(s[axis] < 0)
    };
    let ell: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let faces: Vec<usize> = runs.iter().map(|r| face(&r.1)).collect();
    let f_right: Vec<f64> = faces.iter().map(|&c| f64::from(u8::from(c == 0))).collect();
    let f_coord: Vec<f64> = runs
        .iter()
        .map(|r| (r.1[b.dim() - 1] as f64 / (n + 1) as f64).clamp(-1.0, 1.0))
        .collect();

    let mut out = Section::default();
    let t = bonferroni_z(BASE_Z, 2);
    for (name, fx) in [
        ("exit-right-face", &f_right),
        ("exit-last-coordinate", &f_coord),
    ] {
        let (r, z) = correlation(&ell, fx)?;
        out.checks.push(
            StatReport::z_test(
                format!("independence-correlation-{name}"),
                r,
                1.0 / (cfg.replicas as f64).sqrt(),
                cfg.replicas,
                0.0,
                Provenance::Published,
                t,
            )
            .with_note(format!("sqrt(n)·r = {z:.3}")),
        );
    }

    let mut sorted = ell.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts = [0.25, 0.5, 0.75].map(|p| quantile_sorted(&sorted, p));
    let classes = 2 * b.dim();
    let mut table_counts = vec![vec![0u64; classes]; 4];
    for (&l, &c) in ell.iter().zip(&faces) {
        let q = cuts.iter().filter(|&&cut| l > cut).count();
        table_counts[q][c] += 1;
    }
    let chi = chi_square_independence(&table_counts)?;
    out.checks.push(
        StatReport::at_most(
            "independence-chi-square",
            Statistic::PValue,
            chi.p_value,
            DEFAULT_ALPHA,
            cfg.replicas,
            Provenance::Published,
        )
        .with_note(format!("chi2 = {:.3} on {} dof", chi.statistic, chi.dof)),
    );

    let mut table = Table::new(
        "independence_contingency",
        &["ltime_quartile", "exit_face", "count"],
    );
    for (q, row) in table_counts.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let label = format!("{}{}", if c % 2 == 0 { "+" } else { "-" }, c / 2 + 1);
            table.push(row![q + 1, label, count]);
        }
    }
    out.tables.push(table);
    Ok(out)
}

/// Number and height of thick points of the planar simple walk across radii.
pub(super) fn fractal_2d(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let steps = match cfg.preset {
        GraphPreset::BoxUnitRate => StepDistribution::nearest_neighbor(),
        GraphPreset::StepDiagonal => StepDistribution::diagonal(),
        other => {
            return Err(Error::Config(format!(
                "fractal-2d needs a planar step preset, got {other:?}"
            )))
        }
    };
    if cfg.n.len() < 3 {
        return Err(Error::Config(
            "fractal-2d needs at least three radii".into(),
        ));
    }
    let a = *cfg
        .a
        .first()
        .ok_or_else(|| Error::Config("fractal-2d needs a thickness level in `a`".into()))?;
    let g_slope = steps.potential_slope();
    let max_coefficient = steps.max_coefficient();
    let mut out = Section::default();
    let mut per_replica = Table::new(
        "fractal_2d_replicas",
        &["n", "replica", "thick_count", "max_ratio", "visited"],
    );
    let mut summary = Table::new(
        "fractal_2d_summary",
        &["n", "median_thick_count", "median_max_ratio"],
    );
    let mut medians = Vec::new();
    for (i, &n) in cfg.n.iter().enumerate() {
        let sub = factory.derive(i as u64);
        let rows: Vec<(usize, f64, usize)> = map_replicas(cfg.replicas, |r| {
            let f = run_step_walk_2d(&steps, n, [0, 0], &mut sub.stream(Purpose::Walk, r))?;
            let count = thick_set_2d(&f, a, g_slope, n)?.len();
            let log_n = (n as f64).ln();
            let max = f.max().map(|m| m.1).unwrap_or(0.0);
            Ok((count, max / (log_n * log_n), f.visited()))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (r, &(c, m, v)) in rows.iter().enumerate() {
            per_replica.push(row![n, r, c, m, v]);
        }
        let counts: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let ratios: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let (mc, mr) = (median(&counts), median(&ratios));
        summary.push(row![n, mc, mr]);
        medians.push((n, mc, mr));
    }
    if medians.iter().any(|m| !(m.1 > 0.0)) {
        out.checks.push(
            StatReport::margin("fractal-slope", 0.0, 1.0, Provenance::Published)
                .with_note("a median thick-point count is zero; slope undefined"),
        );
    } else {
        let fit = loglog_slope(
            &medians
                .iter()
                .map(|m| (m.0 as f64, m.1))
                .collect::<Vec<_>>(),
        )?;
        let want = 2.0 * (1.0 - a);
        out.checks.push(
            StatReport::absolute_error(
                "fractal-slope",
                fit.slope,
                want,
                0.25,
                Provenance::Published,
            )
            .with_note(format!("fit se {:.3}, r2 {:.4}", fit.se, fit.r2)),
        );
    }
    let last = medians.last().expect("at least three radii");
    out.checks.push(
        StatReport::relative_error(
            "max-ratio-median",
            last.2,
            max_coefficient,
            0.25,
            Provenance::Published,
        )
        .with_note(format!(
            "n = {}, target {:.6} = 2/(pi·sqrt(det))",
            last.0, max_coefficient
        )),
    );
    let second = medians[1];
    out.checks.push(
        StatReport::margin(
            "max-ratio-trend",
            (second.2 - max_coefficient).abs() - (last.2 - max_coefficient).abs(),
            0.0,
            Provenance::Derived,
        )
        .with_note(format!(
            "distance to {:.4}: {:.4} at n = {}, {:.4} at n = {}",
            max_coefficient,
            (second.2 - max_coefficient).abs(),
            second.0,
            (last.2 - max_coefficient).abs(),
            last.0
        )),
    );
    out.tables.push(summary);
    out.tables.push(per_replica);
    Ok(out)
}
