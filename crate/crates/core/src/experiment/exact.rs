use rand_distr::{Distribution, Poisson};

use super::{Section, Table};
use crate::config::{ExperimentConfig, GraphPreset};
use crate::error::{Error, Result};
use crate::green::{
    box_max_diagonal, exact_green, green_column_cg, lattice_green_constant,
    potential_slope_check_2d, watson_closed_form_d3, PlanarWalk,
};
use crate::lattice::{build_box, IsoradialSpec, RateModel, StepDistribution};
use crate::limits::{gamma_tail_bound, poisson_moment, stirling_surjection};
use crate::rng::{Purpose, RngFactory};
use crate::stats::{bonferroni_z, Moments, Provenance, StatReport, Statistic, BASE_Z};

/// Surjections {1..k} → {1..q} counted by enumerating all q^k maps.
fn brute_force_surjections(k: u32, q: u32) -> u128 {
    let total = (q as u64).pow(k);
    let mut count = 0u128;
    let mut hit = vec![false; q as usize];
    for mut code in 0..total {
        hit.iter_mut().for_each(|h| *h = false);
        for _ in 0..k {
            hit[(code % q as u64) as usize] = true;
            code /= q as u64;
        }
        if hit.iter().all(|&h| h) {
            count += 1;
        }
    }
    count
}

/// Σ_j j^k P(Poisson(λ) = j), summed until the remaining mass is < 1e−12
/// and the terms have stopped growing.
fn pmf_moment(lambda: f64, k: u32) -> f64 {
    let mut p = (-lambda).exp();
    let mut mass = p;
    let mut sum = 0.0;
    let mut j = 0u32;
    loop {
        let term = (j as f64).powi(k as i32) * p;
        sum += term;
        j += 1;
        p *= lambda / j as f64;
        mass += p;
        if 1.0 - mass < 1e-12 && j as f64 > lambda + 1.0 && term < 1e-18 * sum.max(1.0) {
            return sum;
        }
        if j > 10_000 {
            return sum;
        }
    }
}

pub(super) fn combinatorics(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let mut out = Section::default();
    let mut table = Table::new(
        "surjections",
        &[
            "k",
            "q",
            "partitions",
            "brute_force_surjections",
            "q_factorial",
        ],
    );
    let mut mismatches = 0u64;
    for k in 1..=7u32 {
        for q in 1..=k {
            let f = stirling_surjection(k, q)?;
            let brute = brute_force_surjections(k, q);
            let qf: u128 = (1..=q as u128).product();
            if f * qf != brute {
                mismatches += 1;
            }
            table.push(row![k, q, f, brute, qf]);
        }
    }
    out.checks.push(StatReport::at_most(
        "partition-counts-vs-enumeration",
        Statistic::AbsoluteError,
        mismatches as f64,
        0.0,
        table.rows.len() as u64,
        Provenance::Derived,
    ));
    out.tables.push(table);

    let mut table = Table::new(
        "poisson_moments",
        &["lambda", "k", "formula", "pmf_sum", "relative_error"],
    );
    let mut worst: f64 = 0.0;
    for &lambda in &[0.5, 1.0, 2.0, 5.0] {
        for k in 1..=6u32 {
            let f = poisson_moment(lambda, k)?;
            let direct = pmf_moment(lambda, k);
            let rel = (f - direct).abs() / direct;
            worst = worst.max(rel);
            table.push(row![lambda, k, f, direct, rel]);
        }
    }
    out.checks.push(StatReport::at_most(
        "poisson-moments-vs-pmf-sum",
        Statistic::RelativeError,
        worst,
        1e-9,
        24,
        Provenance::Derived,
    ));
    out.tables.push(table);

    let poisson = Poisson::new(2.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = factory.stream(Purpose::Custom(0x504f), 0);
    let draws: Vec<f64> = (0..cfg.replicas)
        .map(|_| poisson.sample(&mut rng))
        .collect();
    let t = bonferroni_z(BASE_Z, 4);
    for k in 1..=4u32 {
        let m = Moments::from_slice(&draws.iter().map(|x| x.powi(k as i32)).collect::<Vec<_>>());
        out.checks.push(StatReport::z_test(
            format!("poisson-moment-sampling-k{k}"),
            m.mean(),
            m.se(),
            cfg.replicas,
            poisson_moment(2.0, k)?,
            Provenance::Derived,
            t,
        ));
    }

    let mut table = Table::new("gamma_tail", &["k", "p", "theta", "t", "lhs", "rhs"]);
    let mut min_gap = f64::INFINITY;
    let mut equality_defect: f64 = 0.0;
    for k in 1..=3u32 {
        for p in 1..=3u32 {
            for &theta in &[0.5, 1.0, 2.0] {
                for &t in &[0.5, 2.0, 5.0] {
                    let (lhs, rhs) = gamma_tail_bound(k, p, theta, t)?;
                    min_gap = min_gap.min((rhs - lhs) / rhs);
                    if k == 1 && p == 1 {
                        equality_defect = equality_defect.max((lhs - rhs).abs());
                    }
                    table.push(row![k, p, theta, t, lhs, rhs]);
                }
            }
        }
    }
    out.checks.push(
        StatReport::margin(
            "gamma-tail-bound-holds",
            min_gap,
            -1e-14,
            Provenance::Published,
        )
        .with_note("min over the grid of (rhs - lhs) / rhs"),
    );
    out.checks.push(StatReport::at_most(
        "gamma-tail-equality-k1-p1",
        Statistic::AbsoluteError,
        equality_defect,
        0.0,
        9,
        Provenance::Trivial,
    ));
    out.tables.push(table);
    Ok(out)
}

/// Fit G_R(0,0) = g − c₁/R − c₂/R² through three radii and return g.
fn extrapolate(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() != 3 {
        return Err(Error::Config(
            "extrapolation needs exactly three radii".into(),
        ));
    }
    // rows [1, −1/R, −1/R²] · (g, c₁, c₂) = G_R
    let mut m = [[0.0; 4]; 3];
    for (row, &(r, gr)) in m.iter_mut().zip(points) {
        let r = r as f64;
        *row = [1.0, -1.0 / r, -1.0 / (r * r), gr];
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("nonempty");
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let pivot = m[col];
                let f = m[r][col] / pivot[col];
                for (a, p) in m[r].iter_mut().zip(pivot).skip(col) {
                    *a -= f * p;
                }
            }
        }
    }
    Ok(m[0][3] / m[0][0])
}

pub(super) fn green_exactness(cfg: &ExperimentConfig) -> Result<Section> {
    let mut out = Section::default();
    let mut table = Table::new(
        "green_invariants",
        &[
            "dim",
            "n",
            "sites",
            "symmetry_defect",
            "residual",
            "min_pivot",
            "min_entry",
            "g_center",
        ],
    );
    let sizes = cfg
        .params
        .n_2d
        .iter()
        .map(|&n| (2usize, n))
        .chain(cfg.n.iter().map(|&n| (3usize, n)));
    for (dim, n) in sizes {
        let b = build_box(dim, n, RateModel::UnitRate)?;
        let g = exact_green(&b.graph, &b.domain)?;
        let inv = g.invariants();
        let o = b.origin() as usize;
        table.push(row![
            dim,
            n,
            g.len(),
            inv.symmetry_defect,
            inv.residual,
            inv.min_pivot,
            inv.min_entry,
            g.get(o, o)
        ]);
        let tag = format!("d{dim}-n{n}");
        out.checks.push(StatReport::at_most(
            format!("green-symmetry-{tag}"),
            Statistic::AbsoluteError,
            inv.symmetry_defect,
            1e-10,
            g.len() as u64,
            Provenance::Trivial,
        ));
        out.checks.push(StatReport::at_most(
            format!("green-residual-{tag}"),
            Statistic::AbsoluteError,
            inv.residual,
            1e-8,
            g.len() as u64,
            Provenance::Trivial,
        ));
        out.checks.push(StatReport::margin(
            format!("green-positive-definite-{tag}"),
            inv.min_pivot,
            f64::MIN_POSITIVE,
            Provenance::Trivial,
        ));
    }
    out.tables.push(table);

    let gc = lattice_green_constant(3)?;
    let watson = watson_closed_form_d3();
    out.checks.push(
        StatReport::absolute_error(
            "g-quadrature-vs-closed-form",
            gc.value,
            watson,
            1e-3,
            Provenance::Published,
        )
        .with_note(format!("quadrature error estimate {:.1e}", gc.error)),
    );

    let mut table = Table::new("green_extrapolation", &["n", "g_center"]);
    let mut points = Vec::new();
    for &r in &cfg.params.extrapolation {
        let b = build_box(3, r, RateModel::UnitRate)?;
        let col = green_column_cg(&b.graph, &b.domain, b.origin(), 1e-12)?;
        let v = col[b.origin() as usize];
        table.push(row![r, v]);
        points.push((r, v));
    }
    if !points.is_empty() {
        let g_extra = extrapolate(&points)?;
        out.checks.push(
            StatReport::absolute_error(
                "g-extrapolated-vs-quadrature",
                g_extra,
                gc.value,
                1e-3,
                Provenance::Derived,
            )
            .with_note("G_R(0,0) = g - c1/R - c2/R^2 fitted through the listed radii"),
        );
    }
    out.tables.push(table);

    let mut table = Table::new("max_diagonal", &["n", "max_diagonal", "argmax", "g"]);
    for &n in &cfg.params.max_diagonal {
        let (m, site) = box_max_diagonal(3, n)?;
        let s: Vec<String> = site.iter().map(|c| c.to_string()).collect();
        table.push(row![n, m, s.join(":"), gc.value]);
        out.checks.push(
            StatReport::margin(
                format!("max-diagonal-below-g-n{n}"),
                gc.value - m,
                0.0,
                Provenance::Published,
            )
            .with_note(format!("max G_N(x,x) = {m:.8} at {}", s.join(":"))),
        );
    }
    out.tables.push(table);
    Ok(out)
}

pub(super) fn potential_slope(cfg: &ExperimentConfig) -> Result<Section> {
    let mut out = Section::default();
    let mut table = Table::new(
        "potential_slope",
        &["walk", "n", "g_center", "fit_slope", "theory"],
    );
    let reach = cfg.n.iter().copied().max().unwrap_or(0) as i64 + 2;
    let walk = match cfg.preset {
        GraphPreset::BoxUnitRate => PlanarWalk::Steps(StepDistribution::nearest_neighbor()),
        GraphPreset::StepDiagonal => PlanarWalk::Steps(StepDistribution::diagonal()),
        GraphPreset::IsoradialSquare => {
            let (spec, center) = IsoradialSpec::square(reach);
            PlanarWalk::Isoradial { spec, center }
        }
        GraphPreset::IsoradialTriangular => {
            let (spec, center) = IsoradialSpec::triangular(reach);
            PlanarWalk::Isoradial { spec, center }
        }
        GraphPreset::IsoradialHexagonal => {
            let (spec, center) = IsoradialSpec::hexagonal(reach);
            PlanarWalk::Isoradial { spec, center }
        }
        GraphPreset::BoxUnitConductance => {
            return Err(Error::Config(
                "potential-slope runs on unit-rate or isoradial presets".into(),
            ))
        }
    };
    let check = potential_slope_check_2d(&walk, &cfg.n, 0.15)?;
    let name = serde_json::to_value(cfg.preset)?
        .as_str()
        .unwrap_or("walk")
        .to_string();
    for &(n, g) in &check.points {
        table.push(row![name, n, g, check.fit.slope, check.theory]);
    }
    out.checks.extend(check.reports.into_iter().map(|r| {
        let n = format!("{}-{}", r.name, name);
        StatReport { name: n, ..r }
    }));
    out.tables.push(table);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_oracles() {
        assert_eq!(brute_force_surjections(3, 2), 6);
        assert_eq!(brute_force_surjections(4, 4), 24);
        assert!((pmf_moment(2.0, 3) - 22.0).abs() < 1e-10);
        assert!((pmf_moment(1.0, 2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extrapolation_is_exact_on_model() {
        let model = |r: f64| 1.5 - 0.4 / r - 0.7 / (r * r);
        let pts: Vec<(usize, f64)> = [10usize, 20, 40]
            .iter()
            .map(|&r| (r, model(r as f64)))
            .collect();
        assert!((extrapolate(&pts).unwrap() - 1.5).abs() < 1e-12);
    }
}
