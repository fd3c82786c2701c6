use super::{Section, Table};
use crate::config::{ExperimentConfig, GraphPreset};
use crate::error::{Error, Result};
use crate::isomorph::{
    default_suite, domination_from_samples, EisenbaumHarness, IdentityReport, LeftSide,
    MomentBudget, RayKnightHarness,
};
use crate::lattice::{build_box, BoxLattice, RateModel};
use crate::rng::RngFactory;
use crate::stats::{Provenance, StatReport, Statistic};

fn identity_box(cfg: &ExperimentConfig) -> Result<BoxLattice> {
    let model = match cfg.preset {
        GraphPreset::BoxUnitRate => RateModel::UnitRate,
        GraphPreset::BoxUnitConductance => RateModel::UnitConductance,
        other => {
            return Err(Error::Config(format!(
                "identity harnesses run on box presets, got {other:?}"
            )))
        }
    };
    let n = *cfg
        .n
        .first()
        .ok_or_else(|| Error::Config("identity harnesses need a box radius in `n`".into()))?;
    build_box(cfg.dim, n, model)
}

fn push_rows(table: &mut Table, label: &str, rep: &IdentityReport) {
    for r in &rep.rows {
        table.push(row![
            label,
            rep.identity,
            r.name,
            r.lhs,
            r.rhs,
            r.se_lhs,
            r.se_rhs,
            r.z,
            r.pass
        ]);
    }
}

const ROW_HEADER: &[&str] = &[
    "case", "identity", "quantity", "lhs", "rhs", "se_lhs", "se_rhs", "z", "pass",
];

/// The negative control passes when the harness rejects the wrong identity.
fn control_check(rep: &IdentityReport, label: &str) -> StatReport {
    StatReport::margin(
        format!("{}-detected-{label}", rep.identity),
        rep.max_abs_z() - rep.threshold,
        0.0,
        Provenance::Trivial,
    )
    .with_note(format!(
        "max |z| = {:.2} against threshold {:.2}",
        rep.max_abs_z(),
        rep.threshold
    ))
}

pub(super) fn eisenbaum(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let b = identity_box(cfg)?;
    let x0 = b.origin();
    let h = EisenbaumHarness::new(&b.graph, &b.domain, x0, cfg.params.s)?;
    let slot = |site: &[i64]| b.vertex_at(site).and_then(|v| b.domain.slot(v));
    let mut e1 = vec![0i64; cfg.dim];
    e1[0] = 1;
    let mut e2 = vec![0i64; cfg.dim];
    e2[cfg.dim - 1] = -1;
    let (a, c) = match (slot(&e1), slot(&e2)) {
        (Some(a), Some(c)) => (a, c),
        _ => {
            return Err(Error::Config(
                "eisenbaum needs a box of radius at least 1".into(),
            ))
        }
    };
    let suite = default_suite(b.domain.len(), h.x0_slot(), a, c);
    let mut out = Section::default();
    let mut table = Table::new("eisenbaum", ROW_HEADER);

    let rep = h.run(&suite, cfg.replicas, &factory.derive(1), LeftSide::Walk)?;
    push_rows(&mut table, "identity", &rep);
    out.checks.extend(rep.to_stat_reports());

    let self_test = h.coordinate_self_test(h.x0_slot(), cfg.replicas, &factory.derive(2))?;
    for r in &self_test {
        table.push(row![
            "self-test",
            "eisenbaum",
            r.name,
            r.estimate,
            r.target,
            r.se,
            0.0,
            r.value,
            r.passed()
        ]);
    }
    out.checks.extend(self_test.into_iter().map(|r| {
        r.with_note(format!(
            "closed form 1.5·G(x0,x0) + s²/2 = {:.6}",
            h.coordinate_closed_form(h.x0_slot())
        ))
    }));

    if cfg.params.negative_control {
        let control = h.run(
            &suite,
            cfg.replicas,
            &factory.derive(3),
            LeftSide::SquaredField,
        )?;
        push_rows(&mut table, "negative-control", &control);
        out.checks.push(control_check(&control, "squared-field"));
    }
    out.tables.push(table);
    Ok(out)
}

pub(super) fn ray_knight(cfg: &ExperimentConfig, factory: &RngFactory) -> Result<Section> {
    let b = identity_box(cfg)?;
    if cfg.params.u.is_empty() {
        return Err(Error::Config(
            "ray-knight needs at least one level in params.u".into(),
        ));
    }
    let budget = MomentBudget {
        first: true,
        second: true,
        budget: cfg.params.moment_budget,
    };
    let mut out = Section::default();
    let mut table = Table::new("ray_knight", ROW_HEADER);
    let mut dom = Table::new("domination", &["u", "max_excess", "band", "n"]);
    for (i, &u) in cfg.params.u.iter().enumerate() {
        let h = RayKnightHarness::new(&b.graph, &b.domain, b.origin(), u)?;
        let sub = factory.derive(i as u64);
        let samples = h.sample(cfg.replicas, &sub, LeftSide::Walk)?;
        let label = format!("u={u}");
        let rep = h.compare(&samples, budget, LeftSide::Walk);
        push_rows(&mut table, &label, &rep);
        out.checks
            .extend(rep.to_stat_reports().into_iter().map(|r| StatReport {
                name: format!("{}-{label}", r.name),
                ..r
            }));
        out.checks.push(StatReport::at_most(
            format!("ray-knight-pin-identity-{label}"),
            Statistic::AbsoluteError,
            h.pin_defect(&samples),
            1e-12 * u,
            2 * cfg.replicas,
            Provenance::Trivial,
        ));
        let d = domination_from_samples(&samples.lhs_sqrt_max, &samples.rhs_abs_max);
        dom.push(row![u, d.max_excess, d.band, d.n]);
        let mut dr = d.to_stat_report();
        dr.name = format!("{}-{label}", dr.name);
        out.checks.push(dr);

        if cfg.params.negative_control {
            let wrong = h.sample(cfg.replicas, &sub.derive(99), LeftSide::SquaredField)?;
            let control = h.compare(&wrong, budget, LeftSide::SquaredField);
            push_rows(&mut table, &label, &control);
            out.checks.push(control_check(&control, &label));
        }
    }
    out.tables.push(table);
    out.tables.push(dom);
    Ok(out)
}
