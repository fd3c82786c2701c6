//! The identity harnesses must accept the true identities and reject a wrong one.

use thicket::isomorph::{
    default_suite, stochastic_domination_check, EisenbaumHarness, LeftSide, MomentBudget,
    RayKnightHarness,
};
use thicket::lattice::{build_box, RateModel};
use thicket::rng::RngFactory;

const N: u64 = 40_000;

#[test]
fn eisenbaum_accepts_walk_and_rejects_squared_field() {
    let b = build_box(2, 1, RateModel::UnitRate).unwrap();
    let h = EisenbaumHarness::new(&b.graph, &b.domain, b.origin(), 1.0).unwrap();
    let suite = default_suite(b.domain.len(), h.x0_slot(), 0, 8);
    let factory = RngFactory::new(21);
    let ok = h.run(&suite, N, &factory, LeftSide::Walk).unwrap();
    assert!(ok.passed, "max |z| = {}", ok.max_abs_z());
    let wrong = h
        .run(&suite, N, &factory.derive(1), LeftSide::SquaredField)
        .unwrap();
    assert!(
        !wrong.passed,
        "negative control slipped through: max |z| = {}",
        wrong.max_abs_z()
    );
}

#[test]
fn ray_knight_accepts_walk_and_rejects_squared_field() {
    let b = build_box(2, 1, RateModel::UnitRate).unwrap();
    let budget = MomentBudget {
        first: true,
        second: true,
        budget: 64,
    };
    for (i, u) in [0.5, 2.0].into_iter().enumerate() {
        let h = RayKnightHarness::new(&b.graph, &b.domain, b.origin(), u).unwrap();
        let factory = RngFactory::new(22).derive(i as u64);
        let s = h.sample(N, &factory, LeftSide::Walk).unwrap();
        assert!(h.compare(&s, budget, LeftSide::Walk).passed, "u = {u}");
        assert!(h.pin_defect(&s) <= 1e-12 * u);
        let w = h
            .sample(N, &factory.derive(1), LeftSide::SquaredField)
            .unwrap();
        assert!(
            !h.compare(&w, budget, LeftSide::SquaredField).passed,
            "u = {u}"
        );
    }
}

#[test]
fn domination_band_holds() {
    let b = build_box(2, 1, RateModel::UnitRate).unwrap();
    for u in [0.5, 1.0, 2.0] {
        let d = stochastic_domination_check(
            &b.graph,
            &b.domain,
            b.origin(),
            u,
            N,
            &RngFactory::new(23),
        )
        .unwrap();
        assert!(
            d.passed,
            "u = {u}: excess {} > band {}",
            d.max_excess, d.band
        );
    }
}
