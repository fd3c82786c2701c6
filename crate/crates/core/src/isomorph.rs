//! Monte Carlo harnesses for the exact finite-N identities linking walk
//! local times and Gaussian free fields.
//!
//! Eisenbaum's isomorphism: for s > 0 and bounded f,
//!   E_{x₀}⊗E[f(ℓ^{τ_N} + ½(φ+s)²)] = E[(1 + φ(x₀)/s) f(½(φ+s)²)].
//! Generalized second Ray-Knight theorem on the finite graph (V_N, E_N):
//!   ℓ^{τ_u} + ½ψ²  has the law of  ½(ψ + √(2u))²,
//! with ψ the GFF pinned at x₀ and τ_u the inverse local time at x₀.
//!
//! Both sides are estimated from independent streams; there is no coupling
//! because the identities hold in law only.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gff::Gff;
use crate::green::{exact_green, GreenOperator};
use crate::lattice::{Domain, VertexId, WeightedGraph};
use crate::rng::{map_replicas, map_replicas_with, Purpose, RngFactory};
use crate::stats::{
    bonferroni_z, dkw_epsilon, Moments, Provenance, StatReport, BASE_Z, DEFAULT_ALPHA,
};
use crate::walker::{run_until_local_time, Walker};

/// Function of a site-indexed vector v.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunctional {
    /// Σ_t c_t Π_{x ∈ sites_t} v_x, each monomial of degree ≤ 3. Unbounded.
    Polynomial { terms: Vec<(f64, Vec<usize>)> },
    /// exp(−Σ α_x v_x) with α_x ≥ 0; bounded by 1 on v ≥ 0.
    ExpDecay { alpha: Vec<(usize, f64)> },
    /// 1{lo_x ≤ v_x ≤ hi_x for every listed x}.
    BoxIndicator { bounds: Vec<(usize, f64, f64)> },
}

impl TestFunctional {
    pub fn exp_decay_all(n: usize, alpha: f64) -> Self {
        TestFunctional::ExpDecay {
            alpha: (0..n).map(|x| (x, alpha)).collect(),
        }
    }

    pub fn coordinate(x: usize) -> Self {
        TestFunctional::Polynomial {
            terms: vec![(1.0, vec![x])],
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, TestFunctional::Polynomial { .. })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad_site = |x: usize| x >= n;
        match self {
            TestFunctional::Polynomial { terms } => {
                if terms
                    .iter()
                    .any(|(_, s)| s.len() > 3 || s.iter().any(|&x| bad_site(x)))
                {
                    return Err(invalid(
                        "polynomial terms must have degree ≤ 3 on existing sites",
                    ));
                }
            }
            TestFunctional::ExpDecay { alpha } => {
                if alpha.iter().any(|&(x, a)| bad_site(x) || !(a >= 0.0)) {
                    return Err(invalid(
                        "exp-decay weights must be nonnegative on existing sites",
                    ));
                }
            }
            TestFunctional::BoxIndicator { bounds } => {
                if bounds.iter().any(|&(x, lo, hi)| bad_site(x) || !(lo <= hi)) {
                    return Err(invalid("box bounds must satisfy lo ≤ hi on existing sites"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            TestFunctional::Polynomial { terms } => terms
                .iter()
                .map(|(c, sites)| c * sites.iter().map(|&x| v[x]).product::<f64>())
                .sum(),
            TestFunctional::ExpDecay { alpha } => {
                (-alpha.iter().map(|&(x, a)| a * v[x]).sum::<f64>()).exp()
            }
            TestFunctional::BoxIndicator { bounds } => {
                if bounds.iter().all(|&(x, lo, hi)| v[x] >= lo && v[x] <= hi) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A functional with a display name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFunctional {
    pub name: String,
    pub functional: TestFunctional,
}

/// Default bounded suite on a domain with `n` sites, source slot `x0`, and
/// two further slots `a`, `b`.
pub fn default_suite(n: usize, x0: usize, a: usize, b: usize) -> Vec<NamedFunctional> {
    let named = |name: &str, functional| NamedFunctional {
        name: name.into(),
        functional,
    };
    vec![
        named("exp-sum-0.1", TestFunctional::exp_decay_all(n, 0.1)),
        named(
            "exp-source-0.5",
            TestFunctional::ExpDecay {
                alpha: vec![(x0, 0.5)],
            },
        ),
        named(
            "exp-pair-0.3",
            TestFunctional::ExpDecay {
                alpha: vec![(a, 0.3), (b, 0.3)],
            },
        ),
        named(
            "exp-mixed",
            TestFunctional::ExpDecay {
                alpha: vec![(x0, 0.2), (a, 0.7), (b, 0.05)],
            },
        ),
        named(
            "box-source-le-1",
            TestFunctional::BoxIndicator {
                bounds: vec![(x0, 0.0, 1.0)],
            },
        ),
        named(
            "box-joint",
            TestFunctional::BoxIndicator {
                bounds: vec![(x0, 0.5, 2.0), (a, 0.0, 1.5)],
            },
        ),
    ]
}

/// One compared quantity: both sides with their standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub z: f64,
    pub pass: bool,
}

impl ComparisonRow {
    fn new(name: String, lhs: &Moments, rhs: &Moments, threshold: f64) -> Self {
        let pooled = (lhs.se().powi(2) + rhs.se().powi(2)).sqrt();
        let d = lhs.mean() - rhs.mean();
        let z = if pooled > 0.0 {
            d / pooled
        } else if d.abs() <= 1e-12 * lhs.mean().abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY.copysign(d)
        };
        Self {
            name,
            lhs: lhs.mean(),
            rhs: rhs.mean(),
            se_lhs: lhs.se(),
            se_rhs: rhs.se(),
            z,
            pass: z.abs() <= threshold,
        }
    }

    pub fn pooled_se(&self) -> f64 {
        (self.se_lhs.powi(2) + self.se_rhs.powi(2)).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub n: u64,
    /// Per-comparison |z| threshold after the Bonferroni correction.
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub passed: bool,
}

impl IdentityReport {
    fn new(identity: &str, n: u64, threshold: f64, rows: Vec<ComparisonRow>) -> Self {
        let passed = rows.iter().all(|r| r.pass);
        Self {
            identity: identity.into(),
            n,
            threshold,
            rows,
            passed,
        }
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    pub fn to_stat_reports(&self) -> Vec<StatReport> {
        self.rows
            .iter()
            .map(|r| {
                StatReport::z_test(
                    format!("{}:{}", self.identity, r.name),
                    r.lhs,
                    r.pooled_se(),
                    self.n,
                    r.rhs,
                    Provenance::Published,
                    self.threshold,
                )
            })
            .collect()
    }
}

/// What stands on the walk side of an identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeftSide {
    /// Walk local times, as in the identity.
    Walk,
    /// ½χ² for an independent copy χ of the field: a deliberately wrong
    /// left-hand side used as a negative control.
    SquaredField,
}

/// Shared setup for the Eisenbaum harness.
pub struct EisenbaumHarness<'a> {
    graph: &'a WeightedGraph,
    domain: &'a Domain,
    green: GreenOperator,
    field: Gff,
    x0_slot: usize,
    s: f64,
}

impl<'a> EisenbaumHarness<'a> {
    pub fn new(graph: &'a WeightedGraph, domain: &'a Domain, x0: VertexId, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(invalid(format!("the shift s must be positive, got {s}")));
        }
        let x0_slot = domain
            .slot(x0)
            .ok_or_else(|| invalid(format!("source {x0} is not in the domain interior")))?;
        let green = exact_green(graph, domain)?;
        let field = Gff::dirichlet(&green);
        Ok(Self {
            graph,
            domain,
            green,
            field,
            x0_slot,
            s,
        })
    }

    pub fn green(&self) -> &GreenOperator {
        &self.green
    }

    pub fn x0_slot(&self) -> usize {
        self.x0_slot
    }

    /// Per-replica values of every functional on both sides.
    fn evaluate(
        &self,
        functionals: &[NamedFunctional],
        n: u64,
        factory: &RngFactory,
        left: LeftSide,
    ) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let m = self.domain.len();
        let s = self.s;
        let rows = map_replicas_with(
            n,
            || Walker::new(self.graph, self.domain),
            |walker, r| -> Result<(Vec<f64>, Vec<f64>)> {
                let ell = match left {
                    LeftSide::Walk => walker
                        .run_until_exit(
                            self.domain.interior()[self.x0_slot],
                            &mut factory.stream(Purpose::Walk, r),
                            r,
                        )?
                        .dense(self.domain),
                    LeftSide::SquaredField => self
                        .field
                        .sample(&mut factory.stream(Purpose::Custom(0x4e43), r))
                        .iter()
                        .map(|c| 0.5 * c * c)
                        .collect(),
                };
                let phi = self.field.sample(&mut factory.stream(Purpose::Field, r));
                let v_lhs: Vec<f64> = (0..m)
                    .map(|x| ell[x] + 0.5 * (phi[x] + s).powi(2))
                    .collect();
                let psi = self.field.sample(&mut factory.stream(Purpose::AuxField, r));
                let weight = 1.0 + psi[self.x0_slot] / s;
                let v_rhs: Vec<f64> = psi.iter().map(|p| 0.5 * (p + s).powi(2)).collect();
                Ok((
                    functionals
                        .iter()
                        .map(|f| f.functional.eval(&v_lhs))
                        .collect(),
                    functionals
                        .iter()
                        .map(|f| weight * f.functional.eval(&v_rhs))
                        .collect(),
                ))
            },
        );
        rows.into_iter().collect()
    }

    pub fn run(
        &self,
        functionals: &[NamedFunctional],
        n: u64,
        factory: &RngFactory,
        left: LeftSide,
    ) -> Result<IdentityReport> {
        for f in functionals {
            f.functional.validate(self.domain.len())?;
        }
        let values = self.evaluate(functionals, n, factory, left)?;
        let threshold = bonferroni_z(BASE_Z, functionals.len());
        let rows = functionals
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let mut l = Moments::new();
                let mut r = Moments::new();
                for (a, b) in &values {
                    l.push(a[k]);
                    r.push(b[k]);
                }
                ComparisonRow::new(f.name.clone(), &l, &r, threshold)
            })
            .collect();
        let name = match left {
            LeftSide::Walk => "eisenbaum",
            LeftSide::SquaredField => "eisenbaum-negative-control",
        };
        Ok(IdentityReport::new(name, n, threshold, rows))
    }

    /// Closed form of both sides for f(v) = v_y: G(x₀,y) + ½(G(y,y) + s²).
    /// The right side reduces to the same value because E φ³ = 0.
    pub fn coordinate_closed_form(&self, y: usize) -> f64 {
        self.green.get(self.x0_slot, y) + 0.5 * (self.green.get(y, y) + self.s * self.s)
    }

    /// Monte Carlo of both sides for f(v) = v_y, each z-tested against the
    /// closed form.
    pub fn coordinate_self_test(
        &self,
        y: usize,
        n: u64,
        factory: &RngFactory,
    ) -> Result<Vec<StatReport>> {
        let f = [NamedFunctional {
            name: format!("coordinate-{y}"),
            functional: TestFunctional::coordinate(y),
        }];
        let values = self.evaluate(&f, n, factory, LeftSide::Walk)?;
        let lhs = Moments::from_slice(&values.iter().map(|v| v.0[0]).collect::<Vec<_>>());
        let rhs = Moments::from_slice(&values.iter().map(|v| v.1[0]).collect::<Vec<_>>());
        let want = self.coordinate_closed_form(y);
        let t = bonferroni_z(BASE_Z, 2);
        Ok(vec![
            StatReport::z_test(
                "coordinate-lhs",
                lhs.mean(),
                lhs.se(),
                n,
                want,
                Provenance::Derived,
                t,
            ),
            StatReport::z_test(
                "coordinate-rhs",
                rhs.mean(),
                rhs.se(),
                n,
                want,
                Provenance::Derived,
                t,
            ),
        ])
    }
}

pub fn verify_eisenbaum(
    graph: &WeightedGraph,
    domain: &Domain,
    x0: VertexId,
    s: f64,
    functionals: &[NamedFunctional],
    n: u64,
    factory: &RngFactory,
) -> Result<IdentityReport> {
    EisenbaumHarness::new(graph, domain, x0, s)?.run(functionals, n, factory, LeftSide::Walk)
}

/// Which moments the Ray-Knight harness compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentBudget {
    pub first: bool,
    pub second: bool,
    /// Upper bound on the number of compared quantities.
    pub budget: usize,
}

impl Default for MomentBudget {
    fn default() -> Self {
        Self {
            first: true,
            second: true,
            budget: 64,
        }
    }
}

/// Shared samples for the Ray-Knight harness on (V_N, E_N).
pub struct RayKnightHarness {
    graph: WeightedGraph,
    pin: VertexId,
    field: Gff,
    u: f64,
}

#[derive(Clone, Debug)]
pub struct RayKnightSamples {
    pub lhs: Vec<Vec<f64>>,
    pub rhs: Vec<Vec<f64>>,
    /// max_x √ℓ_x^{τ_u} per replica.
    pub lhs_sqrt_max: Vec<f64>,
    /// max_x |ψ(x) + √(2u)| / √2 per replica.
    pub rhs_abs_max: Vec<f64>,
}

impl RayKnightHarness {
    /// `graph` and `domain` describe V_N inside a larger graph; the walk and
    /// the pinned field live on the restricted graph (V_N, E_N).
    pub fn new(graph: &WeightedGraph, domain: &Domain, x0: VertexId, u: f64) -> Result<Self> {
        if !(u > 0.0) {
            return Err(invalid(format!(
                "local-time level u must be positive, got {u}"
            )));
        }
        let pin = domain
            .slot(x0)
            .ok_or_else(|| invalid(format!("pin {x0} is not in the domain interior")))?
            as VertexId;
        let restricted = graph.restrict(domain);
        let field = Gff::pinned(&restricted, pin)?;
        Ok(Self {
            graph: restricted,
            pin,
            field,
            u,
        })
    }

    pub fn pin(&self) -> VertexId {
        self.pin
    }

    pub fn field(&self) -> &Gff {
        &self.field
    }

    pub fn sample(&self, n: u64, factory: &RngFactory, left: LeftSide) -> Result<RayKnightSamples> {
        let c = (2.0 * self.u).sqrt();
        let rows = map_replicas(n, |r| -> Result<_> {
            let ell: Vec<f64> = match left {
                LeftSide::Walk => {
                    let f = run_until_local_time(
                        &self.graph,
                        self.pin,
                        self.u,
                        &mut factory.stream(Purpose::Walk, r),
                    )?;
                    let mut dense = vec![0.0; self.graph.num_vertices()];
                    for &(v, l) in &f.local_times {
                        dense[v as usize] = l;
                    }
                    dense
                }
                LeftSide::SquaredField => self
                    .field
                    .sample(&mut factory.stream(Purpose::Custom(0x4e43), r))
                    .iter()
                    .map(|x| 0.5 * x * x)
                    .collect(),
            };
            let psi = self.field.sample(&mut factory.stream(Purpose::Field, r));
            let lhs: Vec<f64> = ell.iter().zip(&psi).map(|(l, p)| l + 0.5 * p * p).collect();
            // both maxima carry an atom at √u from the pin; computing it the same
            // way on both sides keeps rounding from splitting the atom
            let pin = self.pin as usize;
            let floor = self.u.sqrt();
            let off_pin = |v: &[f64]| {
                v.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != pin)
                    .map(|(_, &x)| x)
                    .collect::<Vec<_>>()
            };
            let sqrt_max = off_pin(&ell).iter().map(|l| l.sqrt()).fold(floor, f64::max);
            let psi2 = self.field.sample(&mut factory.stream(Purpose::AuxField, r));
            let rhs: Vec<f64> = psi2.iter().map(|p| 0.5 * (p + c).powi(2)).collect();
            let abs_max = off_pin(&psi2)
                .iter()
                .map(|p| (p + c).abs() / std::f64::consts::SQRT_2)
                .fold(floor, f64::max);
            Ok((lhs, rhs, sqrt_max, abs_max))
        });
        let mut out = RayKnightSamples {
            lhs: Vec::with_capacity(n as usize),
            rhs: Vec::with_capacity(n as usize),
            lhs_sqrt_max: Vec::with_capacity(n as usize),
            rhs_abs_max: Vec::with_capacity(n as usize),
        };
        for row in rows {
            let (l, r, a, b) = row?;
            out.lhs.push(l);
            out.rhs.push(r);
            out.lhs_sqrt_max.push(a);
            out.rhs_abs_max.push(b);
        }
        Ok(out)
    }

    /// Largest |v(x₀) − u| over all samples on both sides.
    pub fn pin_defect(&self, samples: &RayKnightSamples) -> f64 {
        let p = self.pin as usize;
        samples
            .lhs
            .iter()
            .chain(&samples.rhs)
            .map(|v| (v[p] - self.u).abs())
            .fold(0.0, f64::max)
    }

    pub fn compare(
        &self,
        samples: &RayKnightSamples,
        moments: MomentBudget,
        left: LeftSide,
    ) -> IdentityReport {
        let n_sites = self.graph.num_vertices();
        let mut quantities: Vec<(String, Vec<usize>)> = Vec::new();
        if moments.first {
            quantities.extend((0..n_sites).map(|x| (format!("E[v{x}]"), vec![x])));
        }
        if moments.second {
            for x in 0..n_sites {
                for y in x..n_sites {
                    quantities.push((format!("E[v{x}*v{y}]"), vec![x, y]));
                }
            }
        }
        // both sides are identically u (or u²) at the pin; `pin_defect` covers it
        let pin = self.pin() as usize;
        quantities.retain(|(_, sites)| sites.iter().any(|&x| x != pin));
        quantities.truncate(moments.budget);
        let threshold = bonferroni_z(BASE_Z, quantities.len());
        let rows = quantities
            .into_iter()
            .map(|(name, sites)| {
                let eval = |v: &Vec<f64>| sites.iter().map(|&x| v[x]).product::<f64>();
                let mut l = Moments::new();
                let mut r = Moments::new();
                for v in &samples.lhs {
                    l.push(eval(v));
                }
                for v in &samples.rhs {
                    r.push(eval(v));
                }
                ComparisonRow::new(name, &l, &r, threshold)
            })
            .collect();
        let name = match left {
            LeftSide::Walk => "ray-knight",
            LeftSide::SquaredField => "ray-knight-negative-control",
        };
        IdentityReport::new(name, samples.lhs.len() as u64, threshold, rows)
    }
}

pub fn verify_ray_knight(
    graph: &WeightedGraph,
    domain: &Domain,
    x0: VertexId,
    u: f64,
    moments: MomentBudget,
    n: u64,
    factory: &RngFactory,
) -> Result<IdentityReport> {
    let h = RayKnightHarness::new(graph, domain, x0, u)?;
    let s = h.sample(n, factory, LeftSide::Walk)?;
    Ok(h.compare(&s, moments, LeftSide::Walk))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    /// sup_t (F_rhs(t) − F_lhs(t)); the domination predicts ≤ 0.
    pub max_excess: f64,
    pub band: f64,
    pub n: u64,
    pub passed: bool,
}

impl DominationReport {
    pub fn to_stat_report(&self) -> StatReport {
        StatReport::margin(
            "stochastic-domination",
            self.band - self.max_excess,
            0.0,
            Provenance::Published,
        )
        .with_note(format!(
            "sup(F_rhs - F_lhs) = {:.4e}, band {:.4e}",
            self.max_excess, self.band
        ))
    }
}

/// Check that max_x √ℓ_x^{τ_u} is stochastically below
/// max_x |ψ(x) + √(2u)|/√2: the empirical CDF of the second may exceed
/// that of the first by at most 2·ε_DKW(n, 0.01).
pub fn domination_from_samples(lhs_max: &[f64], rhs_max: &[f64]) -> DominationReport {
    let mut a = lhs_max.to_vec();
    let mut b = rhs_max.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut max_excess = f64::NEG_INFINITY;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        max_excess = max_excess.max(j as f64 / nb - i as f64 / na);
    }
    let n = a.len().min(b.len());
    let band = 2.0 * dkw_epsilon(n, DEFAULT_ALPHA);
    DominationReport {
        max_excess,
        band,
        n: n as u64,
        passed: max_excess <= band,
    }
}

pub fn stochastic_domination_check(
    graph: &WeightedGraph,
    domain: &Domain,
    x0: VertexId,
    u: f64,
    n: u64,
    factory: &RngFactory,
) -> Result<DominationReport> {
    let h = RayKnightHarness::new(graph, domain, x0, u)?;
    let s = h.sample(n, factory, LeftSide::Walk)?;
    Ok(domination_from_samples(&s.lhs_sqrt_max, &s.rhs_abs_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_box, RateModel};

    #[test]
    fn functional_evaluation() {
        let v = [1.0, 2.0, 3.0];
        let p = TestFunctional::Polynomial {
            terms: vec![(2.0, vec![0, 1]), (1.0, vec![2, 2, 2])],
        };
        assert_eq!(p.eval(&v), 4.0 + 27.0);
        assert!(!p.is_bounded());
        let e = TestFunctional::ExpDecay {
            alpha: vec![(1, 0.5)],
        };
        assert!((e.eval(&v) - (-1.0f64).exp()).abs() < 1e-15);
        let b = TestFunctional::BoxIndicator {
            bounds: vec![(0, 0.0, 1.0), (2, 2.0, 4.0)],
        };
        assert_eq!(b.eval(&v), 1.0);
        assert_eq!(b.eval(&[1.5, 0.0, 3.0]), 0.0);
        assert!(TestFunctional::ExpDecay {
            alpha: vec![(5, 1.0)]
        }
        .validate(3)
        .is_err());
        assert!(TestFunctional::Polynomial {
            terms: vec![(1.0, vec![0, 0, 0, 0])]
        }
        .validate(3)
        .is_err());
    }

    #[test]
    fn constant_functional_is_one_on_both_sides_in_mean() {
        let b = build_box(2, 1, RateModel::UnitRate).unwrap();
        let h = EisenbaumHarness::new(&b.graph, &b.domain, b.origin(), 1.0).unwrap();
        let one = [NamedFunctional {
            name: "one".into(),
            functional: TestFunctional::BoxIndicator { bounds: vec![] },
        }];
        let rep = h
            .run(&one, 4000, &RngFactory::new(1), LeftSide::Walk)
            .unwrap();
        assert_eq!(rep.rows[0].lhs, 1.0);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn closed_form_sides_agree() {
        let b = build_box(2, 1, RateModel::UnitRate).unwrap();
        let h = EisenbaumHarness::new(&b.graph, &b.domain, b.origin(), 1.0).unwrap();
        let x0 = h.x0_slot();
        let g = h.green().get(x0, x0);
        assert!((h.coordinate_closed_form(x0) - (1.5 * g + 0.5)).abs() < 1e-14);
        let reps = h
            .coordinate_self_test(x0, 20_000, &RngFactory::new(2))
            .unwrap();
        assert!(reps.iter().all(|r| r.passed()), "{reps:?}");
    }

    #[test]
    fn pin_identity_is_exact() {
        let b = build_box(2, 1, RateModel::UnitRate).unwrap();
        for u in [0.5, 2.0] {
            let h = RayKnightHarness::new(&b.graph, &b.domain, b.origin(), u).unwrap();
            let s = h.sample(500, &RngFactory::new(3), LeftSide::Walk).unwrap();
            assert!(h.pin_defect(&s) <= 1e-12 * u);
        }
    }

    #[test]
    fn two_vertex_first_moment() {
        // 0-1 with W = 1, pinned at 0: E ℓ_1^{τ_u} = u and Var ψ(1) = 1, so
        // both sides of the first moment at 1 equal u + ½.
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], 0, Vec::new()).unwrap();
        let d = Domain::graph_ball(&g, 0, 1).unwrap();
        assert_eq!(d.interior(), &[0, 1]);
        let h = RayKnightHarness::new(&g, &d, 0, 1.5).unwrap();
        let cov = h.field().covariance();
        assert!((cov[3] - 1.0).abs() < 1e-15);
        let s = h
            .sample(20_000, &RngFactory::new(4), LeftSide::Walk)
            .unwrap();
        let rep = h.compare(
            &s,
            MomentBudget {
                first: true,
                second: false,
                budget: 8,
            },
            LeftSide::Walk,
        );
        assert!(rep.passed, "{rep:?}");
        let l = Moments::from_slice(&s.lhs.iter().map(|v| v[1]).collect::<Vec<_>>());
        assert!((l.mean() - 2.0).abs() < 4.0 * l.se());
    }

    #[test]
    fn domination_band_logic() {
        let small: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let large: Vec<f64> = small.iter().map(|x| x + 0.5).collect();
        assert!(domination_from_samples(&small, &large).passed);
        assert!(!domination_from_samples(&large, &small).passed);
    }
}
