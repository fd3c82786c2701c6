//! Discrete Gaussian free fields.
//!
//! A field with covariance G = (−L)⁻¹ is sampled as φ = R⁻ᵀ z where
//! −L = R Rᵀ is the sparse Cholesky factor of the precision matrix and z is
//! standard normal: Cov(φ) = R⁻ᵀ R⁻¹ = (R Rᵀ)⁻¹ = G exactly.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::artifact::write_f64_array;
use crate::error::{invalid, Error, Result};
use crate::green::linalg::{SkylineCholesky, SparseSym};
use crate::green::GreenOperator;
use crate::lattice::{Domain, VertexId, WeightedGraph};
use crate::rng::{map_replicas, Purpose, RngFactory};
use crate::stats::{Moments, Provenance, StatReport};

pub const MIN_ESS: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    /// Zero boundary condition outside a domain interior.
    Dirichlet,
    /// Vanishes at a single pinned vertex of a finite graph.
    Pinned,
}

/// A factored GFF ready for sampling. Samples are indexed by site: the
/// domain interior for the Dirichlet flavor, every vertex of the finite
/// graph for the pinned flavor.
#[derive(Clone, Debug)]
pub struct Gff {
    flavor: Flavor,
    sites: Vec<VertexId>,
    /// Site index of each factor row (all sites but the pin).
    free: Vec<usize>,
    pin_slot: Option<usize>,
    factor: SkylineCholesky,
    scale: f64,
}

impl Gff {
    /// Dirichlet GFF with the covariance of `green`.
    pub fn dirichlet(green: &GreenOperator) -> Self {
        let n = green.len();
        Self {
            flavor: Flavor::Dirichlet,
            sites: green.interior().to_vec(),
            free: (0..n).collect(),
            pin_slot: None,
            factor: green.factor().clone(),
            scale: 1.0,
        }
    }

    /// Dirichlet GFF on `domain` without forming the dense covariance.
    pub fn from_domain(graph: &WeightedGraph, domain: &Domain) -> Result<Self> {
        let a = SparseSym::generator(graph, domain);
        let factor = SkylineCholesky::factor(&a)?;
        Ok(Self {
            flavor: Flavor::Dirichlet,
            sites: domain.interior().to_vec(),
            free: (0..domain.len()).collect(),
            pin_slot: None,
            factor,
            scale: 1.0,
        })
    }

    /// GFF on a finite graph pinned to 0 at `pin`: covariance
    /// E_x[ℓ_y^{τ_pin}], the Green function of the walk killed at the pin.
    pub fn pinned(graph: &WeightedGraph, pin: VertexId) -> Result<Self> {
        let domain = Domain::punctured(graph, pin)?;
        if domain.is_empty() {
            return Err(invalid(
                "pinned field needs at least one vertex besides the pin",
            ));
        }
        let a = SparseSym::generator(graph, &domain);
        let factor = SkylineCholesky::factor(&a)?;
        Ok(Self {
            flavor: Flavor::Pinned,
            sites: (0..graph.num_vertices() as VertexId).collect(),
            free: domain.interior().iter().map(|&v| v as usize).collect(),
            pin_slot: Some(pin as usize),
            factor,
            scale: 1.0,
        })
    }

    /// The same field with covariance c²G. Sampling uses the same normal
    /// draws, so a sample of the scaled field is c times the original.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale *= c;
        out
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn sites(&self) -> &[VertexId] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn pin_slot(&self) -> Option<usize> {
        self.pin_slot
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut z = vec![0.0; self.free.len()];
        self.sample_into(rng, &mut z, &mut out);
        out
    }

    /// Sample into `out` (length `len()`), using `z` (length = number of
    /// free sites) as scratch.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut x = vec![0.0; z.len()];
        self.factor.apply_inverse_transpose_factor(z, &mut x);
        for (k, &site) in self.free.iter().enumerate() {
            out[site] = self.scale * x[k];
        }
        if let Some(p) = self.pin_slot {
            out[p] = 0.0;
        }
    }

    /// Dense covariance, site-indexed (zero row and column at the pin).
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.len();
        let m = self.free.len();
        let inv = self.factor.dense_inverse();
        let mut out = vec![0.0; n * n];
        let s2 = self.scale * self.scale;
        for a in 0..m {
            for b in 0..m {
                out[self.free[a] * n + self.free[b]] = s2 * inv[a * m + b];
            }
        }
        out
    }

    /// Samples for replicas `0..n` of stream `purpose`, in replica order.
    pub fn sample_many(&self, n: u64, factory: &RngFactory, purpose: Purpose) -> Vec<Vec<f64>> {
        map_replicas(n, |r| self.sample(&mut factory.stream(purpose, r)))
    }
}

pub fn sample_dirichlet<R: Rng + ?Sized>(green: &GreenOperator, rng: &mut R) -> Vec<f64> {
    Gff::dirichlet(green).sample(rng)
}

pub fn sample_pinned<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    pin: VertexId,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(Gff::pinned(graph, pin)?.sample(rng))
}

/// Samples as an m × n binary array with a JSON sidecar.
pub fn write_samples(path: &Path, field: &Gff, samples: &[Vec<f64>]) -> Result<String> {
    let n = field.len();
    let mut flat = Vec::with_capacity(samples.len() * n);
    for s in samples {
        if s.len() != n {
            return Err(invalid("sample length does not match the field"));
        }
        flat.extend_from_slice(s);
    }
    let meta = serde_json::json!({
        "kind": "gff-samples",
        "flavor": field.flavor,
        "sites": field.sites,
        "pin_slot": field.pin_slot,
        "scale": field.scale,
    });
    write_f64_array(path, &flat, &[samples.len(), n], meta)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TiltCheck {
    pub ess: f64,
    pub max_abs_z: f64,
    pub weight_mean: StatReport,
    pub sites: Vec<StatReport>,
}

impl TiltCheck {
    pub fn passed(&self) -> bool {
        self.weight_mean.passed() && self.sites.iter().all(|r| r.passed())
    }
}

/// Importance-weighted mean of φ under w = exp(δ·φ − ½ δᵀGδ), compared
/// with the shifted mean Gδ predicted for the tilted law.
pub fn tilt_mean_check(
    green: &GreenOperator,
    delta: &[f64],
    n: u64,
    factory: &RngFactory,
    threshold: f64,
) -> Result<TiltCheck> {
    let m = green.len();
    if delta.len() != m {
        return Err(invalid("tilt vector must match the domain interior"));
    }
    let g_delta: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| green.get(i, j) * delta[j]).sum())
        .collect();
    let quad: f64 = delta.iter().zip(&g_delta).map(|(a, b)| a * b).sum();
    let field = Gff::dirichlet(green);
    let rows = map_replicas(n, |r| {
        let phi = field.sample(&mut factory.stream(Purpose::Field, r));
        let log_w = delta.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() - 0.5 * quad;
        (log_w, phi)
    });
    // ESS from shifted log-weights so that overflow cannot hide a collapse
    let top = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let (sw, sw2) = rows.iter().fold((0.0, 0.0), |(a, b), r| {
        let w = (r.0 - top).exp();
        (a + w, b + w * w)
    });
    let ess = sw * sw / sw2;
    if !(ess >= MIN_ESS) {
        return Err(Error::EssCollapse { ess, min: MIN_ESS });
    }
    let mut wm = Moments::new();
    let mut sites = vec![Moments::new(); m];
    for (log_w, phi) in &rows {
        let w = log_w.exp();
        wm.push(w);
        for (acc, x) in sites.iter_mut().zip(phi) {
            acc.push(w * x);
        }
    }
    let reports: Vec<StatReport> = sites
        .iter()
        .enumerate()
        .map(|(i, acc)| {
            StatReport::z_test(
                format!("tilted-mean-{}", green.interior()[i]),
                acc.mean(),
                acc.se(),
                n,
                g_delta[i],
                Provenance::Derived,
                threshold,
            )
        })
        .collect();
    let max_abs_z = reports.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    Ok(TiltCheck {
        ess,
        max_abs_z,
        weight_mean: StatReport::z_test(
            "weight-mean",
            wm.mean(),
            wm.se(),
            n,
            1.0,
            Provenance::Trivial,
            3.0,
        ),
        sites: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::exact_green;
    use crate::lattice::{build_box, RateModel};
    use approx::assert_relative_eq;

    #[test]
    fn single_site_is_standard_normal() {
        let b = build_box(3, 0, RateModel::UnitRate).unwrap();
        let g = exact_green(&b.graph, &b.domain).unwrap();
        let f = RngFactory::new(1);
        let field = Gff::dirichlet(&g);
        let xs: Vec<f64> = field
            .sample_many(20_000, &f, Purpose::Field)
            .iter()
            .map(|s| s[0])
            .collect();
        let m = Moments::from_slice(&xs);
        assert!(m.mean().abs() < 3.0 * m.se());
        assert!((m.variance() - 1.0).abs() < 4.0 * (2.0 / 20_000f64).sqrt());
    }

    #[test]
    fn pinned_two_vertex_variance() {
        // edge 0-1 with W = 2, pinned at 0: from 1 the walk waits Exp(rate 2)
        // and jumps to the pin, so Var φ(1) = E_1[ℓ_1] = 1/2.
        let g = WeightedGraph::from_edges(2, &[(0, 1, 2.0)], 0, Vec::new()).unwrap();
        let field = Gff::pinned(&g, 0).unwrap();
        let cov = field.covariance();
        assert_relative_eq!(cov[3], 0.5, epsilon = 1e-15);
        assert_eq!(cov[0], 0.0);
        let f = RngFactory::new(2);
        for s in field.sample_many(100, &f, Purpose::Field) {
            assert_eq!(s[0], 0.0);
        }
    }

    #[test]
    fn scaling_is_linear_bit_for_bit() {
        let b = build_box(2, 2, RateModel::UnitRate).unwrap();
        let g = exact_green(&b.graph, &b.domain).unwrap();
        let f = RngFactory::new(3);
        let base = Gff::dirichlet(&g);
        let c = 2.5;
        let scaled = base.scaled(c);
        let a = base.sample(&mut f.stream(Purpose::Field, 7));
        let s = scaled.sample(&mut f.stream(Purpose::Field, 7));
        for (x, y) in a.iter().zip(&s) {
            assert_eq!(c * x, *y);
        }
        let cov = base.covariance();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_relative_eq!(cov[i * g.len() + j], g.get(i, j), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn tilt_with_zero_vector_and_collapse() {
        let b = build_box(2, 1, RateModel::UnitRate).unwrap();
        let g = exact_green(&b.graph, &b.domain).unwrap();
        let f = RngFactory::new(4);
        let zero = tilt_mean_check(&g, &[0.0; 9], 2000, &f, 4.0).unwrap();
        assert!(zero.passed());
        assert_relative_eq!(zero.ess, 2000.0, epsilon = 1e-9);
        let huge = tilt_mean_check(&g, &[40.0; 9], 2000, &f, 4.0);
        assert!(matches!(huge, Err(Error::EssCollapse { .. })));
    }
}
