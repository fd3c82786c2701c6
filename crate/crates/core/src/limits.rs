//! Limit laws for d ≥ 3: partition counts, Poisson and Gamma identities,
//! Brownian exit-time banks and the mixtures built from them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::artifact::{read_f64_array, write_f64_array};
use crate::error::{invalid, Error, Result};
use crate::green::{
    a_d_constant, kernel, sample_exit, CubeExit, Estimate, ExitSampler, HarmonicBank, CHUNK,
};
use crate::rng::{map_replicas, Purpose, RngFactory};
use crate::stats::Moments;
use crate::thick::{AxisBox, Interval};

/// Number of partitions of a k-set into q nonempty blocks,
/// (1/q!) Σ_i C(q,i)(−1)^{q−i} i^k, in checked integer arithmetic.
pub fn stirling_surjection(k: u32, q: u32) -> Result<u128> {
    if q == 0 || q > k {
        return Err(invalid(format!("need 1 ≤ q ≤ k, got k = {k}, q = {q}")));
    }
    let overflow = || Error::InvalidArgument(format!("f({k}→{q}) overflows 128-bit arithmetic"));
    let mut sum: i128 = 0;
    let mut binom: i128 = 1;
    for i in 0..=q {
        if i > 0 {
            binom = binom * (q - i + 1) as i128 / i as i128;
        }
        let power = (i as i128).checked_pow(k).ok_or_else(overflow)?;
        let term = binom.checked_mul(power).ok_or_else(overflow)?;
        sum = if (q - i).is_multiple_of(2) {
            sum.checked_add(term)
        } else {
            sum.checked_sub(term)
        }
        .ok_or_else(overflow)?;
    }
    let mut fact: i128 = 1;
    for j in 2..=q as i128 {
        fact *= j;
    }
    Ok((sum / fact) as u128)
}

/// k-th moment of a Poisson(λ) variable: Σ_q f(k→q) λ^q.
pub fn poisson_moment(lambda: f64, k: u32) -> Result<f64> {
    if !(lambda >= 0.0) || k == 0 {
        return Err(invalid(format!(
            "need λ ≥ 0 and k ≥ 1, got λ = {lambda}, k = {k}"
        )));
    }
    (1..=k).try_fold(0.0, |acc, q| {
        Ok(acc + stirling_surjection(k, q)? as f64 * lambda.powi(q as i32))
    })
}

/// P(Γ(p, θ) ≥ T)^k and the bound e^{−kT/θ} Σ_{q ≤ k(p−1)} (kT/θ)^q / q!.
pub fn gamma_tail_bound(k: u32, p: u32, theta: f64, t: f64) -> Result<(f64, f64)> {
    if k == 0 || p == 0 || !(theta > 0.0) || !(t > 0.0) {
        return Err(invalid("need k, p ≥ 1 and θ, T > 0"));
    }
    let x = t / theta;
    let truncated_exp = |x: f64, terms: u32| {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..=terms {
            term *= x / j as f64;
            sum += term;
        }
        sum
    };
    let tail = (-x).exp() * truncated_exp(x, p - 1);
    let kx = k as f64 * x;
    Ok((
        tail.powi(k as i32),
        (-kx).exp() * truncated_exp(kx, k * (p - 1)),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeConvention {
    /// Standard Brownian motion, covariance I per unit time.
    Standard,
    /// Limit of the unit-rate walk under x/N, t/N²: covariance I/d per unit
    /// time, so times are d times the standard ones.
    WalkScaled,
}

/// I.i.d. Brownian exit times of [−1,1]^d with their exit points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSampleBank {
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub source: Vec<f64>,
    pub convention: TimeConvention,
    pub taus: Vec<f64>,
    /// Flattened exit points, `dim` coordinates each.
    pub exits: Vec<f64>,
}

pub fn sample_tau_bank(dim: usize, n: u64, dt: f64, factory: &RngFactory) -> Result<TauSampleBank> {
    sample_tau_bank_from(&vec![0.0; dim], n, dt, factory)
}

/// Standard-convention bank started from `source`.
pub fn sample_tau_bank_from(
    source: &[f64],
    n: u64,
    dt: f64,
    factory: &RngFactory,
) -> Result<TauSampleBank> {
    if n == 0 {
        return Err(invalid("a τ bank needs at least one sample"));
    }
    let bank = HarmonicBank::build(source, n, ExitSampler::Euler { dt }, factory)?;
    let d = source.len();
    let exits = (0..bank.len())
        .flat_map(|i| bank.point(i).to_vec())
        .collect();
    Ok(TauSampleBank {
        dim: d,
        dt,
        seed: factory.master_seed(),
        source: source.to_vec(),
        convention: TimeConvention::Standard,
        taus: bank.times().to_vec(),
        exits,
    })
}

#[derive(Serialize, Deserialize)]
struct BankMeta {
    dim: usize,
    dt: f64,
    seed: u64,
    source: Vec<f64>,
    convention: TimeConvention,
}

impl TauSampleBank {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn exit(&self, i: usize) -> &[f64] {
        &self.exits[i * self.dim..(i + 1) * self.dim]
    }

    pub fn moments(&self) -> Moments {
        Moments::from_slice(&self.taus)
    }

    /// Same samples expressed in another time convention.
    pub fn to_convention(&self, convention: TimeConvention) -> TauSampleBank {
        let d = self.dim as f64;
        let factor = match (self.convention, convention) {
            (TimeConvention::Standard, TimeConvention::WalkScaled) => d,
            (TimeConvention::WalkScaled, TimeConvention::Standard) => 1.0 / d,
            _ => 1.0,
        };
        let mut out = self.clone();
        out.convention = convention;
        out.taus.iter_mut().for_each(|t| *t *= factor);
        out
    }

    /// Persist as a little-endian (n, d+1) array of (τ, exit point) rows
    /// plus a JSON sidecar. Returns the checksum of the array file.
    pub fn save(&self, path: &Path) -> Result<String> {
        let (data, shape, meta) = self.to_array()?;
        write_f64_array(path, &data, &shape, meta)
    }

    /// Row-major (τ, exit point) array with its shape and sidecar metadata.
    pub fn to_array(&self) -> Result<(Vec<f64>, Vec<usize>, serde_json::Value)> {
        let cols = self.dim + 1;
        let mut data = Vec::with_capacity(self.len() * cols);
        for i in 0..self.len() {
            data.push(self.taus[i]);
            data.extend_from_slice(self.exit(i));
        }
        let meta = BankMeta {
            dim: self.dim,
            dt: self.dt,
            seed: self.seed,
            source: self.source.clone(),
            convention: self.convention,
        };
        Ok((data, vec![self.len(), cols], serde_json::to_value(meta)?))
    }

    pub fn load(path: &Path) -> Result<TauSampleBank> {
        let (data, sidecar) = read_f64_array(path)?;
        let meta: BankMeta = serde_json::from_value(sidecar.meta)?;
        let cols = meta.dim + 1;
        if sidecar.shape != [data.len() / cols, cols] {
            return Err(invalid("τ bank shape does not match its dimension"));
        }
        let mut taus = Vec::with_capacity(data.len() / cols);
        let mut exits = Vec::with_capacity(data.len() / cols * meta.dim);
        for row in data.chunks_exact(cols) {
            taus.push(row[0]);
            exits.extend_from_slice(&row[1..]);
        }
        Ok(TauSampleBank {
            dim: meta.dim,
            dt: meta.dt,
            seed: meta.seed,
            source: meta.source,
            convention: meta.convention,
            taus,
            exits,
        })
    }
}

fn check_bank(bank: &TauSampleBank, g: f64) -> Result<()> {
    if bank.is_empty() {
        return Err(invalid("empty τ bank"));
    }
    if !(g > 0.0) {
        return Err(invalid(format!("g must be positive, got {g}")));
    }
    Ok(())
}

/// P(L ≤ t) = E[exp(−(τ/g) e^{−t/g})].
pub fn gumbel_cdf(t: f64, bank: &TauSampleBank, g: f64) -> Result<f64> {
    check_bank(bank, g)?;
    let w = (-t / g).exp() / g;
    Ok(bank.taus.iter().map(|&tau| (-tau * w).exp()).sum::<f64>() / bank.len() as f64)
}

/// P(M₁ = k) = E[e^{−τ/g} (τ/g)^k] / k!.
pub fn critical_count_pmf(k: u32, bank: &TauSampleBank, g: f64) -> Result<f64> {
    check_bank(bank, g)?;
    let lk = ln_gamma(k as f64 + 1.0);
    let sum: f64 = bank
        .taus
        .iter()
        .map(|&tau| {
            let x = tau / g;
            if k == 0 {
                (-x).exp()
            } else {
                (-x + k as f64 * x.ln() - lk).exp()
            }
        })
        .sum();
    Ok(sum / bank.len() as f64)
}

/// Empirical P(τ/g ≤ x).
pub fn subcritical_count_cdf(x: f64, bank: &TauSampleBank, g: f64) -> Result<f64> {
    check_bank(bank, g)?;
    Ok(bank.taus.iter().filter(|&&tau| tau / g <= x).count() as f64 / bank.len() as f64)
}

/// One factor A_i × T_i with multiplicity k_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFactor {
    /// Union of pairwise disjoint boxes.
    pub region: Vec<AxisBox>,
    /// `None` stands for the empty set.
    pub values: Option<Interval>,
    pub multiplicity: u32,
}

impl RegionFactor {
    pub fn volume(&self) -> f64 {
        self.region.iter().map(|b| b.volume()).sum()
    }

    /// ∫_T e^{−t/g} dt/g.
    pub fn value_weight(&self, g: f64) -> f64 {
        match self.values {
            None => 0.0,
            Some(t) => (-t.lo / g).exp() - (-t.hi / g).exp(),
        }
    }

    fn sample_point<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut u = rng.random::<f64>() * self.volume();
        let last = self.region.len() - 1;
        for (j, b) in self.region.iter().enumerate() {
            let v = b.volume();
            if u < v || j == last {
                for (c, (&lo, &hi)) in out.iter_mut().zip(b.lo.iter().zip(&b.hi)) {
                    *c = lo + (hi - lo) * rng.random::<f64>();
                }
                return;
            }
            u -= v;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub dim: usize,
    pub factors: Vec<RegionFactor>,
    /// Verify that the A_i × T_i are pairwise disjoint.
    pub check_disjoint: bool,
}

/// Largest k = Σ k_i accepted: the permutation sum has k! terms.
pub const MAX_MOMENT_ORDER: u32 = 6;

fn boxes_overlap(a: &AxisBox, b: &AxisBox) -> bool {
    a.lo.iter()
        .zip(&a.hi)
        .zip(b.lo.iter().zip(&b.hi))
        .all(|((&al, &ah), (&bl, &bh))| al.max(bl) < ah.min(bh))
}

fn intervals_overlap(a: &Interval, b: &Interval) -> bool {
    a.lo.max(b.lo) < a.hi.min(b.hi)
}

impl MomentSpec {
    pub fn order(&self) -> u32 {
        self.factors.iter().map(|f| f.multiplicity).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(invalid("moment formula is defined for d ≥ 3"));
        }
        if self.factors.is_empty() || self.factors.iter().any(|f| f.multiplicity == 0) {
            return Err(invalid(
                "need at least one factor, each with multiplicity ≥ 1",
            ));
        }
        let k = self.order();
        if k > MAX_MOMENT_ORDER {
            return Err(Error::Budget {
                what: "moment order",
                requested: k as usize,
                budget: MAX_MOMENT_ORDER as usize,
            });
        }
        for f in &self.factors {
            if f.region.is_empty() || !(f.volume() > 0.0) {
                return Err(invalid("every region must have positive volume"));
            }
            if f.region.iter().any(|b| b.lo.len() != self.dim) {
                return Err(invalid(
                    "region dimension differs from the moment dimension",
                ));
            }
        }
        if self.check_disjoint {
            for (i, a) in self.factors.iter().enumerate() {
                for b in &self.factors[i + 1..] {
                    let space = a
                        .region
                        .iter()
                        .any(|x| b.region.iter().any(|y| boxes_overlap(x, y)));
                    let value = match (a.values, b.values) {
                        (Some(s), Some(t)) => intervals_overlap(&s, &t),
                        _ => false,
                    };
                    if space && value {
                        return Err(invalid("the products A_i × T_i are not pairwise disjoint"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub se: f64,
    pub k: u32,
    pub n_mc: u64,
    /// How q was evaluated: `none`, or the exit sampler used for one fresh
    /// harmonic-measure exit per source point and sample.
    pub q_source: String,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..k).collect();
    fn heap(m: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if m <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..m {
            heap(m - 1, p, out);
            let j = if m.is_multiple_of(2) { i } else { 0 };
            p.swap(j, m - 1);
        }
    }
    heap(k, &mut p, &mut out);
    out
}

/// Monte Carlo estimate of m(A_i × T_i, k_i): the k! permutation sum is
/// exact, the integral over A₁^{k₁} × … is uniform Monte Carlo, and q(y,·)
/// is replaced by |· − Z_y|^{2−d} with Z_y one harmonic-measure exit from y,
/// drawn independently per source point. Each source appears once per
/// permutation path, so the product estimator stays unbiased. With
/// `exit_sampler = None` the q terms are dropped, giving an upper bound.
pub fn m_moment(
    spec: &MomentSpec,
    g: f64,
    exit_sampler: Option<ExitSampler>,
    n_mc: u64,
    factory: &RngFactory,
) -> Result<MomentEstimate> {
    spec.validate()?;
    if !(g > 0.0) || n_mc < 2 {
        return Err(invalid("need g > 0 and at least two Monte Carlo samples"));
    }
    let d = spec.dim;
    let k = spec.order() as usize;
    let a_d = a_d_constant(d)?;
    let mut prefactor = (a_d / g).powi(k as i32);
    let mut owners = Vec::with_capacity(k);
    for (i, f) in spec.factors.iter().enumerate() {
        prefactor *= (f.value_weight(g) * f.volume()).powi(f.multiplicity as i32);
        owners.extend(std::iter::repeat_n(i, f.multiplicity as usize));
    }
    let q_source = match exit_sampler {
        None => "none".to_string(),
        Some(s) => serde_json::to_string(&s)?,
    };
    if prefactor == 0.0 {
        return Ok(MomentEstimate {
            estimate: 0.0,
            se: 0.0,
            k: k as u32,
            n_mc,
            q_source,
        });
    }
    let perms = permutations(k);
    let chunk = CHUNK;
    let parts = map_replicas(n_mc.div_ceil(chunk), |c| -> Result<Moments> {
        let mut rng = factory.stream(Purpose::Integration, c);
        let mut m = Moments::new();
        // points[0] is the origin; points[1..=k] the integration variables
        let mut points = vec![0.0; (k + 1) * d];
        let mut exits: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
        for _ in 0..chunk.min(n_mc - c * chunk) {
            for (j, &owner) in owners.iter().enumerate() {
                spec.factors[owner].sample_point(&mut rng, &mut points[(j + 1) * d..(j + 2) * d]);
            }
            let mut degenerate = false;
            if let Some(s) = exit_sampler {
                for (j, e) in exits.iter_mut().enumerate() {
                    let y = &points[j * d..(j + 1) * d];
                    if y.iter().any(|c| c.abs() >= 1.0) {
                        // boundary points have q(y,·) = |y − ·|^{2−d}
                        degenerate = true;
                        break;
                    }
                    let CubeExit { point, .. } = sample_exit(s, y, &mut rng)?;
                    *e = point;
                }
            }
            let mut total = 0.0;
            if !degenerate {
                for p in &perms {
                    let mut prod = 1.0;
                    let mut prev = 0usize;
                    for &next in p {
                        let j = next + 1;
                        let y = &points[j * d..(j + 1) * d];
                        let mut term = kernel(&points[prev * d..(prev + 1) * d], y);
                        if exit_sampler.is_some() {
                            term -= kernel(&exits[prev], y);
                        }
                        prod *= term;
                        prev = j;
                    }
                    total += prod;
                }
            }
            m.push(prefactor * total);
        }
        Ok(m)
    });
    let mut all = Moments::new();
    for p in parts {
        all.merge(&p?);
    }
    let est: Estimate = all.into();
    Ok(MomentEstimate {
        estimate: est.mean,
        se: est.se,
        k: k as u32,
        n_mc,
        q_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        for k in 1..10 {
            assert_eq!(stirling_surjection(k, 1).unwrap(), 1);
            assert_eq!(stirling_surjection(k, k).unwrap(), 1);
        }
        assert_eq!(stirling_surjection(3, 2).unwrap(), 3);
        assert_eq!(stirling_surjection(4, 2).unwrap(), 7);
        assert_eq!(stirling_surjection(4, 3).unwrap(), 6);
        assert_eq!(stirling_surjection(10, 5).unwrap(), 42525);
        assert!(stirling_surjection(2, 3).is_err());
        assert!(stirling_surjection(200, 100).is_err());
    }

    #[test]
    fn poisson_moments_closed_form() {
        assert_eq!(poisson_moment(3.7, 1).unwrap(), 3.7);
        assert!((poisson_moment(2.0, 3).unwrap() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_tail_example() {
        let (lhs, rhs) = gamma_tail_bound(2, 2, 1.0, 3.0).unwrap();
        assert!((lhs - (4.0 * (-3.0f64).exp()).powi(2)).abs() < 1e-15);
        assert!((rhs - 25.0 * (-6.0f64).exp()).abs() < 1e-15);
        let (l1, r1) = gamma_tail_bound(1, 1, 2.0, 1.5).unwrap();
        assert_eq!(l1, r1);
    }

    fn constant_bank(tau: f64, n: usize) -> TauSampleBank {
        TauSampleBank {
            dim: 3,
            dt: 0.0,
            seed: 0,
            source: vec![0.0; 3],
            convention: TimeConvention::WalkScaled,
            taus: vec![tau; n],
            exits: vec![1.0; 3 * n],
        }
    }

    #[test]
    fn mixture_laws_on_constant_bank() {
        let g = 1.3;
        let b = constant_bank(g, 4);
        for t in [-2.0, 0.0, 1.0, 5.0] {
            assert!((gumbel_cdf(t, &b, g).unwrap() - (-(-t / g).exp()).exp()).abs() < 1e-15);
        }
        assert!((gumbel_cdf(200.0, &b, g).unwrap() - 1.0).abs() < 1e-12);
        let c = constant_bank(2.0 * g, 3);
        let total: f64 = (0..40).map(|k| critical_count_pmf(k, &c, g).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(
            (critical_count_pmf(3, &c, g).unwrap() - (-2.0f64).exp() * 8.0 / 6.0).abs() < 1e-14
        );
        assert_eq!(subcritical_count_cdf(0.0, &c, g).unwrap(), 0.0);
        assert_eq!(subcritical_count_cdf(2.0, &c, g).unwrap(), 1.0);
        assert!(
            (gumbel_cdf(0.0, &c, g).unwrap() - critical_count_pmf(0, &c, g).unwrap()).abs() < 1e-15
        );
    }

    #[test]
    fn bank_round_trip_and_convention() {
        let f = RngFactory::new(8);
        let b = sample_tau_bank(3, 50, 1e-3, &f).unwrap();
        assert!(b.taus.iter().all(|&t| t > 0.0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tau.f64");
        b.save(&p).unwrap();
        assert_eq!(TauSampleBank::load(&p).unwrap(), b);
        let w = b.to_convention(TimeConvention::WalkScaled);
        assert_eq!(w.taus[7], 3.0 * b.taus[7]);
        assert!((w.to_convention(TimeConvention::Standard).taus[7] - b.taus[7]).abs() < 1e-15);
    }

    #[test]
    fn permutation_enumeration() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        let mut s = p.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 24);
    }

    #[test]
    fn moment_spec_validation() {
        let cube = AxisBox::cube(3);
        let (l, r) = cube.split(0, 0.0);
        let factor = |b: AxisBox, t: Option<Interval>, m| RegionFactor {
            region: vec![b],
            values: t,
            multiplicity: m,
        };
        let ok = MomentSpec {
            dim: 3,
            factors: vec![
                factor(l.clone(), Some(Interval::above(0.0)), 1),
                factor(r, Some(Interval::above(0.0)), 1),
            ],
            check_disjoint: true,
        };
        ok.validate().unwrap();
        let bad = MomentSpec {
            dim: 3,
            factors: vec![
                factor(l.clone(), Some(Interval::above(0.0)), 1),
                factor(cube.clone(), Some(Interval::above(1.0)), 1),
            ],
            check_disjoint: true,
        };
        assert!(bad.validate().is_err());
        let big = MomentSpec {
            dim: 3,
            factors: vec![factor(cube.clone(), Some(Interval::above(0.0)), 7)],
            check_disjoint: false,
        };
        assert!(matches!(big.validate(), Err(Error::Budget { .. })));
        let empty_t = MomentSpec {
            dim: 3,
            factors: vec![factor(cube, None, 1)],
            check_disjoint: false,
        };
        let m = m_moment(&empty_t, 1.5, None, 10, &RngFactory::new(1)).unwrap();
        assert_eq!(m.estimate, 0.0);
    }
}
