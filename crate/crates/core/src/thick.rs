//! Thick-point sets and rescaled point measures of walk local times.
//!
//! Locations are taken from the box enumeration of {−N..N}^d (see
//! [`box_index`](crate::lattice::box_index)), so fields must come from a box
//! walk whose interior ids follow that order.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{box_site, VertexId};
use crate::walker::LocalTimeField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Planar: threshold 2a·g·(log N)², inclusive.
    TwoD,
    /// d ≥ 3: threshold 2g·a·log N, strict.
    Hd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThickSet {
    pub vertices: Vec<VertexId>,
    pub threshold: f64,
    pub a: f64,
    pub n: usize,
    pub regime: Regime,
}

impl ThickSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

fn check_radius(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!(
            "N must be at least 2 for log N scaling, got {n}"
        )));
    }
    Ok((n as f64).ln())
}

/// Vertices with ℓ ≥ 2a·g_slope·(log N)². `g_slope` is the combined
/// coefficient of the walk at hand (2/π for the unit-rate simple walk).
/// At a = 0 only visited vertices are returned.
pub fn thick_set_2d(field: &LocalTimeField, a: f64, g_slope: f64, n: usize) -> Result<ThickSet> {
    let log_n = check_radius(n)?;
    if !(0.0..=1.5).contains(&a) {
        return Err(invalid(format!("a must lie in [0, 1.5], got {a}")));
    }
    if !(g_slope > 0.0) {
        return Err(invalid(format!("g_slope must be positive, got {g_slope}")));
    }
    let threshold = 2.0 * a * g_slope * log_n * log_n;
    let vertices = field
        .local_times
        .iter()
        .filter(|&&(_, l)| l > 0.0 && l >= threshold)
        .map(|&(v, _)| v)
        .collect();
    Ok(ThickSet {
        vertices,
        threshold,
        a,
        n,
        regime: Regime::TwoD,
    })
}

/// Vertices with ℓ > 2g·a·log N. At a = 0 this is the visited set M_N(0).
pub fn thick_set_hd(field: &LocalTimeField, a: f64, g: f64, n: usize) -> Result<ThickSet> {
    let log_n = check_radius(n)?;
    if !(a >= 0.0) {
        return Err(invalid(format!("a must be nonnegative, got {a}")));
    }
    if !(g > 0.0) {
        return Err(invalid(format!("g must be positive, got {g}")));
    }
    let threshold = 2.0 * g * a * log_n;
    let vertices = field
        .local_times
        .iter()
        .filter(|&&(_, l)| l > threshold)
        .map(|&(v, _)| v)
        .collect();
    Ok(ThickSet {
        vertices,
        threshold,
        a,
        n,
        regime: Regime::Hd,
    })
}

/// Axis-parallel box in [−1,1]^d. Membership is lo ≤ x < hi per axis, with
/// the upper face x = 1 of the cube included so that half-open partitions
/// of [−1,1]^d cover every atom exactly once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn cube(dim: usize) -> Self {
        Self {
            lo: vec![-1.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(invalid("box corners differ in dimension"));
        }
        for (&l, &h) in lo.iter().zip(&hi) {
            if !(-1.0..=1.0).contains(&l) || !(-1.0..=1.0).contains(&h) || l > h {
                return Err(invalid(format!(
                    "box side [{l}, {h}] is not inside [-1, 1]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Split along `axis` at `cut` into two boxes that partition this one.
    pub fn split(&self, axis: usize, cut: f64) -> (AxisBox, AxisBox) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = cut;
        right.lo[axis] = cut;
        (left, right)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lo.len()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&c, (&l, &h))| c >= l && (c < h || (c == 1.0 && h == 1.0)))
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Value interval (lo, hi] with finite lo; hi may be +∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || hi.is_nan() || hi < lo {
            return Err(invalid(format!(
                "interval ({lo}, {hi}] needs a finite lower end and lo ≤ hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn above(lo: f64) -> Self {
        Self {
            lo,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v > self.lo && v <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    pub atoms: Vec<Atom>,
    pub prefactor: f64,
    pub a: f64,
    pub n: usize,
    pub dim: usize,
}

#[derive(Serialize)]
struct MeasureHeader {
    a: f64,
    n: usize,
    dim: usize,
    prefactor: f64,
    atoms: usize,
}

impl PointMeasure {
    pub fn total(&self) -> f64 {
        self.prefactor * self.atoms.len() as f64
    }

    /// CSV `x1..xd,value` preceded by one `#`-prefixed JSON header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = MeasureHeader {
            a: self.a,
            n: self.n,
            dim: self.dim,
            prefactor: self.prefactor,
            atoms: self.atoms.len(),
        };
        writeln!(out, "# {}", serde_json::to_string(&header)?)?;
        let cols: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},value", cols.join(","))?;
        for atom in &self.atoms {
            for c in &atom.location {
                write!(out, "{c},")?;
            }
            writeln!(out, "{}", atom.value)?;
        }
        Ok(())
    }
}

fn rescaled(v: VertexId, dim: usize, n: usize) -> Vec<f64> {
    box_site(v as usize, dim, n)
        .into_iter()
        .map(|c| c as f64 / n as f64)
        .collect()
}

fn check_measure_args(a: f64, g: f64, n: usize, dim: usize) -> Result<f64> {
    let log_n = check_radius(n)?;
    if dim < 3 {
        return Err(invalid(format!(
            "point measures are defined for d ≥ 3, got d = {dim}"
        )));
    }
    if !(0.0..=1.0).contains(&a) {
        return Err(invalid(format!("a must lie in [0, 1], got {a}")));
    }
    if !(g > 0.0) {
        return Err(invalid(format!("g must be positive, got {g}")));
    }
    Ok(log_n)
}

/// ν_N^a: atoms (x/N, ℓ_x − 2ga·log N) over visited x, prefactor N^{−2(1−a)}.
pub fn nu_measure(
    field: &LocalTimeField,
    dim: usize,
    a: f64,
    g: f64,
    n: usize,
) -> Result<PointMeasure> {
    let log_n = check_measure_args(a, g, n, dim)?;
    let shift = 2.0 * g * a * log_n;
    let atoms = field
        .local_times
        .iter()
        .filter(|&&(_, l)| l > 0.0)
        .map(|&(v, l)| Atom {
            location: rescaled(v, dim, n),
            value: l - shift,
        })
        .collect();
    Ok(PointMeasure {
        atoms,
        prefactor: (n as f64).powf(-2.0 * (1.0 - a)),
        a,
        n,
        dim,
    })
}

/// μ_N^a: atoms (x/N, E_x − 2ga·log N) with E_x i.i.d. exponential of mean
/// g, one per visited vertex in the given order.
pub fn mu_measure<R: Rng + ?Sized>(
    visited: &[VertexId],
    dim: usize,
    a: f64,
    g: f64,
    n: usize,
    rng: &mut R,
) -> Result<PointMeasure> {
    let log_n = check_measure_args(a, g, n, dim)?;
    let shift = 2.0 * g * a * log_n;
    let exp = Exp::new(1.0 / g).map_err(|e| invalid(e.to_string()))?;
    let atoms = visited
        .iter()
        .map(|&v| Atom {
            location: rescaled(v, dim, n),
            value: exp.sample(rng) - shift,
        })
        .collect();
    Ok(PointMeasure {
        atoms,
        prefactor: (n as f64).powf(-2.0 * (1.0 - a)),
        a,
        n,
        dim,
    })
}

/// Normalized number of atoms lying in the union of `region` and with value
/// in `values`.
pub fn count_region(measure: &PointMeasure, region: &[AxisBox], values: Interval) -> f64 {
    let hits = measure
        .atoms
        .iter()
        .filter(|at| values.contains(at.value) && region.iter().any(|b| b.contains(&at.location)))
        .count();
    measure.prefactor * hits as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::box_index;
    use crate::rng::{Purpose, RngFactory};

    fn field(entries: &[(VertexId, f64)]) -> LocalTimeField {
        let mut local_times = entries.to_vec();
        local_times.sort_by_key(|e| e.0);
        LocalTimeField {
            local_times,
            tau: entries.iter().map(|e| e.1).sum(),
            exit: None,
            jumps: 0,
            replica: 0,
        }
    }

    #[test]
    fn inequality_senses_at_threshold() {
        let n = 10usize;
        let g = 1.5;
        let hd_threshold = 2.0 * g * 0.5 * (n as f64).ln();
        let f = field(&[(0, hd_threshold), (1, hd_threshold + 1e-9), (2, 0.1)]);
        assert_eq!(thick_set_hd(&f, 0.5, g, n).unwrap().vertices, vec![1]);

        let slope = 2.0 / std::f64::consts::PI;
        let t2 = 2.0 * 0.5 * slope * (n as f64).ln().powi(2);
        let f = field(&[(0, t2), (1, t2 - 1e-9)]);
        assert_eq!(thick_set_2d(&f, 0.5, slope, n).unwrap().vertices, vec![0]);
    }

    #[test]
    fn zero_level_is_visited_set_and_sets_are_monotone() {
        let f = field(&[(3, 0.2), (5, 4.0), (9, 11.0)]);
        assert_eq!(thick_set_hd(&f, 0.0, 1.5, 20).unwrap().len(), 3);
        assert_eq!(thick_set_2d(&f, 0.0, 0.6, 20).unwrap().len(), 3);
        let mut prev = usize::MAX;
        for k in 0..=10 {
            let s = thick_set_hd(&f, k as f64 / 10.0, 1.5, 20).unwrap();
            assert!(s.len() <= prev);
            prev = s.len();
        }
        assert!(thick_set_hd(&f, 1.0, 100.0, 20).unwrap().is_empty());
        assert!(thick_set_hd(&f, 0.5, 1.0, 1).is_err());
        assert!(thick_set_2d(&f, 2.0, 1.0, 8).is_err());
    }

    #[test]
    fn measure_counts() {
        let n = 4;
        let o = box_index(&[0, 0, 0], n).unwrap();
        let p = box_index(&[4, -4, 2], n).unwrap();
        let q = box_index(&[-3, 1, 1], n).unwrap();
        let f = field(&[(o, 5.0), (p, 1.0), (q, 3.0)]);
        let g = 1.5;
        let nu = nu_measure(&f, 3, 0.5, g, n).unwrap();
        let shift = 2.0 * g * 0.5 * (n as f64).ln();
        assert_eq!(
            nu.atoms
                .iter()
                .find(|a| a.location == vec![1.0, -1.0, 0.5])
                .unwrap()
                .value,
            1.0 - shift
        );

        let cube = AxisBox::cube(3);
        let thick = thick_set_hd(&f, 0.5, g, n).unwrap().len() as f64;
        assert_eq!(
            count_region(&nu, std::slice::from_ref(&cube), Interval::above(0.0)),
            thick / n as f64
        );
        let (l, r) = cube.split(0, 0.0);
        let all = Interval::above(-100.0);
        let whole = count_region(&nu, std::slice::from_ref(&cube), all);
        assert_eq!(whole, 3.0 * nu.prefactor);
        assert_eq!(
            count_region(&nu, std::slice::from_ref(&l), all)
                + count_region(&nu, std::slice::from_ref(&r), all),
            whole
        );
        assert_eq!(count_region(&nu, &[], all), 0.0);
        assert_eq!(count_region(&nu, &[l, r], all), whole);

        let crit = nu_measure(&f, 3, 1.0, g, n).unwrap();
        assert_eq!(crit.prefactor, 1.0);
        assert!(nu_measure(&f, 2, 0.5, g, n).is_err());
    }

    #[test]
    fn mu_is_deterministic_and_has_exponential_tails() {
        let n = 8;
        let visited: Vec<VertexId> = (0..4000).map(|i| (i * 7 % 4913) as VertexId).collect();
        let fac = RngFactory::new(5);
        let a = mu_measure(
            &visited,
            3,
            0.0,
            1.5,
            n,
            &mut fac.stream(Purpose::Exponentials, 0),
        )
        .unwrap();
        let b = mu_measure(
            &visited,
            3,
            0.0,
            1.5,
            n,
            &mut fac.stream(Purpose::Exponentials, 0),
        )
        .unwrap();
        assert_eq!(a, b);
        let t = 2.0;
        let frac = a.atoms.iter().filter(|x| x.value > t).count() as f64 / visited.len() as f64;
        let want = (-t / 1.5f64).exp();
        assert!((frac - want).abs() < 4.0 * (want * (1.0 - want) / 4000.0).sqrt());
        let tiny = mu_measure(
            &visited,
            3,
            0.0,
            1e-6,
            n,
            &mut fac.stream(Purpose::Exponentials, 1),
        )
        .unwrap();
        assert_eq!(
            count_region(&tiny, &[AxisBox::cube(3)], Interval::above(0.5)),
            0.0
        );
    }

    #[test]
    fn csv_export_has_header() {
        let f = field(&[(0, 2.0)]);
        let nu = nu_measure(&f, 3, 0.0, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        nu.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# {\"a\":0.0"));
        assert_eq!(lines.next().unwrap(), "x1,x2,x3,value");
        assert_eq!(lines.next().unwrap(), "-1,-1,-1,2");
    }
}
