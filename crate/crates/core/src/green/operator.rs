use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::{conjugate_gradient, SkylineCholesky, SparseSym};
use crate::artifact::write_f64_array;
use crate::error::{invalid, Error, Result};
use crate::lattice::{box_site, build_box, Domain, DomainMode, RateModel, VertexId, WeightedGraph};

/// Largest interior for which a dense Green matrix is formed.
pub const DEFAULT_GREEN_BUDGET: usize = 20_000;

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Entries above −NEGATIVITY_TOL count as nonnegative (rounding in far tails).
pub const NEGATIVITY_TOL: f64 = 1e-13;

/// Factored −L on a domain interior: answers single Green entries, columns
/// and exit-time vectors without forming the dense inverse.
#[derive(Clone, Debug)]
pub struct GreenSolver {
    domain: Domain,
    generator: SparseSym,
    factor: SkylineCholesky,
}

impl GreenSolver {
    pub fn new(graph: &WeightedGraph, domain: &Domain) -> Result<Self> {
        if domain.is_empty() {
            return Err(invalid("domain interior is empty"));
        }
        let generator = SparseSym::generator(graph, domain);
        let factor = SkylineCholesky::factor(&generator).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!(
                "{msg}; the interior is disconnected from the boundary or has zero rates"
            )),
            other => other,
        })?;
        Ok(Self {
            domain: domain.clone(),
            generator,
            factor,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn generator(&self) -> &SparseSym {
        &self.generator
    }

    pub fn factor(&self) -> &SkylineCholesky {
        &self.factor
    }

    fn slot(&self, v: VertexId) -> Result<usize> {
        self.domain
            .slot(v)
            .ok_or_else(|| invalid(format!("vertex {v} is not in the domain interior")))
    }

    /// G(x, ·) over the interior, in interior order.
    pub fn column(&self, x: VertexId) -> Result<Vec<f64>> {
        Ok(self.factor.inverse_column(self.slot(x)?))
    }

    pub fn entry(&self, x: VertexId, y: VertexId) -> Result<f64> {
        let j = self.slot(y)?;
        Ok(self.column(x)?[j])
    }

    pub fn diagonal_entry(&self, x: VertexId) -> Result<f64> {
        Ok(self.factor.inverse_diagonal_entry(self.slot(x)?))
    }

    /// E_x[τ] = Σ_y G(x,y), solving (−L)u = 1.
    pub fn exit_times(&self) -> Vec<f64> {
        let mut u = vec![1.0; self.domain.len()];
        self.factor.solve_in_place(&mut u);
        u
    }
}

/// Post-construction checks on a Green matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenInvariants {
    /// max |G(x,y) − G(y,x)|
    pub symmetry_defect: f64,
    /// smallest Cholesky pivot of −L (positive iff −L, hence G, is PD)
    pub min_pivot: f64,
    pub min_entry: f64,
    /// max |((−L)G − I)(x,y)|
    pub residual: f64,
}

impl GreenInvariants {
    pub fn holds(&self) -> bool {
        self.symmetry_defect <= SYMMETRY_TOL
            && self.min_pivot > 0.0
            && self.min_entry >= -NEGATIVITY_TOL
            && self.residual <= RESIDUAL_TOL
    }
}

/// Dense Green matrix G(x,y) = E_x[ℓ_y^{τ}] over a domain interior,
/// indexed by interior slot.
#[derive(Clone, Debug)]
pub struct GreenOperator {
    n: usize,
    values: Vec<f64>,
    interior: Vec<VertexId>,
    center: VertexId,
    radius: usize,
    mode: DomainMode,
    solver: GreenSolver,
    invariants: GreenInvariants,
}

/// Solve (−L)G = I with zero boundary values; invariants are checked and a
/// violation is an error.
pub fn exact_green(graph: &WeightedGraph, domain: &Domain) -> Result<GreenOperator> {
    exact_green_with_budget(graph, domain, DEFAULT_GREEN_BUDGET)
}

pub fn exact_green_with_budget(
    graph: &WeightedGraph,
    domain: &Domain,
    budget: usize,
) -> Result<GreenOperator> {
    if domain.len() > budget {
        return Err(Error::Budget {
            what: "dense Green interior",
            requested: domain.len(),
            budget,
        });
    }
    let solver = GreenSolver::new(graph, domain)?;
    let n = domain.len();
    let values = solver.factor.dense_inverse();
    let invariants = measure_invariants(&solver.generator, &values, solver.factor.min_pivot());
    if !invariants.holds() {
        return Err(Error::Singular(format!(
            "Green matrix failed its invariants: {invariants:?}"
        )));
    }
    Ok(GreenOperator {
        n,
        values,
        interior: domain.interior().to_vec(),
        center: domain.center(),
        radius: domain.radius(),
        mode: domain.mode(),
        solver,
        invariants,
    })
}

fn measure_invariants(a: &SparseSym, g: &[f64], min_pivot: f64) -> GreenInvariants {
    let n = a.len();
    let mut symmetry_defect: f64 = 0.0;
    let mut min_entry = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let x = g[i * n + j];
            min_entry = min_entry.min(x);
            if j > i {
                symmetry_defect = symmetry_defect.max((x - g[j * n + i]).abs());
            }
        }
    }
    let mut residual: f64 = 0.0;
    let mut row = vec![0.0; n];
    for i in 0..n {
        row.iter_mut().for_each(|x| *x = 0.0);
        let (cols, vals) = a.row(i);
        for (&k, &aik) in cols.iter().zip(vals) {
            let gk = &g[k * n..(k + 1) * n];
            for (r, &x) in row.iter_mut().zip(gk) {
                *r += aik * x;
            }
        }
        row[i] -= 1.0;
        residual = row.iter().fold(residual, |m, &x| m.max(x.abs()));
    }
    GreenInvariants {
        symmetry_defect,
        min_pivot,
        min_entry,
        residual,
    }
}

impl GreenOperator {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Entry by interior slot.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Entry by vertex id; `None` outside the interior.
    pub fn at(&self, x: VertexId, y: VertexId) -> Option<f64> {
        let d = self.solver.domain();
        Some(self.get(d.slot(x)?, d.slot(y)?))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn interior(&self) -> &[VertexId] {
        &self.interior
    }

    pub fn domain(&self) -> &Domain {
        self.solver.domain()
    }

    pub fn center(&self) -> VertexId {
        self.center
    }

    pub fn solver(&self) -> &GreenSolver {
        &self.solver
    }

    pub fn factor(&self) -> &SkylineCholesky {
        &self.solver.factor
    }

    pub fn invariants(&self) -> GreenInvariants {
        self.invariants
    }

    /// P_x(τ_y < τ) = G(x,y)/G(y,y).
    pub fn hitting_probability(&self, x: VertexId, y: VertexId) -> Option<f64> {
        Some(self.at(x, y)? / self.at(y, y)?)
    }

    /// Row-major binary export with a JSON sidecar; returns the checksum.
    pub fn write_binary(&self, path: &Path) -> Result<String> {
        let meta = serde_json::json!({
            "kind": "green-matrix",
            "domain": {
                "mode": self.mode,
                "center": self.center,
                "radius": self.radius,
                "interior": self.interior,
            },
            "invariants": self.invariants,
        });
        write_f64_array(path, &self.values, &[self.n, self.n], meta)
    }
}

/// G(x, ·) over the interior by conjugate gradients, for domains too large
/// to factor.
pub fn green_column_cg(
    graph: &WeightedGraph,
    domain: &Domain,
    x: VertexId,
    tol: f64,
) -> Result<Vec<f64>> {
    let j = domain
        .slot(x)
        .ok_or_else(|| invalid(format!("vertex {x} is not in the domain interior")))?;
    let a = SparseSym::generator(graph, domain);
    let mut b = vec![0.0; a.len()];
    b[j] = 1.0;
    let mut out = vec![0.0; a.len()];
    conjugate_gradient(&a, &b, &mut out, tol, 20 * a.len().max(100))?;
    Ok(out)
}

/// max_x G_N(x,x) on the unit-rate box {−N..N}^d, with the maximizing site.
/// Only sites with 0 ≤ x₁ ≤ … ≤ x_d are solved for; the box's symmetry
/// group maps every site to one of them.
pub fn box_max_diagonal(dim: usize, radius: usize) -> Result<(f64, Vec<i64>)> {
    let b = build_box(dim, radius, RateModel::UnitRate)?;
    let solver = GreenSolver::new(&b.graph, &b.domain)?;
    let mut best = (f64::NEG_INFINITY, vec![0; dim]);
    for idx in 0..b.domain.len() {
        let x = box_site(idx, dim, radius);
        if x[0] < 0 || x.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let gxx = solver.diagonal_entry(idx as VertexId)?;
        if gxx > best.0 {
            best = (gxx, x);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_box;
    use approx::assert_relative_eq;

    #[test]
    fn single_cell_is_one() {
        let b = build_box(3, 0, RateModel::UnitRate).unwrap();
        let g = exact_green(&b.graph, &b.domain).unwrap();
        assert_eq!(g.len(), 1);
        assert_relative_eq!(g.get(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_vertex_path_by_hand() {
        // triangle a, b, p with unit conductances, killed at p: rates 2 each,
        // −L = [[2,−1],[−1,2]], G = [[2,1],[1,2]]/3.
        let g =
            WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0, Vec::new())
                .unwrap();
        let d = Domain::punctured(&g, 2).unwrap();
        assert_eq!(d.interior(), &[0, 1]);
        let op = exact_green(&g, &d).unwrap();
        assert_relative_eq!(op.get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(op.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(op.hitting_probability(0, 1).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn invariants_and_monotonicity() {
        let small = build_box(2, 4, RateModel::UnitRate).unwrap();
        let large = build_box(2, 5, RateModel::UnitRate).unwrap();
        let gs = exact_green(&small.graph, &small.domain).unwrap();
        let gl = exact_green(&large.graph, &large.domain).unwrap();
        assert!(gs.invariants().holds());
        for (i, &x) in small.domain.interior().iter().enumerate().step_by(7) {
            let xl = large.vertex_at(&small.site(x)).unwrap();
            for (j, &y) in small.domain.interior().iter().enumerate().step_by(5) {
                let yl = large.vertex_at(&small.site(y)).unwrap();
                assert!(gs.get(i, j) <= gl.at(xl, yl).unwrap() + 1e-14);
            }
        }
    }

    #[test]
    fn solver_paths_agree() {
        let b = build_box(3, 3, RateModel::UnitRate).unwrap();
        let op = exact_green(&b.graph, &b.domain).unwrap();
        let o = b.origin();
        let cg = green_column_cg(&b.graph, &b.domain, o, 1e-13).unwrap();
        let s = op.solver();
        for (j, &x) in cg.iter().enumerate() {
            assert_relative_eq!(x, op.get(o as usize, j), epsilon = 1e-11);
        }
        assert_relative_eq!(
            s.diagonal_entry(o).unwrap(),
            op.get(o as usize, o as usize),
            epsilon = 1e-13
        );
        let tau = s.exit_times();
        let row_sum: f64 = op.row(o as usize).iter().sum();
        assert_relative_eq!(tau[o as usize], row_sum, max_relative = 1e-12);
        let (m, site) = box_max_diagonal(3, 3).unwrap();
        assert_eq!(site, vec![0, 0, 0]);
        assert_relative_eq!(m, op.get(o as usize, o as usize), epsilon = 1e-13);
    }

    #[test]
    fn budget_is_enforced() {
        let b = build_box(2, 3, RateModel::UnitRate).unwrap();
        assert!(matches!(
            exact_green_with_budget(&b.graph, &b.domain, 10),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn binary_export() {
        let b = build_box(2, 1, RateModel::UnitRate).unwrap();
        let op = exact_green(&b.graph, &b.domain).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        op.write_binary(&p).unwrap();
        let (data, side) = crate::artifact::read_f64_array(&p).unwrap();
        assert_eq!(side.shape, vec![9, 9]);
        assert_eq!(data, op.matrix());
    }
}
