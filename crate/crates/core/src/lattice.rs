//! State spaces: boxes in Z^d, Poissonized step walks on Z², isoradial
//! graphs, and the domains (interior + one-jump boundary) walks are run on.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type VertexId = u32;

const NONE: u32 = u32::MAX;

/// Default cap on materialized vertices (interior + halo).
pub const DEFAULT_VERTEX_BUDGET: usize = 40_000_000;

/// Symmetric conductance network stored in compressed-row form.
///
/// Halo vertices (outside every domain built on the graph) only carry their
/// edges back into the interior; their rates are not meaningful.
#[derive(Clone, Debug)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
    weights: Vec<f64>,
    rates: Vec<f64>,
    dim: usize,
    coords: Vec<f64>,
}

impl WeightedGraph {
    /// Build from an undirected edge list. Parallel edges are merged by
    /// summing their conductances; self-loops and non-positive weights are
    /// rejected.
    pub fn from_edges(
        n: usize,
        edges: &[(VertexId, VertexId, f64)],
        dim: usize,
        coords: Vec<f64>,
    ) -> Result<Self> {
        if !coords.is_empty() && coords.len() != n * dim {
            return Err(invalid("coordinate table does not match vertex count"));
        }
        let mut adj: Vec<Vec<(VertexId, f64)>> = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            if a == b {
                return Err(invalid(format!("self-loop at vertex {a}")));
            }
            if (a as usize) >= n || (b as usize) >= n {
                return Err(invalid(format!(
                    "edge {a}-{b} references an unknown vertex"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(invalid(format!("edge {a}-{b} has conductance {w}")));
            }
            push_merge(&mut adj[a as usize], b, w);
            push_merge(&mut adj[b as usize], a, w);
        }
        Ok(Self::from_adjacency(adj, dim, coords))
    }

    fn from_adjacency(adj: Vec<Vec<(VertexId, f64)>>, dim: usize, coords: Vec<f64>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut rates = Vec::with_capacity(adj.len());
        offsets.push(0);
        for mut row in adj {
            row.sort_by_key(|e| e.0);
            let mut rate = 0.0;
            for (t, w) in row {
                targets.push(t);
                weights.push(w);
                rate += w;
            }
            rates.push(rate);
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            weights,
            rates,
            dim,
            coords,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.rates.len()
    }

    pub fn num_directed_edges(&self) -> usize {
        self.targets.len()
    }

    /// Embedding dimension (0 when the graph carries no coordinates).
    pub fn dim(&self) -> usize {
        if self.coords.is_empty() {
            0
        } else {
            self.dim
        }
    }

    pub fn coords(&self, v: VertexId) -> Option<&[f64]> {
        if self.coords.is_empty() {
            None
        } else {
            let i = v as usize * self.dim;
            Some(&self.coords[i..i + self.dim])
        }
    }

    #[inline]
    pub fn neighbors(&self, v: VertexId) -> (&[VertexId], &[f64]) {
        let (s, e) = (self.offsets[v as usize], self.offsets[v as usize + 1]);
        (&self.targets[s..e], &self.weights[s..e])
    }

    /// Total jump rate out of `v`.
    #[inline]
    pub fn rate(&self, v: VertexId) -> f64 {
        self.rates[v as usize]
    }

    pub fn conductance(&self, x: VertexId, y: VertexId) -> f64 {
        let (t, w) = self.neighbors(x);
        match t.binary_search(&y) {
            Ok(i) => w[i],
            Err(_) => 0.0,
        }
    }

    /// Largest |W_xy − W_yx| over stored pairs; an edge stored in one
    /// direction only counts as a full violation.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.num_vertices() as VertexId {
            let (t, w) = self.neighbors(x);
            for (&y, &wxy) in t.iter().zip(w) {
                if x == y {
                    return f64::INFINITY;
                }
                worst = worst.max((wxy - self.conductance(y, x)).abs());
            }
        }
        worst
    }

    /// Subgraph induced on `domain`'s interior, with vertices relabelled in
    /// interior order. Jumps out of the interior are dropped, so the result
    /// is the finite graph (V_N, E_N).
    pub fn restrict(&self, domain: &Domain) -> WeightedGraph {
        let mut adj = Vec::with_capacity(domain.len());
        let mut coords = Vec::new();
        for &v in domain.interior() {
            let (t, w) = self.neighbors(v);
            let row: Vec<(VertexId, f64)> = t
                .iter()
                .zip(w)
                .filter_map(|(&y, &wy)| domain.slot(y).map(|j| (j as VertexId, wy)))
                .collect();
            adj.push(row);
            if let Some(c) = self.coords(v) {
                coords.extend_from_slice(c);
            }
        }
        WeightedGraph::from_adjacency(adj, self.dim, coords)
    }

    /// Graph distance from `source` to every vertex (`u32::MAX` if unreachable).
    pub fn bfs_distances(&self, source: VertexId) -> Vec<u32> {
        let mut dist = vec![NONE; self.num_vertices()];
        let mut queue = VecDeque::new();
        dist[source as usize] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v as usize];
            for &y in self.neighbors(v).0 {
                if dist[y as usize] == NONE {
                    dist[y as usize] = dv + 1;
                    queue.push_back(y);
                }
            }
        }
        dist
    }
}

fn push_merge(row: &mut Vec<(VertexId, f64)>, t: VertexId, w: f64) {
    if let Some(e) = row.iter_mut().find(|e| e.0 == t) {
        e.1 += w;
    } else {
        row.push((t, w));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainMode {
    /// ∥x − x₀∥_∞ ≤ N in lattice coordinates.
    Box,
    /// Graph distance d(x, x₀) ≤ N.
    GraphBall,
    /// Every vertex of a finite graph; no boundary.
    Whole,
    /// Every vertex of a finite graph except a pin, which is the boundary.
    Punctured,
}

/// Interior vertex set plus the vertices reachable from it in one jump.
#[derive(Clone, Debug)]
pub struct Domain {
    interior: Vec<VertexId>,
    boundary: Vec<VertexId>,
    center: VertexId,
    radius: usize,
    mode: DomainMode,
    slots: Vec<u32>,
}

impl Domain {
    fn new(
        graph: &WeightedGraph,
        interior: Vec<VertexId>,
        center: VertexId,
        radius: usize,
        mode: DomainMode,
    ) -> Self {
        let mut slots = vec![NONE; graph.num_vertices()];
        for (i, &v) in interior.iter().enumerate() {
            slots[v as usize] = i as u32;
        }
        let mut boundary: Vec<VertexId> = interior
            .iter()
            .flat_map(|&v| graph.neighbors(v).0.iter().copied())
            .filter(|&y| slots[y as usize] == NONE)
            .collect();
        boundary.sort_unstable();
        boundary.dedup();
        Self {
            interior,
            boundary,
            center,
            radius,
            mode,
            slots,
        }
    }

    /// V_N(x₀) = {x : d(x, x₀) ≤ N} for the graph distance.
    pub fn graph_ball(graph: &WeightedGraph, center: VertexId, radius: usize) -> Result<Self> {
        if center as usize >= graph.num_vertices() {
            return Err(invalid(format!("center {center} is not a vertex")));
        }
        let dist = graph.bfs_distances(center);
        let interior: Vec<VertexId> = (0..graph.num_vertices() as VertexId)
            .filter(|&v| dist[v as usize] as usize <= radius)
            .collect();
        let domain = Self::new(graph, interior, center, radius, DomainMode::GraphBall);
        if domain.boundary.is_empty() {
            return Err(invalid(
                "graph ball has no boundary: the supplied graph is too small for this radius",
            ));
        }
        Ok(domain)
    }

    /// All vertices of a finite graph, no boundary.
    pub fn whole(graph: &WeightedGraph, center: VertexId) -> Self {
        let interior = (0..graph.num_vertices() as VertexId).collect();
        Self::new(graph, interior, center, 0, DomainMode::Whole)
    }

    /// All vertices except `pin`: the walk is killed on reaching the pin.
    pub fn punctured(graph: &WeightedGraph, pin: VertexId) -> Result<Self> {
        if pin as usize >= graph.num_vertices() {
            return Err(invalid(format!("pin {pin} is not a vertex")));
        }
        let interior = (0..graph.num_vertices() as VertexId)
            .filter(|&v| v != pin)
            .collect();
        Ok(Self::new(graph, interior, pin, 0, DomainMode::Punctured))
    }

    pub fn interior(&self) -> &[VertexId] {
        &self.interior
    }

    pub fn boundary(&self) -> &[VertexId] {
        &self.boundary
    }

    pub fn center(&self) -> VertexId {
        self.center
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn mode(&self) -> DomainMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        self.slots.get(v as usize).is_some_and(|&s| s != NONE)
    }

    /// Position of `v` in the interior list.
    #[inline]
    pub fn slot(&self, v: VertexId) -> Option<usize> {
        match self.slots.get(v as usize) {
            Some(&s) if s != NONE => Some(s as usize),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// Simple walk with total jump rate 1: each of the 2d neighbors at rate 1/(2d).
    UnitRate,
    /// Conductance 1 on every nearest-neighbor edge (total rate 2d).
    UnitConductance,
}

/// A lattice box {−N..N}^d with its exterior halo materialized.
#[derive(Clone, Debug)]
pub struct BoxLattice {
    pub graph: WeightedGraph,
    pub domain: Domain,
    dim: usize,
    radius: usize,
    halo: HashMap<Vec<i64>, VertexId>,
}

impl BoxLattice {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Vertex at lattice site `x`, if materialized.
    pub fn vertex_at(&self, x: &[i64]) -> Option<VertexId> {
        if x.len() != self.dim {
            return None;
        }
        box_index(x, self.radius).or_else(|| self.halo.get(x).copied())
    }

    pub fn origin(&self) -> VertexId {
        box_index(&vec![0; self.dim], self.radius).expect("origin lies in every box")
    }

    /// Integer lattice coordinates of `v`.
    pub fn site(&self, v: VertexId) -> Vec<i64> {
        self.graph
            .coords(v)
            .expect("box lattices carry coordinates")
            .iter()
            .map(|&c| c.round() as i64)
            .collect()
    }
}

/// Interior index of `x` in the lexicographic (first coordinate fastest)
/// enumeration of {−N..N}^d.
pub fn box_index(x: &[i64], radius: usize) -> Option<VertexId> {
    let n = radius as i64;
    let side = 2 * n + 1;
    let mut idx: i64 = 0;
    let mut stride: i64 = 1;
    for &c in x {
        if c < -n || c > n {
            return None;
        }
        idx += (c + n) * stride;
        stride *= side;
    }
    Some(idx as VertexId)
}

/// Inverse of [`box_index`].
pub fn box_site(mut idx: usize, dim: usize, radius: usize) -> Vec<i64> {
    let side = 2 * radius + 1;
    let mut x = Vec::with_capacity(dim);
    for _ in 0..dim {
        x.push((idx % side) as i64 - radius as i64);
        idx /= side;
    }
    x
}

fn checked_box_size(dim: usize, radius: usize, budget: usize) -> Result<usize> {
    let side = 2 * radius + 1;
    let mut total: usize = 1;
    for _ in 0..dim {
        total = total.checked_mul(side).ok_or(Error::Budget {
            what: "box vertices",
            requested: usize::MAX,
            budget,
        })?;
    }
    if total > budget {
        return Err(Error::Budget {
            what: "box vertices",
            requested: total,
            budget,
        });
    }
    Ok(total)
}

/// Box {−N..N}^d for the nearest-neighbor walk under `rate_model`.
pub fn build_box(dim: usize, radius: usize, rate_model: RateModel) -> Result<BoxLattice> {
    build_box_with_budget(dim, radius, rate_model, DEFAULT_VERTEX_BUDGET)
}

pub fn build_box_with_budget(
    dim: usize,
    radius: usize,
    rate_model: RateModel,
    budget: usize,
) -> Result<BoxLattice> {
    if dim == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let w = match rate_model {
        RateModel::UnitRate => 1.0 / (2 * dim) as f64,
        RateModel::UnitConductance => 1.0,
    };
    let mut steps = Vec::with_capacity(2 * dim);
    for i in 0..dim {
        for s in [1, -1] {
            let mut e = vec![0i64; dim];
            e[i] = s;
            steps.push((e, w));
        }
    }
    build_box_from_steps(dim, radius, &steps, budget)
}

/// Box for an arbitrary finite symmetric step law with conductances
/// W_{x,x+s} = p(s). The halo holds every site reachable in one step.
pub fn build_box_from_steps(
    dim: usize,
    radius: usize,
    steps: &[(Vec<i64>, f64)],
    budget: usize,
) -> Result<BoxLattice> {
    let n_int = checked_box_size(dim, radius, budget)?;
    let steps: Vec<&(Vec<i64>, f64)> = steps
        .iter()
        .filter(|(s, _)| s.iter().any(|&c| c != 0))
        .collect();
    let deg = steps.len();

    let mut halo: HashMap<Vec<i64>, VertexId> = HashMap::new();
    let mut halo_sites: Vec<Vec<i64>> = Vec::new();
    let mut halo_adj: Vec<Vec<(VertexId, f64)>> = Vec::new();

    let mut targets = Vec::with_capacity(n_int * deg);
    let mut weights = Vec::with_capacity(n_int * deg);
    let mut coords = Vec::with_capacity(n_int * dim);
    let mut rates = Vec::with_capacity(n_int);
    let mut offsets = Vec::with_capacity(n_int + 1);
    offsets.push(0);
    let mut y = vec![0i64; dim];
    for idx in 0..n_int {
        let x = box_site(idx, dim, radius);
        coords.extend(x.iter().map(|&c| c as f64));
        let mut row: Vec<(VertexId, f64)> = Vec::with_capacity(deg);
        let mut rate = 0.0;
        for (s, w) in steps.iter().map(|e| (&e.0, e.1)) {
            for k in 0..dim {
                y[k] = x[k] + s[k];
            }
            let t = match box_index(&y, radius) {
                Some(t) => t,
                None => {
                    let next = (n_int + halo_sites.len()) as VertexId;
                    let id = *halo.entry(y.clone()).or_insert_with(|| {
                        halo_sites.push(y.clone());
                        halo_adj.push(Vec::new());
                        next
                    });
                    halo_adj[id as usize - n_int].push((idx as VertexId, w));
                    id
                }
            };
            push_merge(&mut row, t, w);
            rate += w;
        }
        row.sort_by_key(|e| e.0);
        for (t, w) in row {
            targets.push(t);
            weights.push(w);
        }
        rates.push(rate);
        offsets.push(targets.len());
    }
    let total = n_int + halo_sites.len();
    if total > budget {
        return Err(Error::Budget {
            what: "box vertices",
            requested: total,
            budget,
        });
    }
    for (site, row) in halo_sites.iter().zip(halo_adj) {
        let mut merged: Vec<(VertexId, f64)> = Vec::with_capacity(row.len());
        for (t, w) in row {
            push_merge(&mut merged, t, w);
        }
        merged.sort_by_key(|e| e.0);
        let mut rate = 0.0;
        for (t, w) in merged {
            targets.push(t);
            weights.push(w);
            rate += w;
        }
        rates.push(rate);
        offsets.push(targets.len());
        coords.extend(site.iter().map(|&c| c as f64));
    }
    let graph = WeightedGraph {
        offsets,
        targets,
        weights,
        rates,
        dim,
        coords,
    };
    let interior: Vec<VertexId> = (0..n_int as VertexId).collect();
    let center = box_index(&vec![0; dim], radius).expect("origin");
    let domain = Domain::new(&graph, interior, center, radius, DomainMode::Box);
    Ok(BoxLattice {
        graph,
        domain,
        dim,
        radius,
        halo,
    })
}

/// Symmetric step law on Z² with finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    support: Vec<([i64; 2], f64)>,
    covariance: [[f64; 2]; 2],
}

const STEP_SUM_TOL: f64 = 1e-12;

/// Validate a symmetric step law and compute its covariance E[XXᵀ].
pub fn build_step_walk(support: &[([i64; 2], f64)]) -> Result<StepDistribution> {
    if support.is_empty() {
        return Err(invalid("empty step support"));
    }
    let mut table: HashMap<[i64; 2], f64> = HashMap::new();
    for &(x, p) in support {
        if !(p > 0.0) || !p.is_finite() {
            return Err(invalid(format!("step {x:?} has probability {p}")));
        }
        if table.insert(x, p).is_some() {
            return Err(invalid(format!("step {x:?} listed twice")));
        }
    }
    let total: f64 = support.iter().map(|e| e.1).sum();
    if (total - 1.0).abs() > STEP_SUM_TOL {
        return Err(Error::NotNormalized(total));
    }
    for &(x, p) in support {
        let mirror = table.get(&[-x[0], -x[1]]).copied().unwrap_or(0.0);
        if (mirror - p).abs() > STEP_SUM_TOL {
            return Err(Error::AsymmetricSupport {
                point: x,
                p,
                mirror,
            });
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for &(x, p) in support {
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += p * (x[i] * x[j]) as f64;
            }
        }
    }
    Ok(StepDistribution {
        support: support.to_vec(),
        covariance: cov,
    })
}

impl StepDistribution {
    /// Each of the four nearest neighbors with probability 1/4.
    pub fn nearest_neighbor() -> Self {
        build_step_walk(&[
            ([1, 0], 0.25),
            ([-1, 0], 0.25),
            ([0, 1], 0.25),
            ([0, -1], 0.25),
        ])
        .expect("valid preset")
    }

    /// Each of the four diagonal neighbors (±1, ±1) with probability 1/4.
    pub fn diagonal() -> Self {
        build_step_walk(&[
            ([1, 1], 0.25),
            ([-1, -1], 0.25),
            ([1, -1], 0.25),
            ([-1, 1], 0.25),
        ])
        .expect("valid preset")
    }

    pub fn support(&self) -> &[([i64; 2], f64)] {
        &self.support
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.covariance
    }

    pub fn sqrt_det(&self) -> f64 {
        let c = self.covariance;
        (c[0][0] * c[1][1] - c[0][1] * c[1][0]).sqrt()
    }

    /// 1/(π√det 𝒢): growth rate of G_N(x₀,x₀) in log N.
    pub fn potential_slope(&self) -> f64 {
        1.0 / (PI * self.sqrt_det())
    }

    /// 2/(π√det 𝒢): the (log N)² coefficient of the maximal local time.
    pub fn max_coefficient(&self) -> f64 {
        2.0 * self.potential_slope()
    }

    /// Largest ∥s∥_∞ over the support.
    pub fn reach(&self) -> i64 {
        self.support
            .iter()
            .map(|(x, _)| x[0].abs().max(x[1].abs()))
            .max()
            .unwrap_or(0)
    }

    /// Box {−N..N}² for the Poissonized walk: conductance p(y − x) between x and y.
    pub fn build_box(&self, radius: usize) -> Result<BoxLattice> {
        let steps: Vec<(Vec<i64>, f64)> =
            self.support.iter().map(|(x, p)| (x.to_vec(), *p)).collect();
        build_box_from_steps(2, radius, &steps, DEFAULT_VERTEX_BUDGET)
    }
}

/// Planar embedding with rhombic half-angles on every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct IsoradialSpec {
    pub positions: Vec<[f64; 2]>,
    pub edges: Vec<(VertexId, VertexId, f64)>,
    pub eta: f64,
}

impl IsoradialSpec {
    /// Check θ ∈ (η, π/2 − η) on every edge.
    pub fn check_ellipticity(&self) -> Result<()> {
        let (lo, hi) = (self.eta, PI / 2.0 - self.eta);
        for &(a, b, theta) in &self.edges {
            if !(theta > lo && theta < hi) {
                return Err(Error::Ellipticity {
                    a,
                    b,
                    theta,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Largest mismatch between an edge's length and 2cos θ, the length a
    /// unit-radius rhombus forces. Reported, not enforced.
    pub fn embedding_defect(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, theta)| {
                let (p, q) = (self.positions[a as usize], self.positions[b as usize]);
                let len = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                (len - 2.0 * theta.cos()).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Serialize in the line format read by [`parse_isoradial`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# isoradial graph: V id x y / E id1 id2 theta\n");
        for (i, p) in self.positions.iter().enumerate() {
            out.push_str(&format!("V {i} {:.17} {:.17}\n", p[0], p[1]));
        }
        for (a, b, t) in &self.edges {
            out.push_str(&format!("E {a} {b} {t:.17}\n"));
        }
        out
    }

    /// Square lattice patch (θ = π/4), sites (i, j)·√2 with |i|, |j| ≤ r.
    pub fn square(r: i64) -> (Self, VertexId) {
        let h = 2f64.sqrt();
        let pts: Vec<[f64; 2]> = grid(r).map(|(i, j)| [i as f64 * h, j as f64 * h]).collect();
        let center = index_of_origin(&pts);
        (Self::connect(pts, 2.0 * (PI / 4.0).cos(), PI / 4.0), center)
    }

    /// Triangular lattice patch (θ = π/6), hexagon-shaped of lattice radius r.
    pub fn triangular(r: i64) -> (Self, VertexId) {
        let h = 3f64.sqrt();
        let pts: Vec<[f64; 2]> = grid(r)
            .filter(|&(i, j)| (i + j).abs() <= r)
            .map(|(i, j)| {
                [
                    h * (i as f64 + 0.5 * j as f64),
                    h * (0.75f64.sqrt() * j as f64),
                ]
            })
            .collect();
        let center = index_of_origin(&pts);
        (Self::connect(pts, 2.0 * (PI / 6.0).cos(), PI / 6.0), center)
    }

    /// Hexagonal (honeycomb) lattice patch (θ = π/3), unit edge length.
    pub fn hexagonal(r: i64) -> (Self, VertexId) {
        let s3 = 3f64.sqrt();
        let mut pts = Vec::new();
        for (i, j) in grid(r) {
            let base = [s3 * (i as f64 + 0.5 * j as f64), 1.5 * j as f64];
            pts.push(base);
            pts.push([base[0], base[1] + 1.0]);
        }
        let center = index_of_origin(&pts);
        (Self::connect(pts, 2.0 * (PI / 3.0).cos(), PI / 3.0), center)
    }

    fn connect(positions: Vec<[f64; 2]>, len: f64, theta: f64) -> Self {
        let cell = len * 1.01;
        let key = |p: [f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in positions.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        let mut edges = Vec::new();
        for (i, &p) in positions.iter().enumerate() {
            let (kx, ky) = key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = buckets.get(&(kx + dx, ky + dy)) {
                        for &j in list {
                            if j > i {
                                let q = positions[j];
                                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                                if (d - len).abs() < 1e-9 {
                                    edges.push((i as VertexId, j as VertexId, theta));
                                }
                            }
                        }
                    }
                }
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        Self {
            positions,
            edges,
            eta: 0.1,
        }
    }
}

fn grid(r: i64) -> impl Iterator<Item = (i64, i64)> {
    (-r..=r).flat_map(move |j| (-r..=r).map(move |i| (i, j)))
}

fn index_of_origin(pts: &[[f64; 2]]) -> VertexId {
    pts.iter()
        .enumerate()
        .min_by(|a, b| {
            let na = a.1[0].hypot(a.1[1]);
            let nb = b.1[0].hypot(b.1[1]);
            na.total_cmp(&nb)
        })
        .map(|(i, _)| i as VertexId)
        .unwrap_or(0)
}

/// Parse the line format `V id x y` / `E id1 id2 theta`, `#` comments.
/// Vertex ids may be arbitrary integers; they are relabelled densely in
/// order of appearance.
pub fn parse_isoradial(text: &str, eta: f64) -> Result<IsoradialSpec> {
    let mut ids: HashMap<i64, VertexId> = HashMap::new();
    let mut positions = Vec::new();
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "V" => {
                if fields.len() != 4 {
                    return Err(err("expected `V id x y`"));
                }
                let id: i64 = fields[1].parse().map_err(|_| err("bad vertex id"))?;
                let x: f64 = fields[2].parse().map_err(|_| err("bad x coordinate"))?;
                let y: f64 = fields[3].parse().map_err(|_| err("bad y coordinate"))?;
                if ids.insert(id, positions.len() as VertexId).is_some() {
                    return Err(err("duplicate vertex id"));
                }
                positions.push([x, y]);
            }
            "E" => {
                if fields.len() != 4 {
                    return Err(err("expected `E id1 id2 theta`"));
                }
                let a: i64 = fields[1].parse().map_err(|_| err("bad vertex id"))?;
                let b: i64 = fields[2].parse().map_err(|_| err("bad vertex id"))?;
                let theta: f64 = fields[3].parse().map_err(|_| err("bad angle"))?;
                let a = *ids
                    .get(&a)
                    .ok_or_else(|| err("edge references an undeclared vertex"))?;
                let b = *ids
                    .get(&b)
                    .ok_or_else(|| err("edge references an undeclared vertex"))?;
                edges.push((a, b, theta));
            }
            _ => return Err(err("unknown record type")),
        }
    }
    Ok(IsoradialSpec {
        positions,
        edges,
        eta,
    })
}

/// Conductance network with c_xy = tan θ_xy.
pub fn build_isoradial(spec: &IsoradialSpec) -> Result<WeightedGraph> {
    spec.check_ellipticity()?;
    let edges: Vec<(VertexId, VertexId, f64)> = spec
        .edges
        .iter()
        .map(|&(a, b, t)| (a, b, t.tan()))
        .collect();
    let coords: Vec<f64> = spec
        .positions
        .iter()
        .flat_map(|p| p.iter().copied())
        .collect();
    WeightedGraph::from_edges(spec.positions.len(), &edges, 2, coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_cell_box_3d() {
        let b = build_box(3, 0, RateModel::UnitRate).unwrap();
        assert_eq!(b.domain.len(), 1);
        assert_eq!(b.domain.boundary().len(), 6);
        assert_relative_eq!(b.graph.rate(b.origin()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn box_sizes() {
        assert_eq!(
            build_box(2, 1, RateModel::UnitRate).unwrap().domain.len(),
            9
        );
        let b = build_box(3, 10, RateModel::UnitRate).unwrap();
        assert_eq!(b.domain.len(), 9261);
        assert_eq!(b.domain.boundary().len(), 6 * 21 * 21);
        assert_eq!(b.graph.symmetry_defect(), 0.0);
    }

    #[test]
    fn unit_rate_neighbors_equally_likely() {
        let b = build_box(2, 3, RateModel::UnitRate).unwrap();
        for &v in b.domain.interior() {
            let (t, w) = b.graph.neighbors(v);
            assert_eq!(t.len(), 4);
            assert!(w.iter().all(|&x| x == 0.25));
        }
    }

    #[test]
    fn box_budget_is_enforced() {
        let e = build_box_with_budget(3, 10, RateModel::UnitRate, 1000).unwrap_err();
        assert!(matches!(e, Error::Budget { .. }));
    }

    #[test]
    fn site_roundtrip() {
        let b = build_box(3, 2, RateModel::UnitRate).unwrap();
        for v in 0..b.graph.num_vertices() as VertexId {
            assert_eq!(b.vertex_at(&b.site(v)), Some(v));
        }
        assert!(b.vertex_at(&[3, 3, 0]).is_none());
    }

    #[test]
    fn nearest_neighbor_covariance() {
        let s = StepDistribution::nearest_neighbor();
        assert_eq!(s.covariance(), [[0.5, 0.0], [0.0, 0.5]]);
        assert_relative_eq!(s.max_coefficient(), 4.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn stretched_covariance() {
        let s = build_step_walk(&[
            ([2, 0], 0.25),
            ([-2, 0], 0.25),
            ([0, 1], 0.25),
            ([0, -1], 0.25),
        ])
        .unwrap();
        assert_eq!(s.covariance(), [[2.0, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn asymmetric_rejected() {
        let e = build_step_walk(&[([1, 0], 0.6), ([-1, 0], 0.4)]).unwrap_err();
        assert!(matches!(e, Error::AsymmetricSupport { .. }));
        let e = build_step_walk(&[([1, 0], 0.5), ([-1, 0], 0.4)]).unwrap_err();
        assert!(matches!(e, Error::NotNormalized(_)));
    }

    #[test]
    fn step_box_has_deep_halo() {
        let s = build_step_walk(&[
            ([2, 0], 0.25),
            ([-2, 0], 0.25),
            ([0, 1], 0.25),
            ([0, -1], 0.25),
        ])
        .unwrap();
        let b = s.build_box(3).unwrap();
        assert!(b.vertex_at(&[5, 0]).is_some());
        assert!(b.vertex_at(&[4, 0]).is_some());
        assert_eq!(b.graph.symmetry_defect(), 0.0);
        assert_relative_eq!(b.graph.rate(b.origin()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn isoradial_presets() {
        let (sq, c) = IsoradialSpec::square(4);
        let g = build_isoradial(&sq).unwrap();
        assert!(sq.embedding_defect() < 1e-12);
        for v in 0..g.num_vertices() as VertexId {
            for &w in g.neighbors(v).1 {
                assert_relative_eq!(w, 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(g.neighbors(c).0.len(), 4);

        let (tri, c) = IsoradialSpec::triangular(4);
        let g = build_isoradial(&tri).unwrap();
        assert_eq!(g.neighbors(c).0.len(), 6);
        assert_relative_eq!(g.neighbors(c).1[0], 1.0 / 3f64.sqrt(), epsilon = 1e-12);

        let (hex, c) = IsoradialSpec::hexagonal(4);
        let g = build_isoradial(&hex).unwrap();
        assert_eq!(g.neighbors(c).0.len(), 3);
        assert_relative_eq!(g.neighbors(c).1[0], 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ellipticity_violation_names_edge() {
        let spec = IsoradialSpec {
            positions: vec![[0.0, 0.0], [1.0, 0.0]],
            edges: vec![(0, 1, 0.01)],
            eta: 0.1,
        };
        match build_isoradial(&spec).unwrap_err() {
            Error::Ellipticity { a, b, .. } => assert_eq!((a, b), (0, 1)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn isoradial_text_roundtrip() {
        let (tri, _) = IsoradialSpec::triangular(2);
        let parsed = parse_isoradial(&tri.to_text(), tri.eta).unwrap();
        assert_eq!(parsed.edges.len(), tri.edges.len());
        assert!(parse_isoradial("V 0 0 0\nE 0 7 0.5\n", 0.1).is_err());
        assert!(
            parse_isoradial("# c\nV 10 0 0 # trailing\nV 20 1.4 0\nE 10 20 0.7\n", 0.1).is_ok()
        );
    }

    #[test]
    fn restricted_graph_drops_exits() {
        let b = build_box(2, 1, RateModel::UnitRate).unwrap();
        let g = b.graph.restrict(&b.domain);
        assert_eq!(g.num_vertices(), 9);
        assert_relative_eq!(g.rate(0), 0.5);
        assert_relative_eq!(g.rate(4), 1.0);
    }

    proptest! {
        #[test]
        fn graph_balls_are_nested(r in 0usize..5, n in 0usize..4) {
            let (tri, c) = IsoradialSpec::triangular(8);
            let g = build_isoradial(&tri).unwrap();
            let small = Domain::graph_ball(&g, c, n).unwrap();
            let big = Domain::graph_ball(&g, c, n + 1 + r % 2).unwrap();
            prop_assert!(small.interior().iter().all(|&v| big.contains(v)));
            prop_assert!(small.boundary().iter().all(|&v| !small.contains(v)));
        }

        #[test]
        fn box_interior_size(d in 1usize..4, n in 0usize..5) {
            let b = build_box(d, n, RateModel::UnitConductance).unwrap();
            prop_assert_eq!(b.domain.len(), (2 * n + 1).pow(d as u32));
            prop_assert_eq!(b.graph.symmetry_defect(), 0.0);
        }
    }
}
