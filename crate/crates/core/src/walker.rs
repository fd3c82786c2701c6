//! Exact simulation of continuous-time Markov jump processes on conductance
//! networks: exponential holding times with rate Σ_y W_xy, jumps to y with
//! probability W_xy / Σ_z W_xz. Trajectories are never stored; each run
//! returns the occupation-time field it produced.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{box_index, BoxLattice, Domain, StepDistribution, VertexId, WeightedGraph};

pub const DEFAULT_MAX_JUMPS: u64 = 2_000_000_000;

/// Where a run stopped, when it stopped by leaving the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exit {
    Vertex(VertexId),
    /// Lattice site, used by the coordinate-based step-walk simulator.
    Site(Vec<i64>),
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exit::Vertex(v) => write!(f, "{v}"),
            Exit::Site(x) => {
                let parts: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                write!(f, "{}", parts.join(":"))
            }
        }
    }
}

/// Occupation times of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    /// Visited vertices with their local times, sorted by vertex.
    pub local_times: Vec<(VertexId, f64)>,
    pub tau: f64,
    pub exit: Option<Exit>,
    pub jumps: u64,
    pub replica: u64,
}

impl LocalTimeField {
    pub fn get(&self, v: VertexId) -> f64 {
        match self.local_times.binary_search_by_key(&v, |e| e.0) {
            Ok(i) => self.local_times[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn visited(&self) -> usize {
        self.local_times.len()
    }

    pub fn total(&self) -> f64 {
        let mut acc = KahanSum::default();
        for &(_, l) in &self.local_times {
            acc.add(l);
        }
        acc.value()
    }

    /// Vertex with the largest local time.
    pub fn max(&self) -> Option<(VertexId, f64)> {
        self.local_times
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Local times laid out over `domain`'s interior order (zeros where unvisited).
    pub fn dense(&self, domain: &Domain) -> Vec<f64> {
        let mut out = vec![0.0; domain.len()];
        for &(v, l) in &self.local_times {
            if let Some(i) = domain.slot(v) {
                out[i] = l;
            }
        }
        out
    }

    pub fn exit_vertex(&self) -> Option<VertexId> {
        match self.exit {
            Some(Exit::Vertex(v)) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

#[inline]
fn choose_neighbor<R: Rng + ?Sized>(graph: &WeightedGraph, v: VertexId, rng: &mut R) -> VertexId {
    let (targets, weights) = graph.neighbors(v);
    let mut u = rng.random::<f64>() * graph.rate(v);
    for (&t, &w) in targets.iter().zip(weights) {
        if u < w {
            return t;
        }
        u -= w;
    }
    *targets
        .last()
        .expect("vertex with positive rate has a neighbor")
}

/// Reusable simulator for one graph and domain. Holds an O(|V|) scratch
/// buffer so repeated replicas do not reallocate.
pub struct Walker<'a> {
    graph: &'a WeightedGraph,
    domain: &'a Domain,
    max_jumps: u64,
    times: Vec<f64>,
    touched: Vec<VertexId>,
}

impl<'a> Walker<'a> {
    pub fn new(graph: &'a WeightedGraph, domain: &'a Domain) -> Self {
        Self {
            graph,
            domain,
            max_jumps: DEFAULT_MAX_JUMPS,
            times: vec![0.0; graph.num_vertices()],
            touched: Vec::new(),
        }
    }

    pub fn for_box(lattice: &'a BoxLattice) -> Self {
        Self::new(&lattice.graph, &lattice.domain)
    }

    pub fn with_max_jumps(mut self, max_jumps: u64) -> Self {
        self.max_jumps = max_jumps;
        self
    }

    /// Run from `start` until the first jump out of the domain interior.
    pub fn run_until_exit<R: Rng + ?Sized>(
        &mut self,
        start: VertexId,
        rng: &mut R,
        replica: u64,
    ) -> Result<LocalTimeField> {
        self.run_inner(start, rng, replica, |_| {})
    }

    /// Same as [`Walker::run_until_exit`], also appending every vertex the
    /// walk occupies (start included, exit vertex excluded) to `path`.
    pub fn run_until_exit_recording<R: Rng + ?Sized>(
        &mut self,
        start: VertexId,
        rng: &mut R,
        replica: u64,
        path: &mut Vec<VertexId>,
    ) -> Result<LocalTimeField> {
        path.clear();
        self.run_inner(start, rng, replica, |v| path.push(v))
    }

    fn run_inner<R: Rng + ?Sized, F: FnMut(VertexId)>(
        &mut self,
        start: VertexId,
        rng: &mut R,
        replica: u64,
        mut on_enter: F,
    ) -> Result<LocalTimeField> {
        if !self.domain.contains(start) {
            return Err(invalid(format!(
                "start vertex {start} is not in the domain interior"
            )));
        }
        let mut v = start;
        let mut tau = KahanSum::default();
        let mut jumps = 0u64;
        let exit = loop {
            on_enter(v);
            let rate = self.graph.rate(v);
            if !(rate > 0.0) {
                self.reset();
                return Err(Error::Singular(format!("vertex {v} has zero jump rate")));
            }
            let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
            let slot = &mut self.times[v as usize];
            if *slot == 0.0 {
                self.touched.push(v);
            }
            *slot += hold;
            tau.add(hold);
            if jumps >= self.max_jumps {
                self.reset();
                return Err(Error::JumpCeiling(self.max_jumps));
            }
            v = choose_neighbor(self.graph, v, rng);
            jumps += 1;
            if !self.domain.contains(v) {
                break v;
            }
        };
        Ok(LocalTimeField {
            local_times: self.drain(),
            tau: tau.value(),
            exit: Some(Exit::Vertex(exit)),
            jumps,
            replica,
        })
    }

    /// Whether the walk from `start` reaches `target` before leaving the domain.
    pub fn hits_before_exit<R: Rng + ?Sized>(
        &self,
        start: VertexId,
        target: VertexId,
        rng: &mut R,
    ) -> Result<bool> {
        let mut v = start;
        let mut jumps = 0u64;
        while self.domain.contains(v) {
            if v == target {
                return Ok(true);
            }
            if jumps >= self.max_jumps {
                return Err(Error::JumpCeiling(self.max_jumps));
            }
            v = choose_neighbor(self.graph, v, rng);
            jumps += 1;
        }
        Ok(false)
    }

    fn drain(&mut self) -> Vec<(VertexId, f64)> {
        self.touched.sort_unstable();
        let out = self
            .touched
            .iter()
            .map(|&v| (v, self.times[v as usize]))
            .collect();
        self.reset();
        out
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.times[v as usize] = 0.0;
        }
        self.touched.clear();
    }
}

/// One-shot convenience wrapper around [`Walker::run_until_exit`].
pub fn run_until_exit<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    domain: &Domain,
    start: VertexId,
    rng: &mut R,
) -> Result<LocalTimeField> {
    Walker::new(graph, domain).run_until_exit(start, rng, 0)
}

/// Run the walk on a finite graph from `pin` until its local time at `pin`
/// reaches `u`. The returned field has ℓ_pin = u exactly.
pub fn run_until_local_time<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    pin: VertexId,
    u: f64,
    rng: &mut R,
) -> Result<LocalTimeField> {
    run_until_local_time_capped(graph, pin, u, rng, DEFAULT_MAX_JUMPS)
}

pub fn run_until_local_time_capped<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    pin: VertexId,
    u: f64,
    rng: &mut R,
    max_jumps: u64,
) -> Result<LocalTimeField> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(invalid(format!(
            "local-time level u = {u} must be finite and nonnegative"
        )));
    }
    if pin as usize >= graph.num_vertices() {
        return Err(invalid(format!("pin {pin} is not a vertex")));
    }
    let mut times = vec![0.0; graph.num_vertices()];
    let mut tau = KahanSum::default();
    let mut jumps = 0u64;
    let mut v = pin;
    if u > 0.0 {
        loop {
            let rate = graph.rate(v);
            if !(rate > 0.0) {
                return Err(Error::Singular(format!("vertex {v} has zero jump rate")));
            }
            let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
            if v == pin && times[v as usize] + hold >= u {
                tau.add(u - times[v as usize]);
                times[v as usize] = u;
                break;
            }
            times[v as usize] += hold;
            tau.add(hold);
            if jumps >= max_jumps {
                return Err(Error::JumpCeiling(max_jumps));
            }
            v = choose_neighbor(graph, v, rng);
            jumps += 1;
        }
    }
    let local_times = times
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0)
        .map(|(i, &l)| (i as VertexId, l))
        .collect();
    Ok(LocalTimeField {
        local_times,
        tau: tau.value(),
        exit: None,
        jumps,
        replica: 0,
    })
}

/// Poissonized step walk Y_t = S_{N_t} on Z², run until it first leaves
/// {−N..N}². Simulated directly on coordinates; local times are keyed by
/// the box interior index, and the exit is reported as a lattice site
/// (which may lie several sites beyond the box for long steps).
pub fn run_step_walk_2d<R: Rng + ?Sized>(
    steps: &StepDistribution,
    radius: usize,
    start: [i64; 2],
    rng: &mut R,
) -> Result<LocalTimeField> {
    let r = radius as i64;
    if start[0].abs() > r || start[1].abs() > r {
        return Err(invalid(format!("start {start:?} lies outside the box")));
    }
    let side = 2 * radius + 1;
    let cumulative: Vec<(f64, [i64; 2])> = steps
        .support()
        .iter()
        .scan(0.0, |acc, &(x, p)| {
            *acc += p;
            Some((*acc, x))
        })
        .collect();
    let total = cumulative.last().map(|c| c.0).unwrap_or(1.0);
    let mut times = vec![0.0; side * side];
    let mut touched: Vec<usize> = Vec::new();
    let mut tau = KahanSum::default();
    let mut jumps = 0u64;
    let mut x = start;
    loop {
        let idx = ((x[0] + r) as usize) + side * ((x[1] + r) as usize);
        let hold: f64 = rng.sample(Exp1);
        if times[idx] == 0.0 {
            touched.push(idx);
        }
        times[idx] += hold;
        tau.add(hold);
        if jumps >= DEFAULT_MAX_JUMPS {
            return Err(Error::JumpCeiling(DEFAULT_MAX_JUMPS));
        }
        let u = rng.random::<f64>() * total;
        let s = cumulative
            .iter()
            .find(|c| u < c.0)
            .unwrap_or_else(|| cumulative.last().expect("nonempty support"))
            .1;
        x = [x[0] + s[0], x[1] + s[1]];
        jumps += 1;
        if x[0].abs() > r || x[1].abs() > r {
            break;
        }
    }
    touched.sort_unstable();
    let local_times = touched
        .iter()
        .map(|&i| {
            let site = [(i % side) as i64 - r, (i / side) as i64 - r];
            (box_index(&site, radius).expect("inside"), times[i])
        })
        .collect();
    Ok(LocalTimeField {
        local_times,
        tau: tau.value(),
        exit: Some(Exit::Site(x.to_vec())),
        jumps,
        replica: 0,
    })
}

/// Excursion count between a set of targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub targets: Vec<VertexId>,
    /// Number of moves between distinct targets; `None` if no target was hit.
    pub excursions: Option<u32>,
    /// Targets in order of first visit (a prefix of a permutation when some
    /// targets were never reached).
    pub first_visit_order: Vec<VertexId>,
}

impl ExcursionRecord {
    pub fn all_hit(&self) -> bool {
        self.first_visit_order.len() == self.targets.len()
    }

    /// Every target was visited and, once left, never revisited.
    pub fn is_ordered_sweep(&self) -> bool {
        self.all_hit() && self.excursions == Some(self.targets.len() as u32 - 1)
    }
}

/// Replay an occupied-vertex sequence (as recorded by
/// [`Walker::run_until_exit_recording`]) and count the successive entrances
/// into the target set, each time excluding the target last entered.
pub fn excursion_statistic(path: &[VertexId], targets: &[VertexId]) -> Result<ExcursionRecord> {
    let mut sorted = targets.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateTarget(w[0]));
        }
    }
    let mut current: Option<VertexId> = None;
    let mut count: Option<u32> = None;
    let mut order = Vec::new();
    for &v in path {
        if sorted.binary_search(&v).is_err() || current == Some(v) {
            continue;
        }
        count = Some(count.map_or(0, |c| c + 1));
        current = Some(v);
        if !order.contains(&v) {
            order.push(v);
        }
    }
    Ok(ExcursionRecord {
        targets: targets.to_vec(),
        excursions: count,
        first_visit_order: order,
    })
}

/// Walk on Z^d killed on leaving a large horizon box, used as a stand-in for
/// the total local time ℓ^∞ of the transient walk. Truncation bias of the
/// mean local time at the start is of order R^{2−d}.
pub struct HorizonWalk {
    lattice: BoxLattice,
}

#[derive(Clone, Debug)]
pub struct TruncatedField {
    pub field: LocalTimeField,
    pub horizon: usize,
    /// R^{2−d}, the order of the truncation bias.
    pub bias_order: f64,
}

impl HorizonWalk {
    pub fn new(dim: usize, horizon: usize) -> Result<Self> {
        if dim < 3 {
            return Err(invalid("the walk is recurrent below dimension 3"));
        }
        let lattice = crate::lattice::build_box(dim, horizon, crate::lattice::RateModel::UnitRate)?;
        Ok(Self { lattice })
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn walker(&self) -> Walker<'_> {
        Walker::for_box(&self.lattice)
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        walker: &mut Walker<'_>,
        start: &[i64],
        rng: &mut R,
        replica: u64,
    ) -> Result<TruncatedField> {
        let v = self
            .lattice
            .vertex_at(start)
            .filter(|&v| self.lattice.domain.contains(v))
            .ok_or_else(|| invalid("start lies outside the horizon box"))?;
        let field = walker.run_until_exit(v, rng, replica)?;
        let r = self.lattice.radius().max(1) as f64;
        Ok(TruncatedField {
            field,
            horizon: self.lattice.radius(),
            bias_order: r.powi(2 - self.lattice.dim() as i32),
        })
    }
}

/// `replica,tau,exit_vertex,jumps`
pub fn write_summary_csv<W: Write>(fields: &[LocalTimeField], mut out: W) -> std::io::Result<()> {
    writeln!(out, "replica,tau,exit_vertex,jumps")?;
    for f in fields {
        let exit = f.exit.as_ref().map(|e| e.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", f.replica, f.tau, exit, f.jumps)?;
    }
    Ok(())
}

/// Sparse `replica,vertex,ltime` table.
pub fn write_local_times_csv<W: Write>(
    fields: &[LocalTimeField],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "replica,vertex,ltime")?;
    for f in fields {
        for &(v, l) in &f.local_times {
            writeln!(out, "{},{},{}", f.replica, v, l)?;
        }
    }
    Ok(())
}
