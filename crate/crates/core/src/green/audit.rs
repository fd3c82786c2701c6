//! Finite-N checks of logarithmic Green-function growth on planar graphs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::operator::GreenSolver;
use crate::error::{invalid, Result};
use crate::lattice::{
    build_isoradial, Domain, IsoradialSpec, StepDistribution, VertexId, WeightedGraph,
};
use crate::stats::{linear_fit, Provenance, SlopeFit, StatReport};

pub const SLOPE_TOLERANCE: f64 = 0.15;
pub const MIN_R2: f64 = 0.99;

/// A planar walk whose Green function grows like slope · log N.
#[derive(Clone, Debug)]
pub enum PlanarWalk {
    /// Rate-1 walk with the given step law on boxes {−N..N}².
    Steps(StepDistribution),
    /// Isoradial graph with conductances tan θ on graph-distance balls
    /// around `center`.
    Isoradial {
        spec: IsoradialSpec,
        center: VertexId,
    },
}

impl PlanarWalk {
    /// Expected slope of G_N(x₀,x₀) against log N.
    pub fn theoretical_slope(&self) -> f64 {
        match self {
            PlanarWalk::Steps(s) => s.potential_slope(),
            PlanarWalk::Isoradial { .. } => 1.0 / (2.0 * PI),
        }
    }

    /// G_N(x₀,x₀) at radius N, plus the total jump rate at x₀.
    pub fn center_green(&self, radius: usize) -> Result<(f64, f64)> {
        match self {
            PlanarWalk::Steps(s) => {
                let b = s.build_box(radius)?;
                let o = b.origin();
                let g = GreenSolver::new(&b.graph, &b.domain)?.diagonal_entry(o)?;
                Ok((g, b.graph.rate(o)))
            }
            PlanarWalk::Isoradial { spec, center } => {
                let graph = build_isoradial(spec)?;
                let d = Domain::graph_ball(&graph, *center, radius)?;
                let g = GreenSolver::new(&graph, &d)?.diagonal_entry(*center)?;
                Ok((g, graph.rate(*center)))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeCheck {
    /// (N, G_N(x₀,x₀))
    pub points: Vec<(usize, f64)>,
    pub fit: SlopeFit,
    pub theory: f64,
    /// Total jump rate at x₀: the slope scales inversely with it.
    pub center_rate: f64,
    pub reports: Vec<StatReport>,
}

impl SlopeCheck {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed())
    }
}

/// Fit G_N(x₀,x₀) = slope · log N + c by least squares over `radii`.
pub fn potential_slope_check_2d(
    walk: &PlanarWalk,
    radii: &[usize],
    tolerance: f64,
) -> Result<SlopeCheck> {
    if radii.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 radii, got {}",
            radii.len()
        )));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 1 {
        return Err(invalid("radii must be positive and increasing"));
    }
    let mut points = Vec::with_capacity(radii.len());
    let mut center_rate = 0.0;
    for &n in radii {
        let (g, rate) = walk.center_green(n)?;
        points.push((n, g));
        center_rate = rate;
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|&(n, g)| ((n as f64).ln(), g)).collect();
    let fit = linear_fit(&pairs)?;
    let theory = walk.theoretical_slope();
    let slope = StatReport::relative_error(
        "potential-slope",
        fit.slope,
        theory,
        tolerance,
        Provenance::Published,
    )
    .with_note(format!(
        "fit se {:.3e}; total jump rate at the center {center_rate}",
        fit.se
    ));
    let r2 = StatReport::margin("potential-slope-r2", fit.r2, MIN_R2, Provenance::Trivial);
    Ok(SlopeCheck {
        points,
        fit,
        theory,
        center_rate,
        reports: vec![slope, r2],
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenAudit {
    pub radius: usize,
    pub log_coefficient: f64,
    /// g·log N − max_x G_N(x,x) over the audited vertices.
    pub diagonal_margin: f64,
    /// min over pairs of g·log(N/d(x,y)) − G_N(x,y).
    pub off_diagonal_margin: f64,
    /// min_y G_N(x₀,y) over the interior.
    pub min_center_row: f64,
    pub reports: Vec<StatReport>,
}

/// Margins of the finite-N analogues of the logarithmic Green bounds:
/// diagonal G_N(x,x) against g·log N, off-diagonal G_N(x,y) against
/// g·log(N/d(x,y)) with d the graph distance, and positivity of G_N(x₀,·).
/// These are asymptotic statements, so every row is report-only.
pub fn audit_green_assumptions(
    graph: &WeightedGraph,
    domain: &Domain,
    log_coefficient: f64,
    pairs: &[(VertexId, VertexId)],
) -> Result<GreenAudit> {
    let n = domain.radius();
    if n < 2 {
        return Err(invalid("the audit needs radius at least 2"));
    }
    let solver = GreenSolver::new(graph, domain)?;
    let log_n = (n as f64).ln();
    let center = domain.center();
    let center_row = solver.column(center)?;
    let min_center_row = center_row.iter().copied().fold(f64::INFINITY, f64::min);

    let mut sources: Vec<VertexId> = pairs.iter().map(|p| p.0).collect();
    sources.push(center);
    sources.sort_unstable();
    sources.dedup();
    let mut max_diag = f64::NEG_INFINITY;
    let mut off_margin = f64::INFINITY;
    for &x in &sources {
        let col = if x == center {
            center_row.clone()
        } else {
            solver.column(x)?
        };
        let sx = domain
            .slot(x)
            .ok_or_else(|| invalid(format!("vertex {x} is outside the domain")))?;
        max_diag = max_diag.max(col[sx]);
        let dist = graph.bfs_distances(x);
        for &(_, y) in pairs.iter().filter(|p| p.0 == x) {
            let sy = domain
                .slot(y)
                .ok_or_else(|| invalid(format!("vertex {y} is outside the domain")))?;
            let d = dist[y as usize].max(1) as f64;
            off_margin = off_margin.min(log_coefficient * (n as f64 / d).ln() - col[sy]);
        }
    }
    let diagonal_margin = log_coefficient * log_n - max_diag;
    let reports = vec![
        StatReport::report_only(
            "diagonal-margin",
            diagonal_margin,
            0.0,
            0,
            0.0,
            Provenance::Derived,
        )
        .with_note(format!("relative to log N: {:.4}", diagonal_margin / log_n)),
        StatReport::report_only(
            "off-diagonal-margin",
            off_margin,
            0.0,
            pairs.len() as u64,
            0.0,
            Provenance::Derived,
        )
        .with_note(format!("relative to log N: {:.4}", off_margin / log_n)),
        StatReport::report_only(
            "min-center-row",
            min_center_row,
            0.0,
            domain.len() as u64,
            0.0,
            Provenance::Trivial,
        ),
    ];
    Ok(GreenAudit {
        radius: n,
        log_coefficient,
        diagonal_margin,
        off_diagonal_margin: off_margin,
        min_center_row,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_box, build_step_walk, RateModel};

    #[test]
    fn simple_walk_slope() {
        let c = potential_slope_check_2d(
            &PlanarWalk::Steps(StepDistribution::nearest_neighbor()),
            &[8, 16, 32, 64],
            0.15,
        )
        .unwrap();
        assert!(c.passed(), "{:?}", c.reports);
        assert!((c.theory - 2.0 / PI).abs() < 1e-15);
        assert!(potential_slope_check_2d(
            &PlanarWalk::Steps(StepDistribution::nearest_neighbor()),
            &[8, 16],
            0.15
        )
        .is_err());
    }

    #[test]
    fn equal_determinants_equal_slopes() {
        // {(±2,0),(0,±1)} uniform and {(±1,0),(0,±2)} uniform share det 𝒢 = 1
        let a = build_step_walk(&[
            ([2, 0], 0.25),
            ([-2, 0], 0.25),
            ([0, 1], 0.25),
            ([0, -1], 0.25),
        ])
        .unwrap();
        let b = build_step_walk(&[
            ([1, 0], 0.25),
            ([-1, 0], 0.25),
            ([0, 2], 0.25),
            ([0, -2], 0.25),
        ])
        .unwrap();
        let ca = potential_slope_check_2d(&PlanarWalk::Steps(a), &[8, 16, 32], 0.15).unwrap();
        let cb = potential_slope_check_2d(&PlanarWalk::Steps(b), &[8, 16, 32], 0.15).unwrap();
        assert!((ca.fit.slope - cb.fit.slope).abs() < 1e-9);
    }

    #[test]
    fn audit_reports_are_finite() {
        let b = build_box(2, 16, RateModel::UnitRate).unwrap();
        let x = b.vertex_at(&[3, -2]).unwrap();
        let y = b.vertex_at(&[-5, 4]).unwrap();
        let a = audit_green_assumptions(&b.graph, &b.domain, 2.0 / PI, &[(x, y), (b.origin(), y)])
            .unwrap();
        assert!(a.diagonal_margin.is_finite() && a.off_diagonal_margin.is_finite());
        assert!(a.min_center_row > 0.0);
        assert!(a.reports.iter().all(|r| r.passed()));
    }
}
