//! Green operators of killed walks, lattice Green constants, and the
//! Brownian harmonic-measure kernel of the cube.

pub mod audit;
pub mod brownian;
pub mod constants;
pub mod linalg;
pub mod operator;

pub use audit::{
    audit_green_assumptions, potential_slope_check_2d, GreenAudit, PlanarWalk, SlopeCheck,
};
pub use brownian::{
    harmonic_measure_sampler, kernel, q_kernel, sample_exit, walk_on_spheres, CubeExit, Estimate,
    ExitSampler, HarmonicBank, CHUNK,
};
pub use constants::{a_d_constant, lattice_green_constant, watson_closed_form_d3, GreenConstant};
pub use operator::{
    box_max_diagonal, exact_green, exact_green_with_budget, green_column_cg, GreenInvariants,
    GreenOperator, GreenSolver, DEFAULT_GREEN_BUDGET,
};
