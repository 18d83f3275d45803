//! Equilibrium measures, excess free energies and large-deviation tails of
//! volume-constrained Coulomb gases in radial potentials.
//!
//! The analytic modules are generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`); the aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod io;
pub mod kernel;
pub mod oracle;
pub mod potential;
pub mod quadrature;
pub mod rate;
pub mod sampler;
pub mod scalar;

pub use equilibrium::{
    certify_equilibrium, constrained_measure, critical_radius, energy_density, mean_field_energy,
    ConstrainedMeasure, EquilibriumCertificate,
};
pub use error::{Error, Result};
pub use kernel::{omega, CoulombKernel, Dimension};
pub use oracle::{
    assemble_energy, compare_to_analytic, minimize, ComparisonReport, DiscretizedMeasure,
    MinimizeOptions, OracleResult, RadialGrid,
};
pub use potential::{
    builtin, validate_assumptions, FnPotential, Linear, Quadratic, Quartic, RadialPotential,
    ValidationReport,
};
pub use rate::{
    derivatives, excess_free_energy, quadratic_closed_form, rate_report, right_tail,
    third_derivative_left_limit, transition_scan, DerivativeTriple, RateFunctionReport,
    TransitionScan,
};
pub use sampler::{
    compare_density, metropolis_sweep, run, total_energy, ChainState, DensityReport, GasConfig,
    OneParticleLaw, SampleStats,
};
pub use scalar::Real;

pub type Kernel = CoulombKernel<f64>;
pub type Measure<'a> = ConstrainedMeasure<'a, f64>;
pub type RateReport = RateFunctionReport<f64>;
pub type Scan = TransitionScan<f64>;
pub type Derivatives = DerivativeTriple<f64>;
pub type Potential = dyn RadialPotential<f64>;
pub type Grid = RadialGrid<f64>;
pub type Discretized = DiscretizedMeasure<f64>;
pub type Oracle = OracleResult<f64>;
