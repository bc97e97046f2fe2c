//! Numerical laboratory for n-body problems with power-law potentials
//! `f(x) = x^(-alpha-1)`: accelerations and conserved quantities, a
//! high-order adaptive integrator, planar central configurations,
//! relative-equilibrium and homographic orbit construction, and diagnostics
//! for the constancy of `I^alpha U` along solutions.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below name the double-precision instantiations used by the
//! command-line tool.

pub mod central_config;
pub mod dop853;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod homographic;
pub mod integrator;
pub mod linalg;
pub mod scalar;

pub use central_config::{
    cc_residual, gauge_fix, known_seeds, shape_signature, solve_central_config, CcResidual, CentralConfiguration,
    SeedKind, SolverOptions,
};
pub use dynamics::{
    accelerations, angular_momentum, center_of_mass, configurational_measure, energy,
    kinetic_energy, linear_momentum, moment_of_inertia, pairwise_deltas,
    pairwise_deltas_with_floor, potential, AngularMomentum, BodySystem, CollisionFloor, PairTable,
    PhaseState,
};
pub use error::{Error, Result};
pub use harness::{
    forward_catalog, identity_check, measure_variation, probe_converse, random_state, verify_forward,
    w_traces, ConjectureReport, ProbeOutcome, ScatterSummary, Verdict, WTrace,
};
pub use homographic::{
    homographic_deviation, is_relative_equilibrium, make_homographic, make_relative_equilibrium,
    reduced_orbit, HomographicSpec, ReducedOrbit,
};
pub use integrator::{integrate, Diagnostics, IntegratorSpec, Termination, Trajectory};
pub use scalar::Scalar;

pub type BodySystemF64 = BodySystem<f64>;
pub type PhaseStateF64 = PhaseState<f64>;
pub type PairTableF64 = PairTable<f64>;
pub type IntegratorSpecF64 = IntegratorSpec<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type CentralConfigurationF64 = CentralConfiguration<f64>;
pub type HomographicSpecF64 = HomographicSpec<f64>;
