//! Solver and simulation toolkit for discrete-time multi-team routing games
//! under a log-population congestion tax.
//!
//! A population of drivers, split into teams with their own travel costs and
//! origin/destination pairs, routes over a shared graph. An operator charges
//! each move by how far the realized team populations deviate from a
//! reference routing policy, weighted across teams by an interaction matrix.
//! In the large-population limit the equilibrium is linearly solvable: one
//! backward pass of per-edge linear solves and log-sum-exp normalizations
//! ([`solver::solve`]). The crate also provides forward density propagation
//! and best-response analysis against frozen tax fields ([`dynamics`]), and
//! a finite-population Monte Carlo simulator that measures how fast the
//! finite game approaches the limit ([`sim`]).
//!
//! All numeric code is generic over the scalar ([`scalar::Scalar`]); the
//! `*64`/`*32` aliases below pin the common instantiations.
//!
//! ```
//! use mfr_core::{scenario, solver, dynamics};
//!
//! let spec = scenario::three_node_demo::<f64>();
//! let artifacts = solver::solve(&spec).unwrap();
//! let residual = solver::stationarity_residual(&spec, &artifacts);
//! assert!(residual < 1e-8);
//! let gaps = dynamics::exploitability(&spec, &artifacts.policy).unwrap();
//! assert!(gaps.iter().all(|&g| g <= 1e-8));
//! ```

pub mod artifacts;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod graph;
pub mod linalg;
pub mod policy;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod spec;
pub mod tensor;

pub use artifacts::SolverArtifacts;
pub use dynamics::{best_response, evaluate_cost, exploitability, propagate, CostReport};
pub use error::Error;
pub use graph::TrafficGraph;
pub use policy::{DensityTrajectory, PolicyProfile, TaxField, TeamPolicy};
pub use scalar::Scalar;
pub use sim::{
    empirical_tax, estimate_epsilon, estimate_expected_tax, simulate, PopulationCounts,
    SimulationReport,
};
pub use solver::{mean_field_tax, solve, stationarity_residual, value_function};
pub use spec::{validate_spec, GameSpec, Violation};

pub type GameSpec64 = GameSpec<f64>;
pub type GameSpec32 = GameSpec<f32>;
pub type PolicyProfile64 = PolicyProfile<f64>;
pub type PolicyProfile32 = PolicyProfile<f32>;
pub type DensityTrajectory64 = DensityTrajectory<f64>;
pub type DensityTrajectory32 = DensityTrajectory<f32>;
pub type SolverArtifacts64 = SolverArtifacts<f64>;
pub type SolverArtifacts32 = SolverArtifacts<f32>;
pub type TaxField64 = TaxField<f64>;
pub type TaxField32 = TaxField<f32>;
pub type SimulationReport64 = SimulationReport<f64>;
