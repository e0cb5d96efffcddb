//! Phase-space iterations for small-strain nonlinear truss elasticity.
//!
//! The solver alternates two projections in a phase space whose points carry
//! one `(strain, stress)` pair per bar: onto the set of equilibrated and
//! compatible states ([`projection_e`]) and onto the constitutive law
//! ([`projection_d`]). A damped Newton-Raphson solver ([`nr_solver`]) serves
//! as a baseline and [`analysis`] holds closed-form oracles for the 1D case.

pub mod analysis;
pub mod constitutive;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod nr_solver;
pub mod phase_space;
pub mod projection_d;
pub mod projection_e;
pub mod psi_solver;

pub use constitutive::{
    LinearLaw, Material, MaterialLaw, MaterialSpec, NeuralLaw, PowerLaw, QuadraticPerturbedLaw,
};
pub use error::{PsiError, Result};
pub use mesh::{
    desk_truss, generate_truss, serial_bars, BarElement, BoundaryConditions, LoadRecipe, Node,
    TrussProblem,
};
pub use nr_solver::{nr_solve, NrConfig};
pub use phase_space::{ElementState, Metric, PhasePoint};
pub use projection_d::{PdKind, PdSettings};
pub use psi_solver::{psi_solve, PsiSolver, Solution, SolverConfig, StopReason};
