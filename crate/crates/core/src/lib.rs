//! Ultra-weak discontinuous Petrov-Galerkin (DPG) solver for second-order
//! elliptic problems on 2D triangular meshes.
//!
//! The solver works with the first-order system `σ = ∇u`, `-div σ + c u = f`
//! (`c = 1` for reaction-diffusion, `c = 0` for Poisson). Field unknowns
//! `(u, σ)` are discontinuous polynomials; the skeleton carries a continuous
//! trace `û` and a single-valued normal flux `σ̂`. Test functions live in the
//! broken space `P^{p+Δp}(T) × P^{p+Δp}(T)²`, so the test Gram is block
//! diagonal and everything except the skeleton solve is elementwise.
//!
//! Main entry points:
//!
//! * [`mesh`]: triangle meshes with newest-vertex bisection.
//! * [`spaces`]: quadrature, orthonormal polynomial bases, element maps.
//! * [`dpg`]: local assembly, static condensation, global solve, estimator.
//! * [`postprocess`]: elementwise Neumann postprocessing `ũ_h ∈ P^{p+1}`.
//! * [`adapt`]: bulk marking and the adaptive loop.
//! * [`problems`]: manufactured solutions and error evaluation.
//! * [`study`]: convergence studies, slope fitting and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod dpg;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod postprocess;
pub mod problems;
pub mod spaces;
pub mod study;

pub use adapt::{adaptive_loop, mark, AdaptiveRun, AdaptiveStep, MarkParams};
pub use dpg::{
    assemble_solve, estimator, DofMap, DpgOptions, LocalSystem, ProblemKind, Solution, SolverDiagnostics,
    TrialSpaceKind,
};
pub use error::{Error, Result};
pub use mesh::{Edge, Mesh, Triangle};
pub use postprocess::{postprocess_all, postprocess_element, PostprocessedField};
pub use problems::{error_report, Domain, ErrorReport, ManufacturedProblem};
pub use study::{
    decade_window, fit_slope, run_study, run_study_with, Column, ConvergenceRecord, Mode, ProblemChoice, StudyConfig,
    TrialChoice,
};
