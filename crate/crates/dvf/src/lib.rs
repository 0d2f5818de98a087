//! Discrete variational formulations on regular collocation grids.
//!
//! The crate builds finite-difference analogues of the usual variational
//! ingredients: grid functions over a rectangular lattice, one-sided
//! difference operators, mesh inner products, bilinear forms assembled into
//! sparse matrices, and a residual-preconditioned loss whose value matches a
//! discrete error norm. On top of that sit two model problems (a Poisson
//! equation and a first-order Stokes system), a small dense linear algebra
//! kit, and a feed-forward network trained against the loss.

pub mod assembly;
pub mod calculus;
pub mod cli;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod loss;
pub mod net;
pub mod problems;
pub mod spaces;
pub mod verify;

pub use assembly::{
    apply_form, assemble, assemble_dense, assemble_linear, BilinearForm, Integrand, SparseMatrix,
    SpaceSignature,
};
pub use calculus::{
    boundary_integral, diff, div, grad, inner_grad_h, inner_h, integrate, laplacian_h, norm_h,
    seminorm_grad_h, shift, zero_boundary, Sign,
};
pub use cli::{ExperimentConfig, Mode, Overrides};
pub use error::{Error, Result};
pub use field::{dot, max_abs_diff, GridFunction};
pub use grid::{Axis, Grid, AXES};
pub use linalg::{
    lu_factor, lu_factor_with_cap, numeric_rank, smallest_generalized_eig, DenseMatrix,
    LuFactorization, DEFAULT_DIM_CAP,
};
pub use loss::{ErrorBounds, ProblemSystem, SystemInputs};
pub use net::{load_params, save_params, train, Adamax, Mlp, TraceRow, TrainOutcome};
pub use problems::{
    build_laplace, build_problem, build_stokes_cavity, build_stokes_manufactured, divergence_form,
    error_metrics, infsup_constant, velocity_gram_form, ErrorReport, ExactSolution, PROBLEM_NAMES,
};
pub use spaces::{
    interior_mask, pressure_mask, select_dofs, select_dofs_where, CompositeFunctionSpace, DofSet,
    FunctionSpace,
};
pub use verify::{report, run_verification, CheckResult};
