//! Point-SAGA: an accelerated incremental proximal method for finite sums.
//!
//! The crate solves L2-regularized linear-model problems of the form
//! `f(x) = (1/n) Σ_i [ l(<x, X_i>; y_i) + (μ/2)‖x‖² ]` for hinge, logistic
//! and squared losses. Besides the solver itself it ships SAGA and Pegasos
//! baselines, executable checks of the method's convergence theory, and an
//! experiment harness that writes per-epoch CSV traces.
//!
//! Module map:
//!
//! - [`data`]: LIBSVM parsing, subsampling, problem constants.
//! - [`losses`]: loss values, scalar subgradients, one-dimensional proximal
//!   operators and the L2-folded term prox.
//! - [`engine`]: the Point-SAGA solver with dense and lazy backends.
//! - [`baselines`]: SAGA and Pegasos.
//! - [`diagnostics`]: reference solutions, Lyapunov tracking, operator
//!   inequalities and brute-force oracles.
//! - [`harness`]: grid search, f* estimation and trace output.

pub mod baselines;
pub mod data;
pub mod diagnostics;
pub mod engine;
mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod rng;

pub use data::{derive_constants, Dataset, LabelMap, ProblemSpec, SparseVec};
pub use engine::{
    kappa, step_size_default, Backend, GradientTable, InitMode, SolverState, StepSizePlan,
    TableStorage,
};
pub use error::{Error, Result};
pub use losses::{LossKind, ProxResult};
