//! Local identifiability of complete dictionaries under ℓ1-minimization
//! dictionary learning.
//!
//! A reference dictionary `D0` with unit-norm columns generates signals
//! `x = D0 α` where the coefficients follow an s-sparse Gaussian (`SG(s)`)
//! or Bernoulli(p)-Gaussian (`BG(p)`) law. This crate decides whether `D0`
//! is a local minimum of the expected ℓ1 objective:
//!
//! * exactly, through the dual norms of the `|||·|||_s` / `|||·|||_p`
//!   group norms ([`norms::dual_norm_exact`]),
//! * approximately, through cheap sandwich bounds ([`norms::dual_norm_bounds`]),
//! * with finite samples, through explicit probability bounds ([`finite_sample`]),
//! * and empirically, by running subgradient descent on the oblique manifold
//!   from `D0` ([`objective::manifold_descent`], [`experiment`]).

pub mod combinatorics;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod finite_sample;
pub mod hungarian;
pub mod identifiability;
pub mod models;
pub mod norms;
pub mod objective;

pub use dictionary::{
    constant_mu_dictionary, constant_mu_gram, dictionary_distance, gram, minimal_mu_gram,
    Dictionary, GramMatrix, SignedPermutation,
};
pub use error::{Error, Result};
pub use finite_sample::{finite_sample_report, required_samples, FiniteSampleReport, MarginSide};
pub use identifiability::{
    cumulative_coherence, directional_derivative, lower_functional, phase_boundary_constant_mu,
    phase_boundary_general, population_verdict, Condition, Method, Side, Status, Verdict,
};
pub use models::{generate_signals, sample_coefficients, SignalBatch, SparsityModel};
pub use norms::{
    dual_norm_bounds, dual_norm_closed_form_edges, dual_norm_exact, group_norm, hb,
    hypergeom_sqrt_mean, DualCertificate, GroupNormParam, SolverOptions,
};
pub use objective::{
    empirical_objective, empirical_subgradient, manifold_descent, population_objective,
    DescentConfig, DescentTrace,
};
