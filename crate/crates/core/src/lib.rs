//! Minimum-rank Gram matrices for sums of squares.
//!
//! A polynomial `f` of degree `2d` is a sum of squares exactly when
//! `f = mon^T W mon` for some positive semidefinite `W`. This crate builds the
//! coefficient-matching system `A(W) = b`, searches for a low-rank PSD `W` by
//! nuclear-norm regularized fixed-point iterations (fixed step, Barzilai-Borwein
//! step, and accelerated variants), refines the factors with Gauss-Newton, and
//! turns the result into an exact rational certificate.

pub mod bench;
pub mod error;
pub mod exact;
pub mod grammap;
pub mod pipeline;
pub mod polyalg;
pub mod refine;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grammap::{build_basis, build_constraints, BasisOption, ConstraintSystem, MonomialBasis};
pub use polyalg::{parse_polynomial, Monomial, Polynomial, Rational};

pub use spectral::{EigenDecomposition, SymMatrix};
pub use solver::{solve, SolveResult, SolverConfig, Variant};
pub use exact::{certify, SosCertificate};
pub use pipeline::{certify_polynomial, PipelineConfig};
