//! Relaxed ℓ-minimal gradient descent on strongly convex quadratics
//! `f(x) = ½ xᵀAx − xᵀb`, implemented matrix-free with one operator
//! application per iteration.
//!
//! The crate is split into:
//!
//! - [`operators`]: SPD operator backends (dense, diagonal, CSR, Gram-plus-ridge),
//!   matvec accounting, Matrix Market I/O and extreme-eigenvalue estimation.
//! - [`solver`]: the iteration itself, driven by cached powers `A^j g_k`.
//! - [`theory`]: closed-form contraction rates, complexity bounds and
//!   dense inequality checks.
//! - [`diagnostics`]: traces, A-power norms and brute-force oracle comparisons.
//! - [`problems`]: problem generators and LIBSVM ingestion.
//! - [`experiment`], [`plot`], [`verify`]: benchmark harness used by the CLI.
//!
//! ```
//! use relaxed_mgd::{Ell, RelaxationMode, SolveStatus, SolverConfig, SpdOperator};
//!
//! let a = SpdOperator::diagonal((1..=100).map(f64::from).collect())?;
//! let b = vec![1.0; 100];
//! let config = SolverConfig::new(Ell::parse("1/2")?, RelaxationMode::fixed(0.95), 1e-10, 5000);
//! let result = relaxed_mgd::solver::solve(&a, &b, &vec![0.0; 100], &config)?;
//! assert_eq!(result.status, SolveStatus::Converged);
//! assert_eq!(result.matvecs.algorithmic, 2 + result.iterations as u64);
//! # Ok::<(), relaxed_mgd::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod operators;
pub mod plot;
pub mod problems;
pub mod solver;
pub mod theory;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use operators::{Charge, MatvecCounters, SpdOperator};
pub use solver::{Ell, RelaxationMode, SolveResult, SolveStatus, SolverConfig, SolverState};
pub use theory::{SpectralBounds, SpectralSource};
