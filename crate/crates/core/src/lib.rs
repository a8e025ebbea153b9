//! Numerical laboratory for super-Brownian motions on the line with spatially
//! dependent branching mechanisms.
//!
//! The crate is organized around one linear engine and one nonlinear engine,
//! both sharing a uniform 1D grid:
//!
//! * [`grid`] — grid, quadrature, interpolation, discrete Laplacian;
//! * [`mechanism`] — the branching mechanism ψ(x,λ) and the skeleton offspring
//!   law derived from it;
//! * [`spectral`] — principal eigenvalue and ground state of ½Δ + β, frontier
//!   constants, and the exponential rate function of the moving-window mass;
//! * [`feynman_kac`] — Crank-Nicolson semigroup solver, moving-window tail
//!   masses, and exact first/second moments of the superprocess and skeleton;
//! * [`loglaplace`] — Strang-split solver of the log-Laplace equation, exact
//!   Laplace functionals, the martingale function w, and the two sides of the
//!   critical-frontier limit theorems;
//! * [`particle`] — seeded Monte Carlo for the skeleton branching diffusion and
//!   the N-particle superprocess approximation.

pub mod error;
pub mod feynman_kac;
pub mod grid;
pub mod loglaplace;
pub mod mechanism;
pub mod particle;
pub mod spectral;

pub use error::CoreError;
pub use grid::{Grid, GridFunction};
pub use mechanism::{BranchingMechanism, JumpAtom, OffspringLaw, Profile};
pub use spectral::SpectralData;
