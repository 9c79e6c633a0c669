//! Block Gauss and block Gauss-Radau quadrature for `Bᵀ φ(A) B`.
//!
//! A single block Lanczos sweep over a symmetric positive (semi)definite `A`
//! yields a block-tridiagonal matrix `T_m`. From it we read off a lower bound
//! `F_m` (Gauss), an upper bound `F̃_m` (Gauss-Radau) in the Loewner order
//! for the resolvent at real positive shifts, and cheap extrapolations that
//! average the two.
//!
//! Module map:
//! - [`smallmat`]: dense `p x p` / `mp x mp` kernels.
//! - [`operators`]: sparse operators, test-problem generators, file formats.
//! - [`lanczos`]: the block Lanczos recurrence.
//! - [`stieltjes`]: Stieltjes parameters, matrix S-fractions, the Radau matrix.
//! - [`quadrature`]: quadrature values, bounds, extrapolation, oracle.
//! - [`driver`]: configuration-driven convergence studies.

pub mod smallmat;
pub mod operators;
pub mod lanczos;
pub mod stieltjes;
pub mod quadrature;
pub mod driver;
