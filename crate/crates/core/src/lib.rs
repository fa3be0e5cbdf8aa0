//! Entanglement generated by low-energy scattering of two particles in the
//! plane: the universal coefficient `E(mu1)`, a brute-force purity oracle,
//! and the zero-energy scattering length.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod entangle;
pub mod purity_oracle;
pub mod quadrature;
pub mod smatrix;
pub mod specfun;
