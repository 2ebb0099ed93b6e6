//! Special functions and small dense linear algebra.

pub mod gamma;
pub mod linalg;

pub use gamma::{
    inverse_regularized_lower_gamma, ln_gamma, regularized_gamma_pair, regularized_lower_gamma,
};
pub use linalg::{
    matrix_from_rows, max_eigenpair, psd_sqrt, sampling_factor, solve_dare, solve_lyapunov,
    spectral_radius, symmetric_eigen, symmetrize, DareSolution, Matrix, SymmetricEigen,
    SymmetricPsd, Vector,
};
