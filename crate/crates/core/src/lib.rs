//! Numerics for the elliptic quantum group `U_{q,p}(sl_N^)`.
//!
//! * [`ellfn`]: theta functions, Jacobi brackets, elliptic Gamma, scalar factors
//! * [`tensorspace`]: colors, partitions, weights, dynamical parameters
//! * [`rmat`]: the elliptic dynamical R-matrix and Yang-Baxter residuals
//! * [`weightfn`]: elliptic weight functions and stable-envelope restrictions
//! * [`gtrep`]: level-0 evaluation representation and the Gelfand-Tsetlin action
//! * [`qkz`]: elliptic q-KZ integrands and torus quadrature
//! * [`verify`]: the residual suites behind `ellqg verify`

pub mod dense;
pub mod ellfn;
pub mod error;
pub mod gtrep;
pub mod par;
pub mod qkz;
pub mod rmat;
pub mod tensorspace;
pub mod verify;
pub mod weightfn;

pub use error::{Error, Result};
pub use num_complex::Complex64;
