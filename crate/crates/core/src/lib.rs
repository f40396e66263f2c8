//! Flux-deforming isotopies of conformal minimal immersions of circular
//! planar domains into R^3, and their completion to real parts of null
//! curves.

pub mod cli;
pub mod config;
pub mod error;
pub mod fourier;
pub mod isotopy;
pub mod labyrinth;
pub mod laurent;
pub mod linalg;
pub mod loops;
pub mod nullquadric;
pub mod output;
pub mod path;
pub mod riemann;
pub mod sprays;
pub mod vec3;
pub mod weierstrass;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
