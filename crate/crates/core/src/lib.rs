//! Numerical laboratory for vector-valued concentration on the biased cube.
//!
//! The crate evaluates both sides of a Pisier-type inequality for functions
//! `f : {−1,1}^n → ℓ_q^d` under the product measure with `P(ε_i = 1) = α`,
//! exactly for small `n` and by seeded Monte Carlo beyond that. It also covers
//! the product-Poisson limit of the same inequality, the binomial-to-Poisson
//! convergence behind it, and average distortion of cube embeddings.
//!
//! Layout:
//!
//! * [`cube`], [`norm`]: points, measure, function tables, derivatives.
//! * [`semigroup`]: heat kernel, generator, Dirichlet form, δ coefficients.
//! * [`inequality`], [`extremal`]: both sides of the cube inequalities.
//! * [`poisson`]: the Poisson lattice versions and the scaling limit.
//! * [`distortion`]: Hamming metric, Lipschitz constants, average distortion.
//! * [`quadrature`], [`mc`]: integration and sampling plumbing.
//! * [`io`], [`report`]: table formats and verification records.

pub mod cube;
pub mod distortion;
pub mod error;
pub mod extremal;
pub mod inequality;
pub mod io;
pub mod mc;
pub mod norm;
pub mod poisson;
pub mod quadrature;
pub mod report;
pub mod semigroup;

pub use cube::{BiasedMeasure, CubeFunction, CubeMap, CubePoint, FnMap};
pub use error::{Error, Result};
pub use inequality::{EvalMode, RhsEstimate};
pub use mc::{McEstimate, McSpec};
pub use norm::NormSpec;
pub use poisson::PoissonFunction;
pub use quadrature::{QuadratureSpec, Substitution};
pub use report::{InequalityReport, Method, Record};
pub use semigroup::KernelParams;
