//! Energy-stability analysis of explicit Runge–Kutta methods.
//!
//! Exact tableau arithmetic, rooted-tree B-series weights, the stability
//! matrix and sign condition, energy-change expansions, reference problems,
//! numerical integration and a constructive search for new methods.

pub mod catalog;
pub mod expansion;
pub mod poly;
pub mod problems;
pub mod rational;
pub mod scalar;
pub mod search;
pub mod simulate;
pub mod stability;
pub mod suite;
pub mod tableau;
pub mod trees;

pub use catalog::Catalog;
pub use rational::Rational;
pub use scalar::{Extended, Precision, Scalar};
pub use tableau::ButcherTableau;
pub use trees::RootedTree;
