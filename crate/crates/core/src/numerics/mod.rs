//! Numerical building blocks: quadrature, root bracketing, sample statistics.

pub mod quadrature;
pub mod roots;
pub mod stats;

pub use quadrature::{integrate, integrate_to_infinity, integrate_with_breaks, QuadOptions, Quadrature};
pub use roots::bisect;
pub use stats::{MeanEstimate, Z95};
