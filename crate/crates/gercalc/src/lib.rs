//! Exact computer algebra for brace trees, free Gerstenhaber-type operads,
//! polydifferential Hochschild cochains, and the convolution homotopy-Lie
//! calculus built on top of them.
//!
//! All arithmetic is over arbitrary-precision rationals; every algorithm is
//! deterministic so artifacts are byte-for-byte reproducible.

pub mod brace;
pub mod conv;
pub mod rigidity;
pub mod cyl;
pub mod ger;
pub mod graded;
pub mod linalg;
pub mod poly;
pub mod scalar;
pub mod superpoly;
