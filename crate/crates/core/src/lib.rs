//! Bit-exact parametric minifloat arithmetic, floating-point transformers,
//! a compiler for the expressivity constructions, and the suites that check them.
//!
//! Every semantic path runs on integer sign/exponent/significand triples; native
//! floating point never appears in a value computation.

pub mod constructions;
pub mod error;
pub mod fp;
pub mod linalg;
pub mod transformer;
pub mod verify;

pub use error::{Error, Result};
pub use fp::{ExactScalar, Fp, FpFormat};
pub use linalg::{FpMatrix, Permutation};
