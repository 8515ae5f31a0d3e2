pub mod algebra;
pub mod error;
pub mod expr;
pub mod fock;
pub mod kernels;
pub mod random;
pub mod scenario;
pub mod trotter;
pub mod units;

pub use error::{Error, Result};
