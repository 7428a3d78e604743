//! Euler-type schemes for rough differential equations driven by fractional
//! Brownian motion with Hurst parameter in `(1/3, 1/2)`, together with the
//! constants, limit processes and diagnostics describing their error.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod fbm;
pub mod jacobian;
pub mod field;
pub mod lift;
pub mod limit;
pub mod numeric;
pub mod schemes;
pub mod seed;

pub use error::{Error, Result};
