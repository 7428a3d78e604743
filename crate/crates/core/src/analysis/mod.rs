//! Diagnostics and Monte Carlo harnesses.

pub mod decomposition;
pub mod harness;
pub mod holder;
pub mod sewing;
pub mod stats;

pub use decomposition::{error_decomposition, ErrorDecomposition};
pub use holder::holder_seminorm;
pub use sewing::{sewing_check, sewing_constant, SewingIncrement};
pub use stats::{ks_critical_value, ks_two_sample, rate_fit, sup_error, RateReport};
