use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hurst parameter {hurst} outside {range}")]
    HurstDomain { hurst: f64, range: &'static str },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("{what}: {n} is not divisible by {factor}")]
    Divisibility {
        what: &'static str,
        n: usize,
        factor: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("covariance embedding failed: {0}")]
    Embedding(String),

    #[error("mu density is singular on the diagonal r = r' = {0}")]
    Singular(f64),

    #[error("quadrature for k = {k} did not converge: {first} vs {second}")]
    Quadrature { k: i64, first: f64, second: f64 },

    #[error("matrix is near-singular at node {node} (condition number {condition:.3e})")]
    IllConditioned { node: usize, condition: f64 },

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),

    #[error("reference self-consistency failed: refinement gap {gap:.3e} vs scheme error {error:.3e}")]
    SelfConsistency { gap: f64, error: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("series diverges for mu = {0} (need mu > 1)")]
    Divergent(f64),

    #[error("sewing violation: |R| = {0:.3e} with vanishing delta R")]
    SewingViolation(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_hurst(hurst: f64, lo: f64, hi: f64, range: &'static str) -> Result<()> {
    if hurst.is_finite() && hurst > lo && hurst < hi {
        Ok(())
    } else {
        Err(Error::HurstDomain { hurst, range })
    }
}
