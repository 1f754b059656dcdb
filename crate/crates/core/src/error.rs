use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linearization failed: {0}")]
    Linearization(String),

    #[error("Riccati synthesis did not converge (spectral radius of best iterate {spectral_radius:.6})")]
    Synthesis { spectral_radius: f64 },

    #[error("rollout produced a non-finite state at step {step}")]
    Rollout { step: usize },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
