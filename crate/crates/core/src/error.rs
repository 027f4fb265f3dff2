use thiserror::Error;

/// Errors raised by the model, sampler and diagnostics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NngpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("conditional variance {variance:e} of site {site} is not positive (duplicate or numerically singular sites?)")]
    NonPositiveConditionalVariance { site: usize, variance: f64 },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("residual sum of squares is not positive; noise variance cannot be drawn")]
    NonPositiveScale,

    #[error("unbalanced design: {0}")]
    UnbalancedDesign(String),

    #[error("not enough samples: {0}")]
    NotEnoughSamples(String),

    #[error("no retained latent-field samples")]
    MissingLatentSamples,
}

pub type Result<T> = std::result::Result<T, NngpError>;
