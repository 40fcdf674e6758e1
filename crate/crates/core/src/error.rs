use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("parameter {param} = {value} is outside the domain of the {family} family")]
    Domain {
        family: &'static str,
        param: &'static str,
        value: f64,
    },

    #[error(
        "no importance sample survived the threshold c = {c} ({m_total} proposals); \
         use a smaller c or a box V that covers the bulk of the density"
    )]
    DegenerateSupport { c: f64, m_total: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("quantile inversion failed: {0}")]
    Inversion(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("simulator error: {0}")]
    Simulator(String),

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
