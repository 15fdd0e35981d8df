use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("eigensolver failed to converge (residual {residual:.3e})")]
    Convergence { residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("ill-conditioned corner submatrix (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
