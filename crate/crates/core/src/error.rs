use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point projects with non-positive depth {depth}")]
    Projection { depth: f64 },

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("capacity exceeded: {what} ({got} > {max})")]
    Capacity { what: &'static str, got: u64, max: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no patch candidate fits the prefetch capacity at anchor (h={h}, w={w}, d={d})")]
    InfeasibleCapacity { h: usize, w: usize, d: usize },

    #[error("image assembly: {0}")]
    Assembly(String),

    #[error("weight file: {0}")]
    WeightFile(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
