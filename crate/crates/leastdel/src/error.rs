use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// No 1 was found within the materialization cap. Signals a measure
    /// degenerate toward all-zeros (operationally: the point is not in the
    /// co-countable set the dynamics live on).
    #[error("no 1 found within the materialization cap of {cap} indices")]
    CapExceeded { cap: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("marginal is not a probability pair: p0 = {p0}, p1 = {p1}")]
    InvalidMarginal { p0: String, p1: String },

    #[error("ratio {ratio} at index {index} is not an integer power of base {base}")]
    NotPowerCompatible { ratio: String, index: u64, base: u64 },

    #[error("exact tail computation requested for k = {k}; exact path supports k <= {max}")]
    TooLarge { k: u32, max: u32 },

    #[error("flip index {index} is not covered by a prefix of depth {depth}")]
    IndexOutOfPrefix { index: u64, depth: usize },

    #[error("flip set or domain reaches depth {needed}, but the simple function has depth {depth}")]
    DepthMismatch { needed: usize, depth: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
