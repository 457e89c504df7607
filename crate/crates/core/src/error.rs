use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its legal domain.
    #[error("{key} = {value} is invalid: {domain}")]
    Config {
        key: String,
        value: String,
        domain: String,
    },

    /// Channel or signal lengths do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A threshold or ratio was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bit vector does not match the modulation order.
    #[error("encoding error: expected {expected} bits, got {got}")]
    Encoding { expected: usize, got: usize },

    /// Tag index does not own a slot in the time-division frame.
    #[error("tag {tag} has no slot in a {slots}-slot frame")]
    Assignment { tag: usize, slots: usize },

    /// Lead composite tap too small to anchor the forward-tap recursion.
    #[error("degenerate lead tap: |h(1)| = {magnitude:e} < {epsilon:e}")]
    DegenerateLeadTap { magnitude: f64, epsilon: f64 },

    /// Exhaustive search would exceed the enumeration guard.
    #[error("{combinations} combinations exceed the oracle guard of {limit}")]
    OracleTooLarge { combinations: u128, limit: u128 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(key: &str, value: impl ToString, domain: &str) -> Self {
        Error::Config {
            key: key.to_string(),
            value: value.to_string(),
            domain: domain.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
