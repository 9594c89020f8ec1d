use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value or randomization range is unusable.
    #[error("configuration error: {0}")]
    Config(String),
    /// A spatial query fell outside the terrain grid.
    #[error("point ({x:.3}, {y:.3}) is outside the terrain extent")]
    OutOfExtent { x: f64, y: f64 },
    /// The integrator produced a non-finite state or another numeric failure.
    #[error("simulation fault: {0}")]
    Fault(String),
    /// The caller broke the episode lifecycle (step after done, bad index, ...).
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub(crate) fn fault(msg: impl Into<String>) -> Self {
        Error::Fault(msg.into())
    }
}
